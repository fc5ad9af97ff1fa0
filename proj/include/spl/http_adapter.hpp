#pragma once

#include <chrono>
#include <cstdlib>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "spl/adapter.hpp"

namespace spl {

/// Generic chat-completions HTTP adapter. Speaks the de-facto wire shape
/// (POST /v1/chat/completions with system+user messages; usage block in the
/// response) used by aggregators and local model servers alike. Field names
/// are pinned in docs/http_adapter.md and by the stub-server tests.
class HttpAdapter : public Adapter {
public:
    struct Options {
        std::string name = "http";
        std::string base_url;                      // e.g. http://localhost:8080
        std::string api_key_env = "SPL_API_KEY";   // credentials come from the environment
        double timeout_s = 120.0;
        int max_concurrency = 0;
        std::string completions_path = "/v1/chat/completions";
        std::string models_path = "/v1/models";
    };

    explicit HttpAdapter(Options options) : options_(std::move(options)) {}

    std::string name() const override { return options_.name; }

    GenerationResult generate(const GenerationRequest& request) override {
        nlohmann::json body;
        body["model"] = request.model;
        auto messages = nlohmann::json::array();
        if (!request.system.empty()) {
            messages.push_back({{"role", "system"}, {"content", request.system}});
        }
        messages.push_back({{"role", "user"}, {"content", request.prompt}});
        body["messages"] = std::move(messages);
        body["max_tokens"] = request.max_tokens;
        body["temperature"] = request.temperature;

        auto start = std::chrono::steady_clock::now();
        httplib::Client client(options_.base_url);
        configure(client);
        auto res = client.Post(options_.completions_path, body.dump(), "application/json");
        double elapsed =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                .count();

        if (!res) throw_transport_error(res.error());
        check_status(res->status);

        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw AdapterError(AdapterErrorKind::Protocol,
                               std::string("malformed response body: ") + e.what());
        }
        if (!doc.contains("choices") || doc["choices"].empty() ||
            !doc["choices"][0].contains("message")) {
            throw AdapterError(AdapterErrorKind::Protocol,
                               "response is missing choices[0].message");
        }

        GenerationResult result;
        result.model = doc.value("model", request.model);
        result.content = doc["choices"][0]["message"].value("content", "");
        std::string finish = doc["choices"][0].value("finish_reason", "stop");
        result.finish_reason =
            finish == "length" ? FinishReason::Length : FinishReason::Complete;
        if (doc.contains("usage")) {
            result.input_tokens = doc["usage"].value("prompt_tokens", 0LL);
            result.output_tokens = doc["usage"].value("completion_tokens", 0LL);
        } else {
            // Providers that omit usage get the estimation heuristic.
            result.input_tokens = count_tokens(request.system, request.model) +
                                  count_tokens(request.prompt, request.model);
            result.output_tokens = count_tokens(result.content, request.model);
        }
        result.latency_ms = elapsed;
        return result;
    }

    std::vector<std::string> list_models() const override {
        httplib::Client client(options_.base_url);
        configure(client);
        auto res = client.Get(options_.models_path);
        if (!res) throw_transport_error(res.error());
        check_status(res->status);
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw AdapterError(AdapterErrorKind::Protocol,
                               std::string("malformed model catalog: ") + e.what());
        }
        std::vector<std::string> models;
        for (const auto& entry : doc.value("data", nlohmann::json::array())) {
            models.push_back(entry.value("id", ""));
        }
        return models;
    }

    /// The catalog endpoint is optional on many servers; accept any model id.
    bool serves_model(const std::string&) const override { return true; }

    int max_concurrency() const override { return options_.max_concurrency; }

private:
    Options options_;

    void configure(httplib::Client& client) const {
        auto seconds = static_cast<time_t>(options_.timeout_s);
        auto micros = static_cast<time_t>((options_.timeout_s - static_cast<double>(seconds)) * 1e6);
        client.set_connection_timeout(seconds, micros);
        client.set_read_timeout(seconds, micros);
        client.set_write_timeout(seconds, micros);
        if (const char* key = std::getenv(options_.api_key_env.c_str()); key && *key) {
            client.set_default_headers({{"Authorization", std::string("Bearer ") + key}});
        }
    }

    [[noreturn]] static void throw_transport_error(httplib::Error error) {
        switch (error) {
            case httplib::Error::ConnectionTimeout:
            case httplib::Error::Read:
            case httplib::Error::Write:
                throw AdapterError(AdapterErrorKind::Timeout,
                                   "request timed out: " + httplib::to_string(error));
            case httplib::Error::Connection:
                throw AdapterError(AdapterErrorKind::ModelUnavailable,
                                   "cannot reach server: " + httplib::to_string(error));
            default:
                throw AdapterError(AdapterErrorKind::Protocol,
                                   "transport failure: " + httplib::to_string(error));
        }
    }

    static void check_status(int status) {
        if (status >= 200 && status < 300) return;
        if (status == 401 || status == 403) {
            throw AdapterError(AdapterErrorKind::Auth,
                               "authentication rejected (HTTP " + std::to_string(status) + ")");
        }
        if (status == 404) {
            throw AdapterError(AdapterErrorKind::ModelUnavailable,
                               "model or endpoint not found (HTTP 404)");
        }
        if (status == 408) {
            throw AdapterError(AdapterErrorKind::Timeout, "server reported timeout (HTTP 408)");
        }
        if (status == 429) {
            throw AdapterError(AdapterErrorKind::ResourceExhausted, "rate limited (HTTP 429)");
        }
        if (status == 503) {
            throw AdapterError(AdapterErrorKind::ModelUnavailable,
                               "service unavailable (HTTP 503)");
        }
        throw AdapterError(AdapterErrorKind::Protocol,
                           "unexpected HTTP status " + std::to_string(status));
    }
};

}  // namespace spl
