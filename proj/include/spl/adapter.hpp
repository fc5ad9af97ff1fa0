#pragma once

#include <algorithm>
#include <chrono>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "spl/planner.hpp"

namespace spl {

enum class FinishReason { Complete, Length, Error };

struct GenerationRequest {
    std::string prompt;
    std::string system;
    std::string model;
    long long max_tokens = 4096;
    double temperature = 0.7;
};

struct GenerationResult {
    std::string content;
    std::string model;
    long long input_tokens = 0;
    long long output_tokens = 0;
    double latency_ms = 0.0;
    FinishReason finish_reason = FinishReason::Complete;
};

/// Error taxonomy that drives retry and fallback: timeouts, exhaustion, and
/// unavailable models are retryable; auth and protocol failures skip the tier.
enum class AdapterErrorKind { Timeout, ModelUnavailable, ResourceExhausted, Protocol, Auth };

inline const char* adapter_error_kind_name(AdapterErrorKind k) {
    switch (k) {
        case AdapterErrorKind::Timeout: return "TIMEOUT";
        case AdapterErrorKind::ModelUnavailable: return "MODEL_UNAVAILABLE";
        case AdapterErrorKind::ResourceExhausted: return "RESOURCE_EXHAUSTED";
        case AdapterErrorKind::Protocol: return "PROTOCOL";
        case AdapterErrorKind::Auth: return "AUTH";
    }
    return "?";
}

inline bool adapter_error_retryable(AdapterErrorKind k) {
    return k == AdapterErrorKind::Timeout || k == AdapterErrorKind::ModelUnavailable ||
           k == AdapterErrorKind::ResourceExhausted;
}

class AdapterError : public std::runtime_error {
public:
    AdapterError(AdapterErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind(kind) {}
    AdapterErrorKind kind;
};

/// Provider-agnostic model access. Adapters must tolerate concurrent
/// generate() calls up to their declared max_concurrency (0 = unbounded);
/// the runtime enforces the cap.
class Adapter {
public:
    virtual ~Adapter() = default;

    virtual std::string name() const = 0;
    virtual GenerationResult generate(const GenerationRequest& request) = 0;
    virtual std::vector<std::string> list_models() const = 0;

    virtual long long count_tokens(std::string_view text, const std::string& /*model*/) const {
        return estimate_tokens(text);
    }

    virtual int max_concurrency() const { return 0; }

    /// Whether this adapter can serve the model id. Adapters with an empty
    /// catalog accept arbitrary ids.
    virtual bool serves_model(const std::string& model) const {
        auto models = list_models();
        if (models.empty()) return true;
        return std::find(models.begin(), models.end(), model) != models.end();
    }
};

// ============================================================
// Mock adapter
// ============================================================

/// Fully deterministic scripted adapter for tests and offline runs. Steps
/// queue ahead of the defaults: each generate() call consumes one step
/// (fault or canned response); when the queue is empty the per-model or
/// global defaults apply.
class MockAdapter : public Adapter {
public:
    struct Step {
        std::optional<AdapterErrorKind> fail;
        std::string content;
        double delay_ms = -1.0;  // <0: use the default delay
    };

    struct Options {
        std::string name = "mock";
        std::string content = "mock response";
        double delay_ms = 0.0;
        std::vector<std::string> models;
        int max_concurrency = 0;
        /// Optional token-counting rule; the heuristic applies when unset.
        TokenCounter counter;
    };

    MockAdapter() : MockAdapter(Options()) {}
    explicit MockAdapter(Options options) : options_(std::move(options)) {}

    std::string name() const override { return options_.name; }

    void script_response(std::string content, double delay_ms = -1.0) {
        std::lock_guard lock(mutex_);
        steps_.push_back(Step{std::nullopt, std::move(content), delay_ms});
    }

    void script_failure(AdapterErrorKind kind, double delay_ms = -1.0) {
        std::lock_guard lock(mutex_);
        steps_.push_back(Step{kind, "", delay_ms});
    }

    void set_model_content(const std::string& model, std::string content, double delay_ms = -1.0) {
        std::lock_guard lock(mutex_);
        model_steps_[model] = Step{std::nullopt, std::move(content), delay_ms};
    }

    GenerationResult generate(const GenerationRequest& request) override {
        auto start = std::chrono::steady_clock::now();
        Step step;
        {
            std::lock_guard lock(mutex_);
            calls_.push_back(request);
            if (!steps_.empty()) {
                step = steps_.front();
                steps_.pop_front();
            } else if (auto it = model_steps_.find(request.model); it != model_steps_.end()) {
                step = it->second;
            } else {
                step = Step{std::nullopt, options_.content, -1.0};
            }
        }
        double delay = step.delay_ms >= 0 ? step.delay_ms : options_.delay_ms;
        if (delay > 0) {
            std::this_thread::sleep_for(
                std::chrono::microseconds(static_cast<long long>(delay * 1000)));
        }
        double elapsed = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - start)
                             .count();
        if (step.fail) {
            throw AdapterError(*step.fail, std::string("scripted ") +
                                               adapter_error_kind_name(*step.fail) + " from " +
                                               options_.name);
        }

        GenerationResult result;
        result.model = request.model;
        result.content = step.content;
        long long content_tokens = count_tokens(result.content, request.model);
        if (content_tokens > request.max_tokens) {
            // Truncate at the cap the way a provider would.
            result.content.resize(static_cast<std::size_t>(request.max_tokens * 4));
            result.finish_reason = FinishReason::Length;
            content_tokens = count_tokens(result.content, request.model);
        }
        result.output_tokens = content_tokens;
        result.input_tokens = count_tokens(request.system, request.model) +
                              count_tokens(request.prompt, request.model);
        result.latency_ms = elapsed;
        return result;
    }

    long long count_tokens(std::string_view text, const std::string& /*model*/) const override {
        if (options_.counter) return text.empty() ? 0 : options_.counter(text);
        return estimate_tokens(text);
    }

    std::vector<std::string> list_models() const override { return options_.models; }

    int max_concurrency() const override { return options_.max_concurrency; }
    void set_max_concurrency(int cap) { options_.max_concurrency = cap; }

    std::size_t call_count() const {
        std::lock_guard lock(mutex_);
        return calls_.size();
    }

    std::vector<GenerationRequest> calls() const {
        std::lock_guard lock(mutex_);
        return calls_;
    }

private:
    Options options_;
    mutable std::mutex mutex_;
    std::deque<Step> steps_;
    std::map<std::string, Step> model_steps_;
    std::vector<GenerationRequest> calls_;
};

}  // namespace spl
