#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "spl/adapter.hpp"
#include "spl/orchestrator.hpp"
#include "spl/planner.hpp"
#include "spl/runtime.hpp"
#include "spl/stores.hpp"

namespace spl {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& message) : std::runtime_error(message) {}
};

// ============================================================
// Defaults
// ============================================================

/// Editable pricing ships as config; these rows are the built-in fallback
/// (per-million input/output rates).
inline PricingTable default_pricing() {
    PricingTable t;
    t.set("gpt-4-legacy", 30.0, 60.0);
    t.set("claude-opus", 15.0, 75.0);
    t.set("claude-sonnet", 3.0, 15.0);
    t.set("claude-sonnet-4-5", 3.0, 15.0);
    t.set("gpt-4o", 2.5, 10.0);
    t.set("gpt-3.5-turbo", 0.5, 1.5);
    t.set("claude-haiku", 0.25, 1.25);
    return t;
}

inline RoutingTable default_routing() { return RoutingTable::builtin(); }

inline PricingTable load_pricing(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open pricing file " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid pricing file " + path.string() + ": " + e.what());
    }
    PricingTable t;
    nlohmann::json models = doc.value("models", nlohmann::json::object());
    for (const auto& [model, entry] : models.items()) {
        t.set(model, entry.value("input_per_million", 0.0),
              entry.value("output_per_million", 0.0));
    }
    return t;
}

inline RoutingTable load_routing(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open routing file " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid routing file " + path.string() + ": " + e.what());
    }
    RoutingTable t;
    t.default_model = doc.value("default_model", "llama3.1");
    for (const auto& rule : doc.value("rules", nlohmann::json::array())) {
        RoutingRule r;
        r.category = rule.value("category", "");
        r.model = rule.value("model", "");
        for (const auto& k : rule.value("keywords", nlohmann::json::array())) {
            r.keywords.push_back(to_lower(k.get<std::string>()));
        }
        t.rules.push_back(std::move(r));
    }
    return t;
}

// ============================================================
// Engine configuration
// ============================================================

struct EngineConfig {
    std::string adapter = "mock";
    std::vector<std::string> fallback_chain;
    std::string default_model;

    struct MockSettings {
        std::string content = "mock response";
        double latency_ms = 0.0;
        int max_concurrency = 0;
    } mock;

    struct HttpSettings {
        std::string base_url;
        std::string api_key_env = "SPL_API_KEY";
        double timeout_s = 120.0;
        int max_concurrency = 0;
    } http;

    OptimizerConfig optimizer;
    RetryPolicy retry;
    std::optional<long long> cache_ttl_seconds;
    std::string pricing_file;
    std::string routing_file;
    std::string store_dir;

    static EngineConfig from_json(const nlohmann::json& doc) {
        EngineConfig c;
        c.adapter = doc.value("adapter", c.adapter);
        c.default_model = doc.value("default_model", c.default_model);
        for (const auto& name : doc.value("fallback", nlohmann::json::array())) {
            c.fallback_chain.push_back(name.get<std::string>());
        }
        if (doc.contains("mock")) {
            const auto& m = doc["mock"];
            c.mock.content = m.value("content", c.mock.content);
            c.mock.latency_ms = m.value("latency_ms", c.mock.latency_ms);
            c.mock.max_concurrency = m.value("max_concurrency", c.mock.max_concurrency);
        }
        if (doc.contains("http")) {
            const auto& h = doc["http"];
            c.http.base_url = h.value("base_url", c.http.base_url);
            c.http.api_key_env = h.value("api_key_env", c.http.api_key_env);
            c.http.timeout_s = h.value("timeout_s", c.http.timeout_s);
            c.http.max_concurrency = h.value("max_concurrency", c.http.max_concurrency);
        }
        if (doc.contains("optimizer")) {
            const auto& o = doc["optimizer"];
            c.optimizer.buffer_fraction = o.value("buffer_fraction", c.optimizer.buffer_fraction);
            c.optimizer.max_compression = o.value("max_compression", c.optimizer.max_compression);
            c.optimizer.default_output_budget =
                o.value("default_output_budget", c.optimizer.default_output_budget);
            c.optimizer.default_budget = o.value("default_budget", c.optimizer.default_budget);
            c.optimizer.rag_estimate = o.value("rag_estimate", c.optimizer.rag_estimate);
            c.optimizer.memory_estimate = o.value("memory_estimate", c.optimizer.memory_estimate);
            c.optimizer.context_estimate =
                o.value("context_estimate", c.optimizer.context_estimate);
        }
        if (doc.contains("retry")) {
            const auto& r = doc["retry"];
            c.retry.max_attempts_per_adapter =
                r.value("max_attempts_per_adapter", c.retry.max_attempts_per_adapter);
            c.retry.base_delay_ms = r.value("base_delay_ms", c.retry.base_delay_ms);
            c.retry.multiplier = r.value("multiplier", c.retry.multiplier);
            c.retry.jitter_fraction = r.value("jitter_fraction", c.retry.jitter_fraction);
        }
        if (doc.contains("cache_ttl_seconds")) {
            c.cache_ttl_seconds = doc["cache_ttl_seconds"].get<long long>();
        }
        c.pricing_file = doc.value("pricing_file", c.pricing_file);
        c.routing_file = doc.value("routing_file", c.routing_file);
        c.store_dir = doc.value("store_dir", c.store_dir);
        return c;
    }

    static EngineConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file " + path.string());
        nlohmann::json doc;
        try {
            in >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("invalid config file " + path.string() + ": " + e.what());
        }
        return from_json(doc);
    }

    /// Discovery order: explicit path, ./.spl/config.json, ~/.spl/config.json,
    /// built-in defaults.
    static EngineConfig discover(const std::optional<std::filesystem::path>& explicit_path) {
        if (explicit_path) return load(*explicit_path);
        std::filesystem::path local = std::filesystem::path(".spl") / "config.json";
        if (std::filesystem::exists(local)) return load(local);
        if (const char* home = std::getenv("HOME")) {
            std::filesystem::path user = std::filesystem::path(home) / ".spl" / "config.json";
            if (std::filesystem::exists(user)) return load(user);
        }
        return EngineConfig{};
    }
};

/// Store directory resolution: CLI flag, then SPL_STORE_DIR, then ./.spl
/// (used when present or creatable), then ~/.spl.
inline std::filesystem::path resolve_store_dir(const std::string& cli_override) {
    if (!cli_override.empty()) return cli_override;
    if (const char* env = std::getenv("SPL_STORE_DIR"); env && *env) return env;
    std::filesystem::path local = ".spl";
    if (std::filesystem::exists(local)) return local;
    std::error_code ec;
    if (std::filesystem::create_directories(local, ec); !ec) return local;
    if (const char* home = std::getenv("HOME")) {
        return std::filesystem::path(home) / ".spl";
    }
    return local;
}

// ============================================================
// Engine: owns stores and adapters, wires the context
// ============================================================

class Engine {
public:
    explicit Engine(EngineConfig config) : config_(std::move(config)) {
        std::filesystem::path dir = resolve_store_dir(config_.store_dir);
        std::filesystem::create_directories(dir);
        memory_ = std::make_unique<MemoryStore>(dir / "memory.json");
        vectors_ = std::make_unique<VectorStore>(dir / "vectors.json");

        context_.memory = memory_.get();
        context_.vectors = vectors_.get();
        context_.optimizer = config_.optimizer;
        context_.retry = config_.retry;
        context_.retry.fallback_chain = config_.fallback_chain;
        context_.default_model = config_.default_model;
        context_.global_cache_ttl_seconds = config_.cache_ttl_seconds;
        context_.pricing = config_.pricing_file.empty() ? default_pricing()
                                                        : load_pricing(config_.pricing_file);
        context_.routing = config_.routing_file.empty() ? default_routing()
                                                        : load_routing(config_.routing_file);
    }

    void add_adapter(const std::string& name, std::shared_ptr<Adapter> adapter) {
        context_.adapters[name] = std::move(adapter);
        if (context_.primary_adapter.empty()) context_.primary_adapter = name;
    }

    void set_primary(const std::string& name) { context_.primary_adapter = name; }

    EngineContext& context() { return context_; }
    const EngineConfig& config() const { return config_; }
    MemoryStore& memory() { return *memory_; }
    VectorStore& vectors() { return *vectors_; }

private:
    EngineConfig config_;
    std::unique_ptr<MemoryStore> memory_;
    std::unique_ptr<VectorStore> vectors_;
    EngineContext context_;
};

}  // namespace spl
