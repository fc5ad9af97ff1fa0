#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "spl/adapter.hpp"
#include "spl/ast.hpp"
#include "spl/lexer.hpp"

namespace spl {

// ============================================================
// Mixture-of-Models routing
// ============================================================

struct RoutingRule {
    std::string category;
    std::vector<std::string> keywords;  // lowercase
    std::string model;
};

struct RoutingTable {
    std::vector<RoutingRule> rules;
    std::string default_model = "llama3.1";

    /// Built-in table: task categories mapped to specialist models, first
    /// matching rule wins.
    static RoutingTable builtin() {
        RoutingTable t;
        t.rules = {
            {"cjk", {"chinese", "japanese", "korean", "kanji", "hanzi", "pinyin", "cjk"},
             "qwen2.5"},
            {"code", {"code", "function", "algorithm", "debug", "program"}, "deepseek-coder"},
            {"math", {"proof", "equation", "theorem", "math", "formal"}, "deepseek-r1"},
            {"reasoning", {"synthesize", "synthesis", "reasoning", "analyst", "review"},
             "claude-opus"},
            {"european", {"german", "french", "spanish", "italian", "translate"}, "mistral"},
        };
        t.default_model = "llama3.1";
        return t;
    }
};

inline std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

/// Text the router scans for domain signals: the GENERATE function name,
/// every string-literal GENERATE argument, and the system role.
inline std::string routing_signal_text(const PromptStatement& prompt) {
    std::string text = prompt.generate.function_name;
    for (const auto& arg : prompt.generate.args) {
        for (const auto& term : arg.terms) {
            if (term.kind == TermKind::String) {
                text += ' ';
                text += term.text;
            }
        }
    }
    for (const auto& item : prompt.select_items) {
        if (item.source.kind == SourceKind::SystemRole) {
            text += ' ';
            text += item.source.text;
        }
    }
    return to_lower(text);
}

/// Resolve `USING MODEL auto` by keyword matching; prompts with a concrete
/// model pass through unchanged. Nested CTE prompts route independently.
inline std::string route(const PromptStatement& prompt, const RoutingTable& table) {
    if (prompt.model && *prompt.model != "auto") return *prompt.model;
    std::string signal = routing_signal_text(prompt);
    for (const auto& rule : table.rules) {
        for (const auto& keyword : rule.keywords) {
            if (signal.find(keyword) != std::string::npos) return rule.model;
        }
    }
    return table.default_model;
}

// ============================================================
// Resilience: retries with backoff, tiered fallback
// ============================================================

struct RetryPolicy {
    int max_attempts_per_adapter = 3;
    double base_delay_ms = 250.0;
    double multiplier = 2.0;
    double jitter_fraction = 0.2;
    /// Adapter names tried in order; empty means "just the given adapter".
    std::vector<std::string> fallback_chain;
};

struct AttemptRecord {
    std::string adapter;
    int attempt = 0;
    std::optional<AdapterErrorKind> error;
    std::string message;
    double delay_before_next_ms = 0.0;
};

class ResilienceExhausted : public std::runtime_error {
public:
    explicit ResilienceExhausted(std::vector<AttemptRecord> attempts)
        : std::runtime_error(describe(attempts)), attempts(std::move(attempts)) {}
    std::vector<AttemptRecord> attempts;

private:
    static std::string describe(const std::vector<AttemptRecord>& attempts) {
        std::string out = "all adapters exhausted after " + std::to_string(attempts.size()) +
                          " attempts";
        if (!attempts.empty() && attempts.back().error) {
            out += "; last error: " +
                   std::string(adapter_error_kind_name(*attempts.back().error)) + " (" +
                   attempts.back().message + ")";
        }
        return out;
    }
};

struct ResilienceHooks {
    /// Sleep implementation; tests substitute a recorder.
    std::function<void(std::chrono::milliseconds)> sleep;
    /// Substitute model for an adapter that does not serve the requested one
    /// (re-route "auto" against that adapter's catalog).
    std::function<std::string(Adapter&)> reroute_model;
    std::uint64_t jitter_seed = 0;
};

using AdapterMap = std::map<std::string, std::shared_ptr<Adapter>>;

/// Walk the fallback chain: up to max_attempts per adapter with exponential
/// backoff between attempts, retrying only retryable error kinds; AUTH and
/// PROTOCOL failures skip straight to the next tier.
inline GenerationResult generate_with_resilience(const GenerationRequest& request,
                                                 const RetryPolicy& policy,
                                                 const AdapterMap& adapters,
                                                 const ResilienceHooks& hooks = {},
                                                 std::vector<AttemptRecord>* attempt_log = nullptr) {
    std::vector<std::string> chain = policy.fallback_chain;
    if (chain.empty()) {
        for (const auto& [name, adapter] : adapters) chain.push_back(name);
    }
    if (chain.empty()) throw std::invalid_argument("no adapters configured");

    auto sleep_fn = hooks.sleep ? hooks.sleep : [](std::chrono::milliseconds d) {
        std::this_thread::sleep_for(d);
    };
    std::mt19937_64 rng(hooks.jitter_seed ? hooks.jitter_seed : std::random_device{}());

    std::vector<AttemptRecord> attempts;
    for (const auto& adapter_name : chain) {
        auto it = adapters.find(adapter_name);
        if (it == adapters.end()) {
            throw std::invalid_argument("fallback chain names unknown adapter '" + adapter_name +
                                        "'");
        }
        Adapter& adapter = *it->second;
        GenerationRequest tier_request = request;
        if (!adapter.serves_model(tier_request.model) && hooks.reroute_model) {
            tier_request.model = hooks.reroute_model(adapter);
        }

        for (int attempt = 1; attempt <= policy.max_attempts_per_adapter; ++attempt) {
            try {
                GenerationResult result = adapter.generate(tier_request);
                if (attempt_log) *attempt_log = std::move(attempts);
                return result;
            } catch (const AdapterError& e) {
                AttemptRecord record{adapter_name, attempt, e.kind, e.what(), 0.0};
                bool retry_same_tier = adapter_error_retryable(e.kind) &&
                                       attempt < policy.max_attempts_per_adapter;
                if (retry_same_tier) {
                    double delay = policy.base_delay_ms *
                                   std::pow(policy.multiplier, attempt - 1);
                    if (policy.jitter_fraction > 0.0) {
                        std::uniform_real_distribution<double> dist(
                            1.0 - policy.jitter_fraction, 1.0 + policy.jitter_fraction);
                        delay *= dist(rng);
                    }
                    record.delay_before_next_ms = delay;
                    attempts.push_back(std::move(record));
                    sleep_fn(std::chrono::milliseconds(static_cast<long long>(delay)));
                } else {
                    attempts.push_back(std::move(record));
                    if (!adapter_error_retryable(e.kind)) break;  // next tier
                }
            }
        }
    }
    if (attempt_log) *attempt_log = attempts;
    throw ResilienceExhausted(std::move(attempts));
}

// ============================================================
// Benchmark report
// ============================================================

enum class BenchmarkObjective { Fastest, Cheapest, TokenEfficient };

inline const char* objective_name(BenchmarkObjective o) {
    switch (o) {
        case BenchmarkObjective::Fastest: return "fastest";
        case BenchmarkObjective::Cheapest: return "cheapest";
        case BenchmarkObjective::TokenEfficient: return "token_efficient";
    }
    return "?";
}

inline std::optional<BenchmarkObjective> objective_from_name(const std::string& name) {
    if (name == "fastest") return BenchmarkObjective::Fastest;
    if (name == "cheapest") return BenchmarkObjective::Cheapest;
    if (name == "token_efficient") return BenchmarkObjective::TokenEfficient;
    return std::nullopt;
}

class BenchmarkError : public std::runtime_error {
public:
    explicit BenchmarkError(const std::string& message) : std::runtime_error(message) {}
};

struct BenchmarkRecord {
    std::string model;
    bool success = false;
    std::string content;
    long long input_tokens = 0;
    long long output_tokens = 0;
    long long total_tokens = 0;
    double latency_ms = 0.0;
    double cost = 0.0;
    std::optional<std::string> error;
    std::string notes;
};

struct BenchmarkWinner {
    std::string model;
    std::string objective;
};

struct BenchmarkReport {
    int schema_version = 1;
    std::string script;
    std::string adapter;
    std::string timestamp;
    std::vector<BenchmarkRecord> records;
    std::optional<BenchmarkWinner> winner;
};

inline nlohmann::json to_json(const BenchmarkReport& report) {
    nlohmann::json doc;
    doc["schema_version"] = report.schema_version;
    doc["script"] = report.script;
    doc["adapter"] = report.adapter;
    doc["timestamp"] = report.timestamp;
    auto records = nlohmann::json::array();
    for (const auto& r : report.records) {
        nlohmann::json rec = {{"model", r.model},
                              {"success", r.success},
                              {"content", r.content},
                              {"input_tokens", r.input_tokens},
                              {"output_tokens", r.output_tokens},
                              {"total_tokens", r.total_tokens},
                              {"latency_ms", r.latency_ms},
                              {"cost", r.cost},
                              {"notes", r.notes}};
        if (r.error) rec["error"] = *r.error;
        records.push_back(std::move(rec));
    }
    doc["records"] = std::move(records);
    if (report.winner) {
        doc["winner"] = {{"model", report.winner->model},
                         {"objective", report.winner->objective}};
    }
    return doc;
}

inline BenchmarkReport benchmark_report_from_json(const nlohmann::json& doc) {
    BenchmarkReport report;
    report.schema_version = doc.value("schema_version", 1);
    report.script = doc.value("script", "");
    report.adapter = doc.value("adapter", "");
    report.timestamp = doc.value("timestamp", "");
    for (const auto& rec : doc.value("records", nlohmann::json::array())) {
        BenchmarkRecord r;
        r.model = rec.value("model", "");
        r.success = rec.value("success", false);
        r.content = rec.value("content", "");
        r.input_tokens = rec.value("input_tokens", 0LL);
        r.output_tokens = rec.value("output_tokens", 0LL);
        r.total_tokens = rec.value("total_tokens", r.input_tokens + r.output_tokens);
        r.latency_ms = rec.value("latency_ms", 0.0);
        r.cost = rec.value("cost", 0.0);
        if (rec.contains("error")) r.error = rec["error"].get<std::string>();
        r.notes = rec.value("notes", "");
        report.records.push_back(std::move(r));
    }
    if (doc.contains("winner")) {
        report.winner = BenchmarkWinner{doc["winner"].value("model", ""),
                                        doc["winner"].value("objective", "")};
    }
    return report;
}

/// Pure argmin over successful records; ties break by model id ascending.
inline std::string select_winner(const BenchmarkReport& report, BenchmarkObjective objective) {
    const BenchmarkRecord* best = nullptr;
    auto metric = [objective](const BenchmarkRecord& r) -> double {
        switch (objective) {
            case BenchmarkObjective::Fastest: return r.latency_ms;
            case BenchmarkObjective::Cheapest: return r.cost;
            case BenchmarkObjective::TokenEfficient:
                return static_cast<double>(r.total_tokens);
        }
        return 0.0;
    };
    for (const auto& r : report.records) {
        if (!r.success) continue;
        if (!best || metric(r) < metric(*best) ||
            (metric(r) == metric(*best) && r.model < best->model)) {
            best = &r;
        }
    }
    if (!best) throw BenchmarkError("benchmark report has no successful records");
    return best->model;
}

}  // namespace spl
