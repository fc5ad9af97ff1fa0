#pragma once

#include <ctime>
#include <mutex>
#include <string>
#include <vector>

#include "spl/orchestrator.hpp"
#include "spl/runtime.hpp"

namespace spl {

inline std::string iso8601_utc(std::chrono::system_clock::time_point tp) {
    std::time_t t = std::chrono::system_clock::to_time_t(tp);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct BenchmarkRun {
    std::vector<std::string> models;  // overrides the prompt's USING MODELS list
    BenchmarkObjective objective = BenchmarkObjective::Fastest;
    bool persist_winner = false;
    std::string script_name;
    Params params;
};

/// Run the identical prompt once per candidate model, fanned out up to the
/// adapter's concurrency cap. Failures are recorded and excluded from winner
/// selection; only a fully failed run raises BenchmarkError.
inline BenchmarkReport run_benchmark(const PromptStatement& prompt, const BenchmarkRun& spec,
                                     EngineContext& ctx, const FunctionRegistry& functions = {}) {
    std::vector<std::string> models = spec.models;
    if (models.empty() && prompt.benchmark_models) {
        models = prompt.benchmark_models->models;
        if (prompt.benchmark_models->include_auto) models.push_back("auto");
    }
    if (models.empty()) {
        throw BenchmarkError("no models to benchmark: pass --models or add a USING MODELS "
                             "directive");
    }

    BenchmarkReport report;
    report.script = !spec.script_name.empty() ? spec.script_name : prompt.name;
    report.adapter = ctx.primary().name();
    report.timestamp = iso8601_utc(ctx.clock());
    report.records.resize(models.size());

    std::vector<std::function<void()>> tasks;
    tasks.reserve(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) {
        tasks.push_back([&, i]() {
            BenchmarkRecord& record = report.records[i];
            record.model = models[i];
            try {
                PromptStatement candidate = prompt;
                candidate.model = models[i];
                RunResult r = run(candidate, spec.params, ctx, functions);
                record.success = true;
                record.content = r.content;
                record.input_tokens = r.input_tokens;
                record.output_tokens = r.output_tokens;
                record.total_tokens = r.input_tokens + r.output_tokens;
                record.latency_ms = r.latency_ms;
                record.cost = r.actual_cost.value_or(0.0);
                if (r.cache_hit) record.notes = "served from cache";
            } catch (const AdapterError& e) {
                record.error = adapter_error_kind_name(e.kind);
                record.notes = e.what();
            } catch (const std::exception& e) {
                record.error = "ERROR";
                record.notes = e.what();
            }
        });
    }
    run_parallel(std::move(tasks), ctx.primary().max_concurrency());

    std::string winner = select_winner(report, spec.objective);  // throws when all failed
    report.winner = BenchmarkWinner{winner, objective_name(spec.objective)};
    if (spec.persist_winner && ctx.memory) {
        ctx.memory->put("best_model", winner);
    }
    return report;
}

}  // namespace spl
