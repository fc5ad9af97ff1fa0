// spl: command-line driver for the SPL engine.
// Subcommands: parse, validate, explain, run, benchmark, winner.
// Exit codes: 0 clean, 1 lex/parse error, 2 semantic error, 3 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spl/http_adapter.hpp"
#include "spl/spl.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitParseError = 1;
constexpr int kExitSemanticError = 2;
constexpr int kExitRuntimeError = 3;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

struct CommonOptions {
    std::string config_path;
    std::string store_dir;
    std::string adapter;
    long long cache_ttl_seconds = -1;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--config", opts.config_path, "Config file (JSON)");
    cmd->add_option("--store-dir", opts.store_dir,
                    "Store directory (default ./.spl, or $SPL_STORE_DIR)");
    cmd->add_option("--adapter", opts.adapter, "Adapter to use (mock, http)");
    cmd->add_option("--cache-ttl", opts.cache_ttl_seconds,
                    "Enable response caching engine-wide with this TTL (seconds)");
}

spl::Engine make_engine(const CommonOptions& opts) {
    std::optional<std::filesystem::path> config_path;
    if (!opts.config_path.empty()) config_path = opts.config_path;
    spl::EngineConfig config = spl::EngineConfig::discover(config_path);
    if (!opts.store_dir.empty()) config.store_dir = opts.store_dir;
    if (opts.cache_ttl_seconds >= 0) config.cache_ttl_seconds = opts.cache_ttl_seconds;
    if (!opts.adapter.empty()) config.adapter = opts.adapter;

    spl::Engine engine(std::move(config));
    const spl::EngineConfig& cfg = engine.config();

    spl::MockAdapter::Options mock;
    mock.content = cfg.mock.content;
    mock.delay_ms = cfg.mock.latency_ms;
    mock.max_concurrency = cfg.mock.max_concurrency;
    engine.add_adapter("mock", std::make_shared<spl::MockAdapter>(mock));

    if (!cfg.http.base_url.empty()) {
        spl::HttpAdapter::Options http;
        http.base_url = cfg.http.base_url;
        http.api_key_env = cfg.http.api_key_env;
        http.timeout_s = cfg.http.timeout_s;
        http.max_concurrency = cfg.http.max_concurrency;
        engine.add_adapter("http", std::make_shared<spl::HttpAdapter>(http));
    }
    engine.set_primary(cfg.adapter);
    if (!engine.context().adapters.count(cfg.adapter)) {
        throw spl::ConfigError("unknown adapter '" + cfg.adapter +
                               "' (configure http.base_url for the http adapter)");
    }
    return engine;
}

/// Lex + parse, mapping failures onto exit code 1.
std::optional<std::vector<spl::Statement>> parse_file(const std::string& path) {
    std::string source = read_file(path);
    try {
        return spl::parse_program(source);
    } catch (const spl::LexError& e) {
        std::cerr << "error: " << path << ":" << e.line << ":" << e.column << ": " << e.what()
                  << "\n";
        return std::nullopt;
    } catch (const spl::ParseError& e) {
        std::cerr << "error: " << path << ":" << e.line << ":" << e.column << ": " << e.what()
                  << "\n";
        return std::nullopt;
    }
}

void print_diagnostics(const std::vector<spl::Diagnostic>& diags, const std::string& path) {
    for (const auto& d : diags) {
        std::cout << (d.severity == spl::Severity::Error ? "error " : "warning ") << d.code << " "
                  << path << ":" << d.line << ":" << d.column << " " << d.message << "\n";
    }
}

/// Named prompt, or the last PROMPT statement in the file.
const spl::PromptStatement* pick_prompt(const std::vector<spl::Statement>& program,
                                        const std::string& name) {
    const spl::PromptStatement* chosen = nullptr;
    for (const auto& stmt : program) {
        if (const auto* p = std::get_if<spl::PromptStatement>(&stmt)) {
            if (name.empty()) {
                chosen = p;
            } else if (p->name == name) {
                return p;
            }
        }
    }
    if (!name.empty()) return nullptr;
    return chosen;
}

spl::Params collect_params(const std::vector<std::string>& params,
                           const std::vector<std::string>& param_files) {
    spl::Params out;
    auto split = [](const std::string& kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("expected key=value, got '" + kv + "'");
        }
        std::string key = kv.substr(0, eq);
        if (key.rfind("context.", 0) == 0) key = key.substr(8);
        return std::make_pair(key, kv.substr(eq + 1));
    };
    for (const auto& kv : params) {
        auto [key, value] = split(kv);
        out[key] = value;
    }
    for (const auto& kv : param_files) {
        auto [key, path] = split(kv);
        out[key] = read_file(path);
    }
    return out;
}

nlohmann::json plan_to_json(const spl::ExecutionPlan& plan) {
    nlohmann::json doc;
    doc["prompt"] = plan.prompt_name;
    doc["model"] = plan.model;
    doc["budget"] = plan.total_budget;
    doc["output_budget"] = plan.output_budget;
    doc["input_budget"] = plan.input_budget;
    doc["buffer"] = plan.buffer_tokens;
    if (plan.estimated_cost) doc["estimated_cost"] = *plan.estimated_cost;
    doc["warnings"] = plan.warnings;
    auto rows = nlohmann::json::array();
    for (const auto& a : plan.allocations) {
        rows.push_back({{"name", a.name},
                        {"kind", spl::allocation_kind_name(a.kind)},
                        {"estimated_tokens", a.estimated_tokens},
                        {"limit_tokens", a.limit_tokens ? nlohmann::json(*a.limit_tokens)
                                                        : nlohmann::json()},
                        {"allocated_tokens", a.allocated_tokens},
                        {"compression_ratio", a.compression_ratio},
                        {"cache_status", spl::cache_status_name(a.cache_status)},
                        {"priority", a.priority}});
    }
    rows.push_back({{"name", "Output Budget"},
                    {"kind", spl::allocation_kind_name(spl::AllocationKind::Output)},
                    {"allocated_tokens", plan.output_budget}});
    rows.push_back({{"name", "Buffer"},
                    {"kind", spl::allocation_kind_name(spl::AllocationKind::Buffer)},
                    {"allocated_tokens", plan.buffer_tokens}});
    doc["allocations"] = std::move(rows);
    return doc;
}

// --- subcommands -------------------------------------------------------

int cmd_parse(const std::string& file) {
    auto program = parse_file(file);
    if (!program) return kExitParseError;
    for (const auto& stmt : *program) {
        if (const auto* p = std::get_if<spl::PromptStatement>(&stmt)) {
            std::cout << "prompt " << p->name << " (" << p->select_items.size()
                      << " select items, " << p->ctes.size() << " ctes)";
            if (p->benchmark_models) {
                std::cout << " [benchmark models: ";
                for (std::size_t i = 0; i < p->benchmark_models->models.size(); ++i) {
                    if (i) std::cout << ", ";
                    std::cout << p->benchmark_models->models[i];
                }
                if (p->benchmark_models->include_auto) std::cout << " | auto";
                std::cout << "]";
            }
            std::cout << "\n";
        } else if (const auto* f = std::get_if<spl::CreateFunctionStatement>(&stmt)) {
            std::cout << "function " << f->name << "/" << f->params.size() << "\n";
        } else if (const auto* e = std::get_if<spl::ExplainStatement>(&stmt)) {
            std::cout << "explain "
                      << (e->prompt_name ? *e->prompt_name : e->inline_prompt->name) << "\n";
        } else if (const auto* x = std::get_if<spl::ExecuteStatement>(&stmt)) {
            std::cout << "execute " << x->prompt_name << " (" << x->params.size()
                      << " params)\n";
        }
    }
    return kExitOk;
}

int cmd_validate(const std::string& file) {
    auto program = parse_file(file);
    if (!program) return kExitParseError;
    auto diags = spl::analyze(*program);
    print_diagnostics(diags, file);
    return spl::has_errors(diags) ? kExitSemanticError : kExitOk;
}

int cmd_explain(const std::string& file, const std::string& prompt_name, bool as_json,
                const CommonOptions& opts) {
    auto program = parse_file(file);
    if (!program) return kExitParseError;
    auto diags = spl::analyze(*program);
    if (spl::has_errors(diags)) {
        print_diagnostics(diags, file);
        return kExitSemanticError;
    }
    const spl::PromptStatement* prompt = pick_prompt(*program, prompt_name);
    if (!prompt) {
        std::cerr << "error: "
                  << (prompt_name.empty() ? "file defines no PROMPT"
                                          : "unknown prompt '" + prompt_name + "'")
                  << "\n";
        return kExitRuntimeError;
    }
    spl::Engine engine = make_engine(opts);
    spl::Session session(engine.context());
    std::cout << session.explain_prompt(*prompt);
    if (as_json) {
        std::cout << "\n" << plan_to_json(session.plan_prompt(*prompt)).dump(2) << "\n";
    }
    return kExitOk;
}

int cmd_run(const std::string& file, const std::string& prompt_name, const spl::Params& params,
            bool show_plan, bool show_usage, const CommonOptions& opts) {
    auto program = parse_file(file);
    if (!program) return kExitParseError;
    auto diags = spl::analyze(*program);
    print_diagnostics(diags, file);
    if (spl::has_errors(diags)) return kExitSemanticError;

    spl::Engine engine = make_engine(opts);
    spl::Session session(engine.context());

    // Definitions first, then the requested (or last) prompt.
    for (const auto& stmt : *program) {
        if (std::holds_alternative<spl::PromptStatement>(stmt) ||
            std::holds_alternative<spl::CreateFunctionStatement>(stmt)) {
            session.execute(stmt);
        }
    }
    const spl::PromptStatement* prompt = pick_prompt(*program, prompt_name);
    if (!prompt) {
        std::cerr << "error: "
                  << (prompt_name.empty() ? "file defines no PROMPT"
                                          : "unknown prompt '" + prompt_name + "'")
                  << "\n";
        return kExitRuntimeError;
    }
    spl::RunResult result = session.run_prompt(prompt->name, params);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
    if (show_plan) {
        std::cout << spl::render(result.plan) << "\n";
    }
    std::cout << result.content << "\n";
    if (show_usage) {
        std::cout << "-- tokens: " << result.input_tokens << " in, " << result.output_tokens
                  << " out | latency: " << result.latency_ms << " ms | cost: ";
        if (result.actual_cost) {
            std::cout << "$" << spl::money_string(*result.actual_cost);
        } else {
            std::cout << "unavailable";
        }
        std::cout << " | cache: " << (result.cache_hit ? "hit" : "miss") << "\n";
    }
    return kExitOk;
}

int cmd_benchmark(const std::string& file, const std::string& prompt_name,
                  const std::vector<std::string>& models, const std::string& objective_name,
                  const std::string& output_path, bool persist_winner,
                  const std::string& apply_winner_path, const spl::Params& params,
                  const CommonOptions& opts) {
    auto program = parse_file(file);
    if (!program) return kExitParseError;
    auto diags = spl::analyze(*program);
    if (spl::has_errors(diags)) {
        print_diagnostics(diags, file);
        return kExitSemanticError;
    }
    const spl::PromptStatement* prompt = pick_prompt(*program, prompt_name);
    if (!prompt) {
        std::cerr << "error: file defines no PROMPT to benchmark\n";
        return kExitRuntimeError;
    }
    auto objective = spl::objective_from_name(objective_name);
    if (!objective) {
        std::cerr << "error: unknown objective '" << objective_name
                  << "' (fastest, cheapest, token_efficient)\n";
        return kExitRuntimeError;
    }

    spl::Engine engine = make_engine(opts);
    spl::Session session(engine.context());
    for (const auto& stmt : *program) {
        if (std::holds_alternative<spl::CreateFunctionStatement>(stmt)) session.execute(stmt);
    }

    spl::BenchmarkRun spec;
    spec.models = models;
    spec.objective = *objective;
    spec.persist_winner = persist_winner;
    spec.script_name = std::filesystem::path(file).filename().string();
    spec.params = params;
    spl::BenchmarkReport report =
        spl::run_benchmark(*prompt, spec, engine.context(), session.functions());

    std::ofstream out(output_path, std::ios::binary | std::ios::trunc);
    if (!out) {
        std::cerr << "error: cannot write report to " << output_path << "\n";
        return kExitRuntimeError;
    }
    out << spl::to_json(report).dump(2) << "\n";

    std::cout << "model            ok  total_tokens  latency_ms      cost\n";
    for (const auto& r : report.records) {
        char line[128];
        std::snprintf(line, sizeof(line), "%-16s %-3s %12lld %11.1f %9.4f%s\n", r.model.c_str(),
                      r.success ? "yes" : "no", r.total_tokens, r.latency_ms, r.cost,
                      r.error ? ("  " + *r.error).c_str() : "");
        std::cout << line;
    }
    std::cout << "winner (" << report.winner->objective << "): " << report.winner->model << "\n";
    std::cout << "report written to " << output_path << "\n";

    if (!apply_winner_path.empty()) {
        // Patched copy with the winning model substituted; never edits the
        // original in place.
        std::vector<spl::Statement> patched = *program;
        for (auto& stmt : patched) {
            if (auto* p = std::get_if<spl::PromptStatement>(&stmt)) {
                if (p->name == prompt->name) p->model = report.winner->model;
            }
        }
        std::ofstream patched_out(apply_winner_path, std::ios::binary | std::ios::trunc);
        patched_out << spl::to_spl(patched);
        std::cout << "patched copy written to " << apply_winner_path << "\n";
    }
    return kExitOk;
}

int cmd_winner(const std::string& report_path, const std::string& objective_name) {
    auto objective = spl::objective_from_name(objective_name);
    if (!objective) {
        std::cerr << "error: unknown objective '" << objective_name
                  << "' (fastest, cheapest, token_efficient)\n";
        return kExitRuntimeError;
    }
    std::ifstream in(report_path);
    if (!in) {
        std::cerr << "error: cannot open " << report_path << "\n";
        return kExitRuntimeError;
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: invalid report: " << e.what() << "\n";
        return kExitRuntimeError;
    }
    spl::BenchmarkReport report = spl::benchmark_report_from_json(doc);
    std::cout << spl::select_winner(report, *objective) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SPL: declarative prompt language engine"};
    app.require_subcommand(1);

    std::string file, prompt_name, report_path;
    std::string objective = "fastest";
    std::string output_path = "benchmark_report.json";
    std::string apply_winner_path;
    std::vector<std::string> params, param_files, models;
    bool as_json = false, show_plan = false, show_usage = false, persist_winner = false;
    CommonOptions common;

    auto* parse_cmd = app.add_subcommand("parse", "Parse a file and print the statement list");
    parse_cmd->add_option("file", file)->required();

    auto* validate_cmd =
        app.add_subcommand("validate", "Parse and analyze; print diagnostics");
    validate_cmd->add_option("file", file)->required();

    auto* explain_cmd = app.add_subcommand("explain", "Print the token allocation plan");
    explain_cmd->add_option("file", file)->required();
    explain_cmd->add_option("prompt", prompt_name, "Prompt name (default: last in file)");
    explain_cmd->add_flag("--json", as_json, "Also emit the plan as JSON");
    add_common(explain_cmd, common);

    auto* run_cmd = app.add_subcommand("run", "Execute a prompt and print the response");
    run_cmd->add_option("file", file)->required();
    run_cmd->add_option("prompt", prompt_name, "Prompt name (default: last in file)");
    run_cmd->add_option("--param", params, "Bind a context parameter: key=value");
    run_cmd->add_option("--param-file", param_files, "Bind a parameter from a file: key=path");
    run_cmd->add_flag("--show-plan", show_plan, "Print the plan before the response");
    run_cmd->add_flag("--show-usage", show_usage, "Print token/latency/cost after the response");
    add_common(run_cmd, common);

    auto* bench_cmd = app.add_subcommand("benchmark", "Run one prompt across several models");
    bench_cmd->add_option("file", file)->required();
    bench_cmd->add_option("prompt", prompt_name, "Prompt name (default: last in file)");
    bench_cmd->add_option("--models", models, "Model ids (repeat or comma-separate)")
        ->delimiter(',');
    bench_cmd->add_option("--objective", objective, "fastest | cheapest | token_efficient");
    bench_cmd->add_option("--output", output_path, "Report path (JSON)");
    bench_cmd->add_flag("--persist-winner", persist_winner,
                        "Write the winner to memory.best_model");
    bench_cmd->add_option("--apply-winner", apply_winner_path,
                          "Write a copy of the script with USING MODEL set to the winner");
    bench_cmd->add_option("--param", params, "Bind a context parameter: key=value");
    bench_cmd->add_option("--param-file", param_files, "Bind a parameter from a file: key=path");
    add_common(bench_cmd, common);

    auto* winner_cmd = app.add_subcommand("winner", "Select the winner from a benchmark report");
    winner_cmd->add_option("report", report_path)->required();
    winner_cmd->add_option("--objective", objective, "fastest | cheapest | token_efficient");

    CLI11_PARSE(app, argc, argv);

    try {
        if (parse_cmd->parsed()) return cmd_parse(file);
        if (validate_cmd->parsed()) return cmd_validate(file);
        if (explain_cmd->parsed()) return cmd_explain(file, prompt_name, as_json, common);
        if (run_cmd->parsed()) {
            return cmd_run(file, prompt_name, collect_params(params, param_files), show_plan,
                           show_usage, common);
        }
        if (bench_cmd->parsed()) {
            return cmd_benchmark(file, prompt_name, models, objective, output_path,
                                 persist_winner, apply_winner_path,
                                 collect_params(params, param_files), common);
        }
        if (winner_cmd->parsed()) return cmd_winner(report_path, objective);
    } catch (const spl::LexError& e) {
        std::cerr << "error: " << e.line << ":" << e.column << ": " << e.what() << "\n";
        return kExitParseError;
    } catch (const spl::ParseError& e) {
        std::cerr << "error: " << e.line << ":" << e.column << ": " << e.what() << "\n";
        return kExitParseError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntimeError;
    }
    return kExitOk;
}
