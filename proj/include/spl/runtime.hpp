#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "spl/analyzer.hpp"
#include "spl/ast.hpp"
#include "spl/explain.hpp"
#include "spl/fanout.hpp"
#include "spl/orchestrator.hpp"
#include "spl/planner.hpp"
#include "spl/printer.hpp"
#include "spl/sha256.hpp"
#include "spl/stores.hpp"

namespace spl {

class RunError : public std::runtime_error {
public:
    explicit RunError(const std::string& message) : std::runtime_error(message) {}
};

// ============================================================
// Token-aware truncation
// ============================================================

/// Cut text down to at most max_tokens, preferring the last whitespace
/// boundary at or below the cap; falls back to an exact cut when the prefix
/// has no whitespace. Counting uses the supplied counter (heuristic default).
inline std::string truncate_to_tokens(std::string_view text, long long max_tokens,
                                      const TokenCounter& counter = nullptr) {
    if (max_tokens <= 0) return "";
    if (estimate_tokens(text, counter) <= max_tokens) return std::string(text);

    // Largest prefix within the cap, by binary search over prefix length.
    std::size_t lo = 0, hi = text.size();
    while (lo < hi) {
        std::size_t mid = (lo + hi + 1) / 2;
        if (estimate_tokens(text.substr(0, mid), counter) <= max_tokens) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    std::string_view prefix = text.substr(0, lo);
    // Back off to the last whitespace only when the cut landed mid-word.
    bool mid_word = lo < text.size() &&
                    !std::isspace(static_cast<unsigned char>(text[lo])) && !prefix.empty() &&
                    !std::isspace(static_cast<unsigned char>(prefix.back()));
    if (mid_word) {
        std::size_t cut = prefix.find_last_of(" \t\n\r");
        if (cut != std::string_view::npos && cut > 0) prefix = prefix.substr(0, cut);
    }
    while (!prefix.empty() && std::isspace(static_cast<unsigned char>(prefix.back()))) {
        prefix.remove_suffix(1);
    }
    return std::string(prefix);
}

// ============================================================
// User-defined functions
// ============================================================

struct FunctionRegistry {
    std::map<std::string, CreateFunctionStatement> functions;

    const CreateFunctionStatement* find(const std::string& name) const {
        auto it = functions.find(name);
        return it == functions.end() ? nullptr : &it->second;
    }
};

struct FunctionBody {
    std::string selected_param;
    std::optional<std::string> limit_param;
    std::optional<long long> limit_literal;
};

/// Validate and decode the supported function-body subset:
///   SELECT <param> [LIMIT <param|integer> TOKENS]
/// Anything else is rejected when the function is created.
inline FunctionBody parse_function_body(const CreateFunctionStatement& fn) {
    std::vector<SourceToken> tokens;
    try {
        tokens = tokenize(fn.body_text);
    } catch (const LexError& e) {
        throw RunError("unsupported body in function '" + fn.name + "': " + e.what());
    }
    auto fail = [&]() -> RunError {
        return RunError("unsupported body in function '" + fn.name +
                        "': only 'SELECT <param> [LIMIT <param|integer> TOKENS]' is supported");
    };
    std::size_t i = 0;
    auto at_kw = [&](const char* kw) {
        return tokens[i].kind == TokenKind::Keyword && tokens[i].keyword == kw;
    };
    if (!at_kw("SELECT")) throw fail();
    ++i;
    if (tokens[i].kind != TokenKind::Ident) throw fail();
    FunctionBody body;
    body.selected_param = tokens[i].text;
    ++i;
    if (at_kw("LIMIT")) {
        ++i;
        if (tokens[i].kind == TokenKind::Ident) {
            body.limit_param = tokens[i].text;
        } else if (tokens[i].kind == TokenKind::Integer) {
            body.limit_literal = std::stoll(tokens[i].text);
        } else {
            throw fail();
        }
        ++i;
        if (!at_kw("TOKENS")) throw fail();
        ++i;
    }
    if (tokens[i].kind != TokenKind::Eof) throw fail();

    bool param_known = false;
    for (const auto& p : fn.params) param_known |= p.name == body.selected_param;
    if (!param_known) {
        throw RunError("function '" + fn.name + "' selects unknown parameter '" +
                       body.selected_param + "'");
    }
    if (body.limit_param) {
        bool limit_known = false;
        for (const auto& p : fn.params) limit_known |= p.name == *body.limit_param;
        if (!limit_known) {
            throw RunError("function '" + fn.name + "' uses unknown limit parameter '" +
                           *body.limit_param + "'");
        }
    }
    return body;
}

/// Interpret a registered function against positional argument values.
inline std::string apply_function(const CreateFunctionStatement& fn,
                                  const std::vector<std::string>& args,
                                  const TokenCounter& counter = nullptr) {
    if (args.size() != fn.params.size()) {
        throw RunError("function '" + fn.name + "' expects " + std::to_string(fn.params.size()) +
                       " arguments, got " + std::to_string(args.size()));
    }
    FunctionBody body = parse_function_body(fn);
    std::map<std::string, std::string> bound;
    for (std::size_t i = 0; i < args.size(); ++i) bound[fn.params[i].name] = args[i];

    const std::string& text = bound[body.selected_param];
    std::optional<long long> limit = body.limit_literal;
    if (body.limit_param) {
        const std::string& raw = bound[*body.limit_param];
        try {
            limit = std::stoll(raw);
        } catch (const std::exception&) {
            throw RunError("function '" + fn.name + "' limit argument '" + raw +
                           "' is not an integer");
        }
    }
    if (!limit) return text;
    return truncate_to_tokens(text, *limit, counter);
}

// ============================================================
// Engine context
// ============================================================

using Params = std::map<std::string, std::string>;

struct EngineContext {
    MemoryStore* memory = nullptr;
    VectorStore* vectors = nullptr;
    AdapterMap adapters;
    std::string primary_adapter;
    RetryPolicy retry;
    RoutingTable routing = RoutingTable::builtin();
    OptimizerConfig optimizer;
    PricingTable pricing;
    /// Model used when a prompt declares none; empty means route as "auto".
    std::string default_model;
    std::optional<long long> global_cache_ttl_seconds;
    Clock clock = system_clock_source();
    ResilienceHooks hooks;
    int rag_default_top_k = 5;

    Adapter& primary() const {
        auto it = adapters.find(primary_adapter);
        if (it == adapters.end()) {
            throw RunError("no adapter named '" + primary_adapter + "' is configured");
        }
        return *it->second;
    }
};

struct RunResult {
    std::string content;
    ExecutionPlan plan;
    long long input_tokens = 0;
    long long output_tokens = 0;
    double latency_ms = 0.0;
    std::optional<double> actual_cost;
    bool cache_hit = false;
    std::map<std::string, RunResult> cte_results;
    std::vector<std::string> warnings;
};

struct ResolvedSource {
    std::string name;
    AllocationKind kind = AllocationKind::Context;
    std::string text;
    long long final_tokens = 0;
    std::vector<ScoredDocument> docs;
};

inline long long cache_ttl_seconds(const CacheTtl& ttl) {
    std::string unit = to_upper(ttl.unit);
    if (unit == "SECONDS") return ttl.count;
    if (unit == "MINUTES") return ttl.count * 60;
    if (unit == "HOURS") return ttl.count * 3600;
    if (unit == "DAYS") return ttl.count * 86400;
    throw RunError("unsupported CACHE FOR unit '" + ttl.unit + "'");
}

// ============================================================
// Prompt assembly
// ============================================================

struct AssembledPrompt {
    std::string system;
    std::string user;
};

namespace detail {

inline std::string task_arg_text(const Term& t);

inline std::string task_expr_text(const Expression& e) {
    std::string out = task_arg_text(e.terms[0]);
    for (std::size_t i = 0; i < e.ops.size(); ++i) {
        out += std::string(" ") + e.ops[i] + " ";
        out += task_arg_text(e.terms[i + 1]);
    }
    return out;
}

inline std::string task_arg_text(const Term& t) {
    switch (t.kind) {
        case TermKind::Name: {
            std::string out;
            for (std::size_t i = 0; i < t.path.size(); ++i) {
                if (i > 0) out += ".";
                out += t.path[i];
            }
            return out;
        }
        case TermKind::String: return t.text;  // instruction strings pass through verbatim
        case TermKind::Integer: return std::to_string(t.int_value);
        case TermKind::Float: return float_literal(t.float_value);
        case TermKind::Param: return "@" + t.text;
        case TermKind::Call: {
            std::string out = t.text + "(";
            for (std::size_t i = 0; i < t.args.size(); ++i) {
                if (i > 0) out += ", ";
                out += task_expr_text(t.args[i]);
            }
            return out + ")";
        }
    }
    return "";
}

}  // namespace detail

/// Deterministic prompt assembly: one `### <alias>` section per non-system
/// source in plan order, then the task line naming the generation function
/// and its arguments, then the format instruction when declared. The format
/// is pinned by golden files.
inline AssembledPrompt assemble_prompt(const std::vector<ResolvedSource>& sources,
                                       const GenerateClause& generate) {
    AssembledPrompt out;
    for (const auto& src : sources) {
        if (src.kind == AllocationKind::SystemRole) {
            out.system = src.text;
            continue;
        }
        out.user += "### " + src.name + "\n";
        out.user += src.text;
        out.user += "\n\n";
    }
    out.user += "Task: " + generate.function_name + "(";
    for (std::size_t i = 0; i < generate.args.size(); ++i) {
        if (i > 0) out.user += ", ";
        out.user += detail::task_expr_text(generate.args[i]);
    }
    out.user += ")";
    if (generate.format) {
        out.user += "\nRespond in " + *generate.format + " format.";
    }
    out.user += "\n";
    return out;
}

// ============================================================
// Execution
// ============================================================

namespace detail {

inline std::optional<std::string> literal_text(const Expression& e) {
    if (!e.single_term()) return std::nullopt;
    const Term& t = e.terms[0];
    switch (t.kind) {
        case TermKind::String: return t.text;
        case TermKind::Integer: return std::to_string(t.int_value);
        case TermKind::Float: return float_literal(t.float_value);
        default: return std::nullopt;
    }
}

struct DocFilter {
    const WhereClause* where = nullptr;
    const std::vector<OrderItem>* order_by = nullptr;

    static std::optional<std::pair<std::string, std::string>> alias_attr(const Expression& e) {
        if (!e.is_name()) return std::nullopt;
        const auto& path = e.terms[0].path;
        if (path.size() != 2) return std::nullopt;
        return std::make_pair(path[0], path[1]);
    }

    static bool compare_double(double lhs, Comparator cmp, double rhs) {
        switch (cmp) {
            case Comparator::Eq: return lhs == rhs;
            case Comparator::Neq: return lhs != rhs;
            case Comparator::Gt: return lhs > rhs;
            case Comparator::Lt: return lhs < rhs;
            case Comparator::Gte: return lhs >= rhs;
            case Comparator::Lte: return lhs <= rhs;
            case Comparator::In: return false;
        }
        return false;
    }

    static bool compare_string(const std::string& lhs, Comparator cmp, const std::string& rhs) {
        switch (cmp) {
            case Comparator::Eq: return lhs == rhs;
            case Comparator::Neq: return lhs != rhs;
            case Comparator::Gt: return lhs > rhs;
            case Comparator::Lt: return lhs < rhs;
            case Comparator::Gte: return lhs >= rhs;
            case Comparator::Lte: return lhs <= rhs;
            case Comparator::In: return false;
        }
        return false;
    }

    static bool eval_condition(const Condition& c, const std::string& alias,
                               const ScoredDocument& doc, bool& relevant) {
        auto lhs = alias_attr(c.lhs);
        if (!lhs || lhs->first != alias) {
            relevant = false;
            return true;  // conditions on other sources are neutral here
        }
        relevant = true;
        const std::string& attr = lhs->second;
        if (c.cmp == Comparator::In) {
            for (const auto& e : c.in_list) {
                auto v = literal_text(e);
                if (!v) continue;
                if (attr == "id" && doc.id == *v) return true;
                if (attr == "text" && doc.text == *v) return true;
                if (attr == "relevance") {
                    try {
                        if (doc.relevance == std::stod(*v)) return true;
                    } catch (const std::exception&) {
                    }
                }
            }
            return false;
        }
        const Term& rhs = c.rhs.terms[0];
        if (attr == "relevance") {
            double value = rhs.kind == TermKind::Float     ? rhs.float_value
                           : rhs.kind == TermKind::Integer ? static_cast<double>(rhs.int_value)
                                                           : 0.0;
            return compare_double(doc.relevance, c.cmp, value);
        }
        std::string value = rhs.kind == TermKind::String ? rhs.text : "";
        if (attr == "id") return compare_string(doc.id, c.cmp, value);
        if (attr == "text") return compare_string(doc.text, c.cmp, value);
        return true;
    }

    /// Filtering never reorders: survivors keep their incoming order.
    std::vector<ScoredDocument> apply(const std::string& alias,
                                      std::vector<ScoredDocument> docs) const {
        if (where) {
            std::vector<ScoredDocument> kept;
            kept.reserve(docs.size());
            for (const auto& doc : docs) {
                bool verdict = true;
                bool any_relevant = false;
                for (std::size_t i = 0; i < where->conditions.size(); ++i) {
                    bool relevant = false;
                    bool value = eval_condition(where->conditions[i], alias, doc, relevant);
                    any_relevant |= relevant;
                    if (i == 0) {
                        verdict = value;
                    } else if (where->or_connective[i - 1]) {
                        verdict = verdict || value;
                    } else {
                        verdict = verdict && value;
                    }
                }
                if (!any_relevant || verdict) kept.push_back(doc);
            }
            docs = std::move(kept);
        }
        if (order_by) {
            for (const auto& item : *order_by) {
                auto path = alias_attr(item.expr);
                if (!path || path->first != alias) continue;
                const std::string attr = path->second;
                bool desc = item.descending;
                std::stable_sort(docs.begin(), docs.end(),
                                 [&](const ScoredDocument& a, const ScoredDocument& b) {
                                     if (attr == "relevance") {
                                         return desc ? a.relevance > b.relevance
                                                     : a.relevance < b.relevance;
                                     }
                                     if (attr == "id") return desc ? a.id > b.id : a.id < b.id;
                                     return desc ? a.text > b.text : a.text < b.text;
                                 });
                break;
            }
        }
        return docs;
    }
};

}  // namespace detail

RunResult run(const PromptStatement& prompt, const Params& params, EngineContext& ctx,
              const FunctionRegistry& functions);

namespace detail {

/// Resolve one select-body item to text (select-form CTEs and outer items
/// share this path).
inline ResolvedSource resolve_item(const SelectItem& item, const PromptStatement& prompt,
                                   const Params& params,
                                   const std::map<std::string, std::string>& cte_text,
                                   const std::map<std::string, std::string>& resolved_aliases,
                                   EngineContext& ctx, const FunctionRegistry& functions,
                                   const TokenCounter& counter,
                                   std::vector<std::string>& warnings,
                                   bool apply_item_limit = false) {
    ResolvedSource out;
    out.name = item.display_name();
    std::set<std::string> cte_names;
    for (const auto& cte : prompt.ctes) cte_names.insert(cte.name);
    out.kind = plan_allocation_kind(item, cte_names);

    const SourceExpr& src = item.source;
    auto eval_arg = [&](const Expression& e) -> std::string {
        std::string joined;
        for (std::size_t i = 0; i < e.terms.size(); ++i) {
            if (i > 0 && e.ops[i - 1] == '-') {
                throw RunError("'-' is not defined for text arguments");
            }
            const Term& t = e.terms[i];
            switch (t.kind) {
                case TermKind::String: joined += t.text; break;
                case TermKind::Integer: joined += std::to_string(t.int_value); break;
                case TermKind::Float: joined += float_literal(t.float_value); break;
                case TermKind::Param: {
                    auto p = params.find(t.text);
                    if (p == params.end()) throw RunError("missing parameter @" + t.text);
                    joined += p->second;
                    break;
                }
                case TermKind::Name: {
                    const std::string& head = t.path.front();
                    if (auto a = resolved_aliases.find(head); a != resolved_aliases.end()) {
                        joined += a->second;
                    } else if (auto c = cte_text.find(head); c != cte_text.end()) {
                        joined += c->second;
                    } else if (head == "context" && t.path.size() == 2) {
                        auto p = params.find(t.path[1]);
                        if (p == params.end()) {
                            throw RunError("missing parameter context." + t.path[1]);
                        }
                        joined += p->second;
                    } else {
                        throw RunError("cannot resolve name '" + head + "' in argument");
                    }
                    break;
                }
                case TermKind::Call:
                    throw RunError("nested function calls in arguments are not supported");
            }
        }
        return joined;
    };

    switch (src.kind) {
        case SourceKind::SystemRole:
            out.text = src.text;
            break;
        case SourceKind::Context: {
            if (auto c = cte_text.find(src.text); c != cte_text.end()) {
                out.text = c->second;  // CTE outputs shadow externally supplied fields
                break;
            }
            auto p = params.find(src.text);
            if (p == params.end()) {
                throw RunError("missing parameter context." + src.text);
            }
            out.text = p->second;
            break;
        }
        case SourceKind::NameRef: {
            if (auto c = cte_text.find(src.text); c != cte_text.end()) {
                out.text = c->second;
                break;
            }
            throw RunError("cannot resolve source '" + src.text + "'");
        }
        case SourceKind::Memory: {
            auto key = literal_text(src.memory_key);
            if (!key) throw RunError("memory.get requires a string key");
            if (!ctx.memory) {
                warnings.push_back("no memory store configured; '" + out.name + "' is empty");
                break;
            }
            auto value = ctx.memory->get(*key);
            if (!value) {
                warnings.push_back("memory key '" + *key + "' not found; '" + out.name +
                                   "' is empty");
                break;
            }
            out.text = value->value;
            break;
        }
        case SourceKind::Rag: {
            auto query = literal_text(src.rag_query);
            if (!query) throw RunError("rag.query requires a string argument");
            int top_k = ctx.rag_default_top_k;
            if (src.rag_top_k && src.rag_top_k->is_integer_literal()) {
                top_k = static_cast<int>(src.rag_top_k->terms[0].int_value);
            }
            if (!ctx.vectors) {
                warnings.push_back("no vector store configured; '" + out.name + "' is empty");
                break;
            }
            out.docs = ctx.vectors->query(*query, top_k);
            detail::DocFilter filter{prompt.where ? &*prompt.where : nullptr, &prompt.order_by};
            out.docs = filter.apply(out.name, std::move(out.docs));
            std::string joined;
            for (std::size_t i = 0; i < out.docs.size(); ++i) {
                if (i > 0) joined += "\n\n";
                joined += out.docs[i].text;
            }
            out.text = std::move(joined);
            break;
        }
        case SourceKind::FunctionCall: {
            const CreateFunctionStatement* fn = functions.find(src.text);
            if (!fn) throw RunError("call to undeclared function '" + src.text + "'");
            std::vector<std::string> args;
            args.reserve(src.args.size());
            for (const auto& arg : src.args) args.push_back(eval_arg(arg));
            out.text = apply_function(*fn, args, counter);
            break;
        }
    }
    if (apply_item_limit && item.limit_tokens) {
        out.text = truncate_to_tokens(out.text, *item.limit_tokens, counter);
    }
    out.final_tokens = estimate_tokens(out.text, counter);
    return out;
}

inline std::string run_select_body_cte(const CteClause& cte, const PromptStatement& outer,
                                       const Params& params, EngineContext& ctx,
                                       const FunctionRegistry& functions,
                                       const TokenCounter& counter,
                                       std::vector<std::string>& warnings) {
    const SelectBody& body = *cte.select;
    PromptStatement shim;
    shim.name = cte.name;
    shim.where = body.where;
    std::string joined;
    std::map<std::string, std::string> no_ctes;
    std::map<std::string, std::string> aliases;
    auto append = [&](const SelectItem& item) {
        ResolvedSource r = resolve_item(item, shim, params, no_ctes, aliases, ctx, functions,
                                        counter, warnings, /*apply_item_limit=*/true);
        aliases[r.name] = r.text;
        if (!joined.empty()) joined += "\n\n";
        joined += r.text;
    };
    for (const auto& item : body.items) append(item);
    if (body.from) {
        // FROM is a plain additional source reference.
        SelectItem from_item;
        from_item.source = body.from->source;
        from_item.alias = body.from->alias;
        append(from_item);
    }
    (void)outer;
    if (body.limit_tokens) joined = truncate_to_tokens(joined, *body.limit_tokens, counter);
    return joined;
}

}  // namespace detail

/// Execute one prompt end to end: run CTEs (nested prompts fan out in
/// parallel up to the adapter's concurrency cap), resolve and filter
/// sources, plan, truncate to allocations, consult the response cache,
/// assemble and dispatch the prompt, persist STORE RESULT.
inline RunResult run(const PromptStatement& prompt, const Params& params, EngineContext& ctx,
                     const FunctionRegistry& functions = {}) {
    RunResult result;

    // Model resolution; "auto" routes on the prompt's own signal text.
    std::string declared = prompt.model.value_or(
        ctx.default_model.empty() ? std::string("auto") : ctx.default_model);
    std::string model = declared == "auto" ? route(prompt, ctx.routing) : declared;

    Adapter& adapter = ctx.primary();
    TokenCounter counter = [&adapter, model](std::string_view text) {
        return adapter.count_tokens(text, model);
    };

    // CTE phase. Nested prompts run independently and in parallel; their
    // outputs bind into this prompt's scope before outer resolution starts.
    std::map<std::string, std::string> cte_text;
    std::mutex cte_mutex;
    std::vector<std::function<void()>> cte_tasks;
    for (const auto& cte : prompt.ctes) {
        if (cte.is_prompt()) {
            cte_tasks.push_back([&, cte_ptr = cte.prompt, name = cte.name]() {
                PromptStatement child = *cte_ptr;
                if (!child.model) child.model = prompt.model;
                RunResult child_result = run(child, params, ctx, functions);
                std::lock_guard lock(cte_mutex);
                cte_text[name] = child_result.content;
                result.cte_results[name] = std::move(child_result);
            });
        } else {
            cte_tasks.push_back([&, &cte = cte]() {
                std::vector<std::string> local_warnings;
                std::string text = detail::run_select_body_cte(cte, prompt, params, ctx,
                                                               functions, counter,
                                                               local_warnings);
                std::lock_guard lock(cte_mutex);
                cte_text[cte.name] = std::move(text);
                for (auto& w : local_warnings) result.warnings.push_back(std::move(w));
            });
        }
    }
    run_parallel(std::move(cte_tasks), adapter.max_concurrency());

    // Resolve outer sources: plain items first, then function calls so their
    // arguments can reference earlier aliases.
    std::map<std::string, ResolvedSource> resolved;
    std::map<std::string, std::string> alias_text;
    auto resolve_pass = [&](bool function_pass) {
        for (const auto& item : prompt.select_items) {
            bool is_fn = item.source.kind == SourceKind::FunctionCall;
            if (is_fn != function_pass) continue;
            ResolvedSource r = detail::resolve_item(item, prompt, params, cte_text, alias_text,
                                                    ctx, functions, counter, result.warnings);
            alias_text[r.name] = r.text;
            resolved[r.name] = std::move(r);
        }
    };
    resolve_pass(false);
    resolve_pass(true);

    // Plan against measured estimates.
    PlanInputs inputs;
    inputs.model_override = model;
    for (const auto& [name, src] : resolved) inputs.estimates[name] = src.final_tokens;
    result.plan = plan(prompt, ctx.optimizer, ctx.pricing, inputs);
    for (const auto& w : result.plan.warnings) result.warnings.push_back(w);

    // Truncate to allocations, in plan order.
    std::vector<ResolvedSource> sources;
    sources.reserve(result.plan.allocations.size());
    for (const auto& alloc : result.plan.allocations) {
        ResolvedSource src = resolved.at(alloc.name);
        src.text = truncate_to_tokens(src.text, alloc.allocated_tokens, counter);
        src.final_tokens = estimate_tokens(src.text, counter);
        sources.push_back(std::move(src));
    }

    AssembledPrompt assembled = assemble_prompt(sources, prompt.generate);

    // Response cache.
    std::optional<long long> ttl;
    if (prompt.cache_ttl) {
        ttl = cache_ttl_seconds(*prompt.cache_ttl);
    } else if (ctx.global_cache_ttl_seconds) {
        ttl = ctx.global_cache_ttl_seconds;
    }
    bool caching = ttl.has_value() && ctx.memory != nullptr;
    std::string prompt_hash;
    if (caching) {
        std::string key = assembled.user + "\x1e" + assembled.system + "\x1e" + model + "\x1e" +
                          float_literal(prompt.generate.temperature.value_or(0.7)) + "\x1e" +
                          std::to_string(result.plan.output_budget) + "\x1e" +
                          prompt.generate.format.value_or("");
        prompt_hash = sha256_hex(key);
        if (auto entry = ctx.memory->cache_lookup(prompt_hash)) {
            result.content = entry->response;
            result.input_tokens = entry->input_tokens;
            result.output_tokens = entry->output_tokens;
            result.cache_hit = true;
            result.actual_cost = 0.0;
            for (auto& alloc : result.plan.allocations) {
                if (alloc.kind == AllocationKind::Rag) alloc.cache_status = CacheStatus::Hit;
            }
            return result;
        }
    }

    // Generation.
    GenerationRequest request;
    request.prompt = assembled.user;
    request.system = assembled.system;
    request.model = model;
    request.max_tokens = result.plan.output_budget;
    request.temperature = prompt.generate.temperature.value_or(0.7);

    RetryPolicy policy = ctx.retry;
    if (policy.fallback_chain.empty()) policy.fallback_chain = {ctx.primary_adapter};
    ResilienceHooks hooks = ctx.hooks;
    if (!hooks.reroute_model) {
        hooks.reroute_model = [&prompt, &ctx](Adapter& tier) {
            PromptStatement rerouted = prompt;
            rerouted.model = "auto";
            std::string m = route(rerouted, ctx.routing);
            if (tier.serves_model(m)) return m;
            auto models = tier.list_models();
            return models.empty() ? m : models.front();
        };
    }

    GenerationResult generation;
    try {
        generation = generate_with_resilience(request, policy, ctx.adapters, hooks);
    } catch (const ResilienceExhausted& e) {
        throw RunError(std::string("generation failed: ") + e.what());
    }

    result.content = generation.content;
    result.input_tokens = generation.input_tokens;
    result.output_tokens = generation.output_tokens;
    result.latency_ms = generation.latency_ms;
    if (ctx.pricing.find(model)) {
        result.actual_cost =
            estimate_cost(result.input_tokens, result.output_tokens, model, ctx.pricing);
    }

    if (caching) {
        CacheEntry entry;
        entry.prompt_hash = prompt_hash;
        entry.response = result.content;
        entry.input_tokens = result.input_tokens;
        entry.output_tokens = result.output_tokens;
        entry.created_at_ms = to_millis(ctx.clock());
        entry.ttl_seconds = *ttl;
        ctx.memory->cache_store(std::move(entry));
    }
    if (prompt.store_key) {
        if (ctx.memory) {
            ctx.memory->put(*prompt.store_key, result.content);
        } else {
            result.warnings.push_back("no memory store configured; STORE RESULT IN memory." +
                                      *prompt.store_key + " skipped");
        }
    }
    return result;
}

// ============================================================
// Statement execution / session
// ============================================================

enum class StatementOutcome { PromptDefined, PromptRan, FunctionDefined, Explained, Executed };

struct StatementResult {
    StatementOutcome outcome = StatementOutcome::PromptDefined;
    std::string name;
    std::string text;
    std::optional<RunResult> run;
};

/// Holds the prompts and functions defined so far and executes statements
/// against them. PROMPT statements define only by default (the CLI `run`
/// command executes explicitly); EXECUTE and EXPLAIN look names up here.
class Session {
public:
    explicit Session(EngineContext& ctx, bool auto_run_prompts = false)
        : ctx_(ctx), auto_run_(auto_run_prompts) {}

    StatementResult execute(const Statement& statement, const Params& params = {}) {
        return std::visit([&](const auto& s) { return execute_stmt(s, params); }, statement);
    }

    const PromptStatement* find_prompt(const std::string& name) const {
        auto it = prompts_.find(name);
        return it == prompts_.end() ? nullptr : &it->second;
    }

    const std::vector<std::string>& prompt_order() const { return prompt_order_; }
    const FunctionRegistry& functions() const { return functions_; }

    RunResult run_prompt(const std::string& name, const Params& params) {
        const PromptStatement* p = find_prompt(name);
        if (!p) throw RunError("unknown prompt '" + name + "'");
        return ::spl::run(*p, params, ctx_, functions_);
    }

    /// Plan and render without touching adapters or stores. Estimates come
    /// from LIMIT values and per-kind defaults.
    std::string explain_prompt(const PromptStatement& prompt, bool show_cost = true) {
        std::string declared = prompt.model.value_or(
            ctx_.default_model.empty() ? std::string("auto") : ctx_.default_model);
        PlanInputs inputs;
        inputs.model_override = declared == "auto" ? route(prompt, ctx_.routing) : declared;
        ExecutionPlan p = plan(prompt, ctx_.optimizer, ctx_.pricing, inputs);
        ExplainOptions options;
        options.show_cost = show_cost;
        return render(p, options);
    }

    ExecutionPlan plan_prompt(const PromptStatement& prompt) {
        std::string declared = prompt.model.value_or(
            ctx_.default_model.empty() ? std::string("auto") : ctx_.default_model);
        PlanInputs inputs;
        inputs.model_override = declared == "auto" ? route(prompt, ctx_.routing) : declared;
        return plan(prompt, ctx_.optimizer, ctx_.pricing, inputs);
    }

private:
    EngineContext& ctx_;
    bool auto_run_;
    std::map<std::string, PromptStatement> prompts_;
    std::vector<std::string> prompt_order_;
    FunctionRegistry functions_;

    StatementResult execute_stmt(const PromptStatement& p, const Params& params) {
        prompts_[p.name] = p;
        prompt_order_.push_back(p.name);
        StatementResult r;
        r.name = p.name;
        if (auto_run_) {
            r.outcome = StatementOutcome::PromptRan;
            r.run = ::spl::run(p, params, ctx_, functions_);
            r.text = r.run->content;
        } else {
            r.outcome = StatementOutcome::PromptDefined;
        }
        return r;
    }

    StatementResult execute_stmt(const CreateFunctionStatement& f, const Params&) {
        parse_function_body(f);  // reject unsupported bodies at CREATE time
        functions_.functions[f.name] = f;
        StatementResult r;
        r.outcome = StatementOutcome::FunctionDefined;
        r.name = f.name;
        return r;
    }

    StatementResult execute_stmt(const ExplainStatement& e, const Params&) {
        const PromptStatement* target = nullptr;
        if (e.prompt_name) {
            target = find_prompt(*e.prompt_name);
            if (!target) throw RunError("unknown prompt '" + *e.prompt_name + "'");
        } else {
            target = e.inline_prompt.get();
        }
        StatementResult r;
        r.outcome = StatementOutcome::Explained;
        r.name = target->name;
        r.text = explain_prompt(*target);
        return r;
    }

    StatementResult execute_stmt(const ExecuteStatement& x, const Params& extra) {
        const PromptStatement* target = find_prompt(x.prompt_name);
        if (!target) throw RunError("unknown prompt '" + x.prompt_name + "'");

        Params params = extra;
        std::vector<std::string> binding_warnings;
        std::set<std::string> referenced = referenced_context_fields(*target);
        for (const auto& [name, expr] : x.params) {
            auto value = detail::literal_text(expr);
            if (!value) {
                throw RunError("parameter '" + name + "' must be bound to a literal value");
            }
            std::string key = name;
            if (key.rfind("context.", 0) == 0) key = key.substr(8);
            if (!referenced.count(key)) {
                binding_warnings.push_back("parameter '" + name +
                                           "' does not match any context field of prompt '" +
                                           target->name + "'");
            }
            params[key] = *value;
        }

        StatementResult r;
        r.outcome = StatementOutcome::Executed;
        r.name = target->name;
        r.run = ::spl::run(*target, params, ctx_, functions_);
        for (auto& w : binding_warnings) r.run->warnings.push_back(std::move(w));
        r.text = r.run->content;
        return r;
    }

    static void collect_context_fields(const PromptStatement& p, std::set<std::string>& out) {
        for (const auto& item : p.select_items) {
            if (item.source.kind == SourceKind::Context) out.insert(item.source.text);
        }
        for (const auto& cte : p.ctes) {
            if (cte.is_prompt()) {
                collect_context_fields(*cte.prompt, out);
            } else {
                for (const auto& item : cte.select->items) {
                    if (item.source.kind == SourceKind::Context) out.insert(item.source.text);
                }
            }
        }
    }

    static std::set<std::string> referenced_context_fields(const PromptStatement& p) {
        std::set<std::string> out;
        collect_context_fields(p, out);
        return out;
    }
};

}  // namespace spl
