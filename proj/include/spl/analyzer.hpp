#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "spl/ast.hpp"
#include "spl/lexer.hpp"

namespace spl {

enum class Severity { Error, Warning };

struct Diagnostic {
    Severity severity = Severity::Error;
    std::string code;
    std::string message;
    int line = 0;
    int column = 0;
};

inline bool has_errors(const std::vector<Diagnostic>& diags) {
    return std::any_of(diags.begin(), diags.end(),
                       [](const Diagnostic& d) { return d.severity == Severity::Error; });
}

enum class SymbolKind { SystemRole, Context, Rag, Memory, Cte, Function };

struct Symbol {
    SymbolKind kind = SymbolKind::Context;
    int line = 0;
    int column = 0;
};

using SymbolTable = std::map<std::string, Symbol>;

/// Binding environment of one prompt: every select item under its display
/// name (the system role under __system_role__), every CTE under its name.
/// A bare-name item aliasing a CTE binds with kind Cte.
inline SymbolTable resolve_symbols(const PromptStatement& p,
                                   const std::set<std::string>* functions = nullptr) {
    SymbolTable table;
    for (const auto& cte : p.ctes) {
        table.emplace(cte.name, Symbol{SymbolKind::Cte, cte.line, cte.column});
    }
    for (const auto& item : p.select_items) {
        Symbol sym{SymbolKind::Context, item.line, item.column};
        switch (item.source.kind) {
            case SourceKind::SystemRole: sym.kind = SymbolKind::SystemRole; break;
            case SourceKind::Context: sym.kind = SymbolKind::Context; break;
            case SourceKind::Rag: sym.kind = SymbolKind::Rag; break;
            case SourceKind::Memory: sym.kind = SymbolKind::Memory; break;
            case SourceKind::FunctionCall: sym.kind = SymbolKind::Function; break;
            case SourceKind::NameRef: {
                auto it = table.find(item.source.text);
                if (it != table.end()) {
                    sym.kind = it->second.kind;
                } else if (functions && functions->count(item.source.text)) {
                    sym.kind = SymbolKind::Function;
                }
                break;
            }
        }
        table.insert_or_assign(item.display_name(), sym);
    }
    return table;
}

/// Validation passes over a parsed program: name resolution, budget
/// arithmetic, argument typing, duplicate detection. Nothing throws; all
/// findings come back as diagnostics sorted by (line, column, code).
class Analyzer {
public:
    std::vector<Diagnostic> analyze(const std::vector<Statement>& program) {
        diags_.clear();
        functions_.clear();

        // Function declarations are visible file-wide regardless of order.
        for (const auto& stmt : program) {
            if (const auto* fn = std::get_if<CreateFunctionStatement>(&stmt)) {
                if (!functions_.insert(fn->name).second) {
                    error("E_DUPLICATE", "duplicate function name '" + fn->name + "'", fn->line,
                          fn->column);
                }
                std::set<std::string> seen;
                for (const auto& param : fn->params) {
                    if (!seen.insert(param.name).second) {
                        error("E_DUPLICATE",
                              "duplicate parameter '" + param.name + "' in function '" + fn->name +
                                  "'",
                              fn->line, fn->column);
                    }
                }
            }
        }

        std::set<std::string> prompt_names;
        for (const auto& stmt : program) {
            if (const auto* p = std::get_if<PromptStatement>(&stmt)) {
                if (!prompt_names.insert(p->name).second) {
                    error("E_DUPLICATE", "duplicate prompt name '" + p->name + "'", p->line,
                          p->column);
                }
                check_prompt(*p);
            } else if (const auto* e = std::get_if<ExplainStatement>(&stmt)) {
                if (e->inline_prompt) check_prompt(*e->inline_prompt);
            }
        }

        std::stable_sort(diags_.begin(), diags_.end(), [](const Diagnostic& a, const Diagnostic& b) {
            if (a.line != b.line) return a.line < b.line;
            if (a.column != b.column) return a.column < b.column;
            return a.code < b.code;
        });
        return diags_;
    }

private:
    std::vector<Diagnostic> diags_;
    std::set<std::string> functions_;

    void error(const std::string& code, const std::string& message, int line, int column) {
        diags_.push_back({Severity::Error, code, message, line, column});
    }
    void warning(const std::string& code, const std::string& message, int line, int column) {
        diags_.push_back({Severity::Warning, code, message, line, column});
    }

    static bool is_rag_attribute(const std::string& attr) {
        return attr == "relevance" || attr == "id" || attr == "text";
    }

    void check_prompt(const PromptStatement& p) {
        if (p.budget_tokens && *p.budget_tokens <= 0) {
            error("E_RANGE", "budget must be positive", p.line, p.column);
        }
        if (p.generate.output_budget_tokens && *p.generate.output_budget_tokens <= 0) {
            error("E_RANGE", "output budget must be positive", p.generate.line,
                  p.generate.column);
        }
        if (p.generate.temperature &&
            (*p.generate.temperature < 0.0 || *p.generate.temperature > 2.0)) {
            error("E_RANGE", "temperature must be in [0, 2]", p.generate.line, p.generate.column);
        }
        if (p.generate.format) {
            std::string f = to_upper(*p.generate.format);
            if (f != "MARKDOWN" && f != "JSON" && f != "TEXT") {
                warning("W_FORMAT",
                        "unknown format '" + *p.generate.format +
                            "' (known: markdown, json, text); passed through as-is",
                        p.generate.line, p.generate.column);
            }
        }
        if (p.cache_ttl) {
            std::string unit = to_upper(p.cache_ttl->unit);
            if (unit != "SECONDS" && unit != "MINUTES" && unit != "HOURS" && unit != "DAYS") {
                error("E_TYPE",
                      "CACHE FOR unit must be SECONDS, MINUTES, HOURS, or DAYS; found '" +
                          p.cache_ttl->unit + "'",
                      p.cache_ttl->line, p.cache_ttl->column);
            }
            if (p.cache_ttl->count <= 0) {
                error("E_RANGE", "CACHE FOR duration must be positive", p.cache_ttl->line,
                      p.cache_ttl->column);
            }
        }

        // Duplicates within this prompt.
        std::set<std::string> cte_names;
        for (const auto& cte : p.ctes) {
            if (!cte_names.insert(cte.name).second) {
                error("E_DUPLICATE", "duplicate CTE name '" + cte.name + "'", cte.line,
                      cte.column);
            }
        }
        std::set<std::string> aliases;
        for (const auto& item : p.select_items) {
            if (!aliases.insert(item.display_name()).second) {
                error("E_DUPLICATE", "duplicate alias '" + item.display_name() + "' in SELECT",
                      item.line, item.column);
            }
        }

        SymbolTable symbols = resolve_symbols(p, &functions_);
        for (const auto& item : p.select_items) check_select_item(item, symbols);
        for (const auto& arg : p.generate.args) check_expression(arg, symbols);
        if (p.where) check_where(*p.where, symbols);
        for (const auto& o : p.order_by) check_path_expression(o.expr, symbols);

        // Budget arithmetic: declared LIMITs plus the output budget must fit
        // inside the declared total budget.
        if (p.budget_tokens) {
            long long declared = 0;
            for (const auto& item : p.select_items) {
                if (item.limit_tokens) declared += *item.limit_tokens;
            }
            if (p.generate.output_budget_tokens) declared += *p.generate.output_budget_tokens;
            if (declared > *p.budget_tokens) {
                warning("W_BUDGET_SUM",
                        "sum of LIMIT clauses plus output budget (" + std::to_string(declared) +
                            ") exceeds the total budget (" + std::to_string(*p.budget_tokens) +
                            ")",
                        p.line, p.column);
            }
        }

        // Nested scopes.
        for (const auto& cte : p.ctes) {
            if (cte.is_prompt()) {
                check_prompt(*cte.prompt);
            } else {
                check_select_body(*cte.select);
            }
        }
    }

    void check_select_body(const SelectBody& body) {
        PromptStatement shim;
        shim.select_items = body.items;
        SymbolTable symbols = resolve_symbols(shim, &functions_);
        for (const auto& item : body.items) check_select_item(item, symbols);
        if (body.where) check_where(*body.where, symbols);
        if (body.limit_tokens && *body.limit_tokens <= 0) {
            // Position information is per-item here; report on the first item.
            int line = body.items.empty() ? 0 : body.items.front().line;
            int col = body.items.empty() ? 0 : body.items.front().column;
            error("E_RANGE", "LIMIT must be positive", line, col);
        }
    }

    void check_select_item(const SelectItem& item, const SymbolTable& symbols) {
        if (item.limit_tokens && *item.limit_tokens <= 0) {
            error("E_RANGE", "LIMIT must be positive", item.line, item.column);
        }
        const SourceExpr& src = item.source;
        switch (src.kind) {
            case SourceKind::Rag: {
                if (!src.rag_query.is_string_literal()) {
                    error("E_TYPE", "rag.query requires a string argument", src.line, src.column);
                }
                if (src.rag_top_k) {
                    if (!src.rag_top_k->is_integer_literal()) {
                        error("E_TYPE", "rag.query top_k requires an integer literal", src.line,
                              src.column);
                    } else if (src.rag_top_k->terms[0].int_value < 1) {
                        error("E_RANGE", "rag.query top_k must be >= 1", src.line, src.column);
                    }
                }
                break;
            }
            case SourceKind::Memory: {
                if (!src.memory_key.is_string_literal()) {
                    error("E_TYPE", "memory.get requires a string argument", src.line,
                          src.column);
                }
                break;
            }
            case SourceKind::FunctionCall: {
                if (!functions_.count(src.text)) {
                    error("E_UNRESOLVED_NAME",
                          "call to undeclared function '" + src.text + "'", src.line, src.column);
                }
                for (const auto& arg : src.args) check_expression(arg, symbols, true);
                break;
            }
            case SourceKind::NameRef: {
                auto it = symbols.find(src.text);
                bool known = (it != symbols.end() && it->second.kind == SymbolKind::Cte) ||
                             functions_.count(src.text);
                if (!known) {
                    error("E_UNRESOLVED_NAME",
                          "name '" + src.text + "' does not correspond to a CTE or function",
                          src.line, src.column);
                }
                break;
            }
            default: break;
        }
    }

    /// Expressions in GENERATE args and function arguments: every name head
    /// must resolve to a SELECT alias, a CTE, or a declared function.
    /// `allow_builtin_paths` additionally admits context.<field> references
    /// (used for function-call arguments inside SELECT).
    void check_expression(const Expression& e, const SymbolTable& symbols,
                          bool allow_builtin_paths = false) {
        for (const auto& t : e.terms) {
            switch (t.kind) {
                case TermKind::Name: {
                    const std::string& head = t.path.front();
                    if (symbols.count(head)) break;
                    if (allow_builtin_paths && head == "context" && t.path.size() > 1) break;
                    error("E_UNRESOLVED_NAME",
                          "name '" + head +
                              "' does not correspond to a SELECT alias, CTE, or function",
                          t.line, t.column);
                    break;
                }
                case TermKind::Call: {
                    if (!functions_.count(t.text)) {
                        error("E_UNRESOLVED_NAME", "call to undeclared function '" + t.text + "'",
                              t.line, t.column);
                    }
                    for (const auto& arg : t.args) {
                        check_expression(arg, symbols, allow_builtin_paths);
                    }
                    break;
                }
                default: break;
            }
        }
    }

    /// WHERE and ORDER BY paths: a.b resolves only when a is a RAG source
    /// with a filterable attribute (relevance, id, text) or a CTE reference.
    void check_path_expression(const Expression& e, const SymbolTable& symbols) {
        for (const auto& t : e.terms) {
            if (t.kind != TermKind::Name) continue;
            const std::string& head = t.path.front();
            auto it = symbols.find(head);
            if (it == symbols.end()) {
                error("E_UNRESOLVED_NAME",
                      "name '" + head + "' does not correspond to a SELECT alias or CTE", t.line,
                      t.column);
                continue;
            }
            if (t.path.size() > 1) {
                if (it->second.kind == SymbolKind::Rag) {
                    if (t.path.size() > 2 || !is_rag_attribute(t.path[1])) {
                        error("E_UNRESOLVED_NAME",
                              "'" + t.path[1] +
                                  "' is not a filterable document attribute (relevance, id, text)",
                              t.line, t.column);
                    }
                } else if (it->second.kind != SymbolKind::Cte) {
                    error("E_UNRESOLVED_NAME",
                          "attribute access is only supported on RAG sources and CTE outputs",
                          t.line, t.column);
                }
            }
        }
    }

    void check_where(const WhereClause& w, const SymbolTable& symbols) {
        for (const auto& c : w.conditions) {
            check_path_expression(c.lhs, symbols);
            if (c.cmp == Comparator::In) {
                for (const auto& e : c.in_list) check_path_expression(e, symbols);
            } else {
                check_path_expression(c.rhs, symbols);
            }
        }
    }
};

inline std::vector<Diagnostic> analyze(const std::vector<Statement>& program) {
    return Analyzer().analyze(program);
}

}  // namespace spl
