#pragma once

#include <charconv>
#include <string>

#include "spl/ast.hpp"

namespace spl {

inline std::string escape_string(const std::string& s) {
    std::string out;
    out.reserve(s.size() + 2);
    out += '"';
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            default: out += c;
        }
    }
    out += '"';
    return out;
}

inline std::string float_literal(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    std::string s(buf, end);
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos) s += ".0";
    return s;
}

/// Canonical SPL pretty-printer. Printing a parsed AST and re-parsing the
/// result yields a structurally equal AST; the printed form is the canonical
/// structural fingerprint used by the round-trip tests.
class Printer {
public:
    std::string print(const std::vector<Statement>& program) const {
        std::string out;
        for (const auto& s : program) {
            out += print(s);
            out += ";\n";
        }
        return out;
    }

    std::string print(const Statement& s) const {
        return std::visit([this](const auto& v) { return print_stmt(v); }, s);
    }

    std::string print_stmt(const PromptStatement& p, int indent = 0) const {
        std::string pad(static_cast<std::size_t>(indent), ' ');
        std::string out;
        if (!p.anonymous_body) out += pad + "PROMPT " + p.name + "\n";
        if (p.budget_tokens) {
            out += pad + "WITH BUDGET " + std::to_string(*p.budget_tokens) + " TOKENS\n";
        }
        if (p.model) out += pad + "USING MODEL " + escape_string(*p.model) + "\n";
        if (p.cache_ttl) {
            out += pad + "CACHE FOR " + std::to_string(p.cache_ttl->count) + " " +
                   p.cache_ttl->unit + "\n";
        }
        if (!p.ctes.empty()) {
            out += pad + "WITH ";
            for (std::size_t i = 0; i < p.ctes.size(); ++i) {
                const CteClause& cte = p.ctes[i];
                if (i > 0) out += ",\n" + pad;
                out += cte.name + " AS (\n";
                if (cte.is_prompt()) {
                    out += print_stmt(*cte.prompt, indent + 2) + "\n";
                } else {
                    out += print_select_body(*cte.select, indent + 2);
                }
                out += pad + ")";
            }
            out += "\n";
        }
        out += pad + "SELECT\n";
        for (std::size_t i = 0; i < p.select_items.size(); ++i) {
            out += pad + "  " + print_item(p.select_items[i]);
            out += i + 1 < p.select_items.size() ? ",\n" : "\n";
        }
        if (p.where) out += pad + "WHERE " + print_where(*p.where) + "\n";
        if (!p.order_by.empty()) {
            out += pad + "ORDER BY ";
            for (std::size_t i = 0; i < p.order_by.size(); ++i) {
                if (i > 0) out += ", ";
                out += print_expr(p.order_by[i].expr);
                out += p.order_by[i].descending ? " DESC" : " ASC";
            }
            out += "\n";
        }
        out += pad + "GENERATE " + p.generate.function_name + "(";
        for (std::size_t i = 0; i < p.generate.args.size(); ++i) {
            if (i > 0) out += ", ";
            out += print_expr(p.generate.args[i]);
        }
        out += ")";
        std::vector<std::string> opts;
        if (p.generate.output_budget_tokens) {
            opts.push_back("OUTPUT BUDGET " + std::to_string(*p.generate.output_budget_tokens) +
                           " TOKENS");
        }
        if (p.generate.temperature) {
            opts.push_back("TEMPERATURE " + float_literal(*p.generate.temperature));
        }
        if (p.generate.format) opts.push_back("FORMAT " + *p.generate.format);
        if (!opts.empty()) {
            out += "\n" + pad + "WITH ";
            for (std::size_t i = 0; i < opts.size(); ++i) {
                if (i > 0) out += ", ";
                out += opts[i];
            }
        }
        if (p.store_key) out += "\n" + pad + "STORE RESULT IN memory." + *p.store_key;
        return out;
    }

    std::string print_stmt(const CreateFunctionStatement& f) const {
        std::string out = "CREATE FUNCTION " + f.name + "(";
        for (std::size_t i = 0; i < f.params.size(); ++i) {
            if (i > 0) out += ", ";
            out += f.params[i].name;
            if (f.params[i].type) out += " " + *f.params[i].type;
        }
        out += ")\nRETURNS " + f.return_type + "\nAS $$" + f.body_text + "$$";
        return out;
    }

    std::string print_stmt(const ExplainStatement& e) const {
        if (e.prompt_name) return "EXPLAIN PROMPT " + *e.prompt_name;
        std::string body = print_stmt(*e.inline_prompt);
        // Splice the EXPLAIN prefix onto the inline prompt's own header.
        return "EXPLAIN " + body;
    }

    std::string print_stmt(const ExecuteStatement& x) const {
        std::string out = "EXECUTE PROMPT " + x.prompt_name;
        if (!x.params.empty()) {
            out += " WITH PARAMS (";
            for (std::size_t i = 0; i < x.params.size(); ++i) {
                if (i > 0) out += ", ";
                out += x.params[i].first + " = " + print_expr(x.params[i].second);
            }
            out += ")";
        }
        return out;
    }

    std::string print_select_body(const SelectBody& b, int indent) const {
        std::string pad(static_cast<std::size_t>(indent), ' ');
        std::string out = pad + "SELECT\n";
        for (std::size_t i = 0; i < b.items.size(); ++i) {
            out += pad + "  " + print_item(b.items[i]);
            out += i + 1 < b.items.size() ? ",\n" : "\n";
        }
        if (b.from) {
            out += pad + "FROM " + print_source(b.from->source);
            if (b.from->alias) out += " AS " + *b.from->alias;
            out += "\n";
        }
        if (b.where) out += pad + "WHERE " + print_where(*b.where) + "\n";
        if (b.limit_tokens) {
            out += pad + "LIMIT " + std::to_string(*b.limit_tokens) + " TOKENS\n";
        }
        return out;
    }

    std::string print_item(const SelectItem& item) const {
        std::string out = print_source(item.source);
        if (item.alias) out += " AS " + *item.alias;
        if (item.limit_tokens) out += " LIMIT " + std::to_string(*item.limit_tokens) + " TOKENS";
        return out;
    }

    std::string print_source(const SourceExpr& s) const {
        switch (s.kind) {
            case SourceKind::SystemRole: return "system_role(" + escape_string(s.text) + ")";
            case SourceKind::Context: return "context." + s.text;
            case SourceKind::Rag: {
                std::string out = "rag.query(" + print_expr(s.rag_query);
                if (s.rag_top_k) out += ", top_k=" + print_expr(*s.rag_top_k);
                return out + ")";
            }
            case SourceKind::Memory: return "memory.get(" + print_expr(s.memory_key) + ")";
            case SourceKind::FunctionCall: {
                std::string out = s.text + "(";
                for (std::size_t i = 0; i < s.args.size(); ++i) {
                    if (i > 0) out += ", ";
                    out += print_expr(s.args[i]);
                }
                return out + ")";
            }
            case SourceKind::NameRef: return s.text;
        }
        return "?";
    }

    std::string print_where(const WhereClause& w) const {
        std::string out;
        for (std::size_t i = 0; i < w.conditions.size(); ++i) {
            if (i > 0) out += w.or_connective[i - 1] ? " OR " : " AND ";
            out += print_condition(w.conditions[i]);
        }
        return out;
    }

    std::string print_condition(const Condition& c) const {
        std::string out = print_expr(c.lhs);
        if (c.cmp == Comparator::In) {
            out += " IN (";
            for (std::size_t i = 0; i < c.in_list.size(); ++i) {
                if (i > 0) out += ", ";
                out += print_expr(c.in_list[i]);
            }
            return out + ")";
        }
        switch (c.cmp) {
            case Comparator::Eq: out += " = "; break;
            case Comparator::Neq: out += " != "; break;
            case Comparator::Gt: out += " > "; break;
            case Comparator::Lt: out += " < "; break;
            case Comparator::Gte: out += " >= "; break;
            case Comparator::Lte: out += " <= "; break;
            case Comparator::In: break;
        }
        return out + print_expr(c.rhs);
    }

    std::string print_expr(const Expression& e) const {
        std::string out = print_term(e.terms[0]);
        for (std::size_t i = 0; i < e.ops.size(); ++i) {
            out += std::string(" ") + e.ops[i] + " ";
            out += print_term(e.terms[i + 1]);
        }
        return out;
    }

    std::string print_term(const Term& t) const {
        switch (t.kind) {
            case TermKind::Name: {
                std::string out;
                for (std::size_t i = 0; i < t.path.size(); ++i) {
                    if (i > 0) out += ".";
                    out += t.path[i];
                }
                return out;
            }
            case TermKind::String: return escape_string(t.text);
            case TermKind::Integer: return std::to_string(t.int_value);
            case TermKind::Float: return float_literal(t.float_value);
            case TermKind::Param: return "@" + t.text;
            case TermKind::Call: {
                std::string out = t.text + "(";
                for (std::size_t i = 0; i < t.args.size(); ++i) {
                    if (i > 0) out += ", ";
                    out += print_expr(t.args[i]);
                }
                return out + ")";
            }
        }
        return "?";
    }
};

inline std::string to_spl(const std::vector<Statement>& program) {
    return Printer().print(program);
}

inline std::string to_spl(const Statement& statement) {
    return Printer().print(statement);
}

inline std::string to_spl(const PromptStatement& prompt) {
    return Printer().print_stmt(prompt);
}

}  // namespace spl
