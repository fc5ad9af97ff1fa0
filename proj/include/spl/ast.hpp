#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace spl {

// ============================================================
// Expressions
// ============================================================

struct Expression;

enum class TermKind { Name, String, Integer, Float, Call, Param };

/// One primary of an additive expression. `path` holds qualified-name
/// segments (Name); `text` holds the string value (String), the parameter
/// name (Param), or the callee (Call).
struct Term {
    TermKind kind = TermKind::Name;
    std::vector<std::string> path;
    std::string text;
    long long int_value = 0;
    double float_value = 0.0;
    std::vector<Expression> args;
    int line = 0;
    int column = 0;
};

/// Additive chain of primaries: terms[0] ops[0] terms[1] ops[1] ...
struct Expression {
    std::vector<Term> terms;
    std::vector<char> ops;
    int line = 0;
    int column = 0;

    bool single_term() const { return terms.size() == 1 && ops.empty(); }
    bool is_string_literal() const { return single_term() && terms[0].kind == TermKind::String; }
    bool is_integer_literal() const { return single_term() && terms[0].kind == TermKind::Integer; }
    bool is_name() const { return single_term() && terms[0].kind == TermKind::Name; }
};

// ============================================================
// SELECT sources
// ============================================================

enum class SourceKind { SystemRole, Context, Rag, Memory, FunctionCall, NameRef };

struct SourceExpr {
    SourceKind kind = SourceKind::NameRef;
    /// SystemRole: role text. Context: field name. NameRef: referenced name.
    /// FunctionCall: callee name. Rag/Memory: unset (see the arg fields).
    std::string text;
    std::vector<Expression> args;      // FunctionCall arguments
    Expression rag_query;              // rag.query first argument
    std::optional<Expression> rag_top_k;
    Expression memory_key;             // memory.get argument
    int line = 0;
    int column = 0;
};

struct SelectItem {
    SourceExpr source;
    std::optional<std::string> alias;
    std::optional<long long> limit_tokens;
    int line = 0;
    int column = 0;

    /// Name this item binds in the query scope: the alias when given,
    /// otherwise a name derived from the source.
    std::string display_name() const {
        if (alias) return *alias;
        switch (source.kind) {
            case SourceKind::SystemRole: return "__system_role__";
            case SourceKind::Context: return source.text;
            case SourceKind::NameRef: return source.text;
            case SourceKind::FunctionCall: return source.text;
            case SourceKind::Rag: return "rag";
            case SourceKind::Memory: return "memory";
        }
        return "?";
    }
};

// ============================================================
// Clauses
// ============================================================

enum class Comparator { Eq, Neq, Gt, Lt, Gte, Lte, In };

struct Condition {
    Expression lhs;
    Comparator cmp = Comparator::Eq;
    Expression rhs;                    // unused for In
    std::vector<Expression> in_list;   // In only
    int line = 0;
    int column = 0;
};

struct WhereClause {
    std::vector<Condition> conditions;
    /// or_connective[i] joins conditions[i] and conditions[i+1]; true = OR.
    std::vector<bool> or_connective;
};

struct OrderItem {
    Expression expr;
    bool descending = false;
};

struct GenerateClause {
    std::string function_name;
    std::vector<Expression> args;
    std::optional<long long> output_budget_tokens;
    std::optional<double> temperature;
    std::optional<std::string> format;
    int line = 0;
    int column = 0;
};

struct CacheTtl {
    long long count = 0;
    std::string unit;
    int line = 0;
    int column = 0;
};

struct BenchmarkModels {
    std::vector<std::string> models;
    bool include_auto = false;
};

struct PromptStatement;

struct FromClause {
    SourceExpr source;
    std::optional<std::string> alias;
};

/// Select-form CTE body: items with an optional trailing body-wide LIMIT.
struct SelectBody {
    std::vector<SelectItem> items;
    std::optional<FromClause> from;
    std::optional<WhereClause> where;
    std::optional<long long> limit_tokens;
};

/// A CTE holds either a nested prompt (full PROMPT statement, or the
/// headerless SELECT ... GENERATE form) or a plain select body.
struct CteClause {
    std::string name;
    std::shared_ptr<PromptStatement> prompt;
    std::optional<SelectBody> select;
    int line = 0;
    int column = 0;

    bool is_prompt() const { return prompt != nullptr; }
};

// ============================================================
// Statements
// ============================================================

struct PromptStatement {
    std::string name;
    std::optional<long long> budget_tokens;
    std::optional<std::string> model;
    std::optional<CacheTtl> cache_ttl;
    std::vector<CteClause> ctes;
    std::vector<SelectItem> select_items;
    std::optional<WhereClause> where;
    std::vector<OrderItem> order_by;
    GenerateClause generate;
    std::optional<std::string> store_key;
    std::optional<BenchmarkModels> benchmark_models;
    /// True for the headerless CTE body form (SELECT ... GENERATE without a
    /// PROMPT keyword); such bodies take the CTE name.
    bool anonymous_body = false;
    int line = 0;
    int column = 0;
};

struct FunctionParam {
    std::string name;
    std::optional<std::string> type;
};

struct CreateFunctionStatement {
    std::string name;
    std::vector<FunctionParam> params;
    std::string return_type;
    std::string body_text;
    int line = 0;
    int column = 0;
};

struct ExplainStatement {
    std::optional<std::string> prompt_name;
    std::shared_ptr<PromptStatement> inline_prompt;
    int line = 0;
    int column = 0;
};

struct ExecuteStatement {
    std::string prompt_name;
    /// Assignments from WITH PARAMS: dotted name -> value expression.
    std::vector<std::pair<std::string, Expression>> params;
    int line = 0;
    int column = 0;
};

using Statement =
    std::variant<PromptStatement, CreateFunctionStatement, ExplainStatement, ExecuteStatement>;

inline int statement_line(const Statement& s) {
    return std::visit([](const auto& v) { return v.line; }, s);
}

}  // namespace spl
