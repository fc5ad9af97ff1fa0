#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spl/ast.hpp"
#include "spl/lexer.hpp"
#include "spl/token.hpp"

namespace spl {

class ParseError : public std::runtime_error {
public:
    ParseError(std::string message, int line, int column)
        : std::runtime_error(std::move(message)), line(line), column(column) {}
    int line;
    int column;
};

struct ParserOptions {
    /// Accept the top-level `USING MODELS m1, m2 | auto` directive, which
    /// scopes over the remainder of the file and attaches a benchmark model
    /// list to every subsequent PROMPT statement.
    bool using_models_extension = true;
};

/// Hand-written recursive descent parser, one method per grammar production.
/// Consumes the token stream strictly left to right with a single token of
/// visibility; the cursor never moves backwards (see cursor_regressed()).
class Parser {
public:
    explicit Parser(std::vector<SourceToken> tokens, ParserOptions options = {})
        : tokens_(std::move(tokens)), options_(options) {}

    std::vector<Statement> parse_program() {
        std::vector<Statement> statements;
        skip_semis();
        while (!at(TokenKind::Eof)) {
            if (at_keyword("USING")) {
                parse_using_models_directive();
                skip_semis();
                continue;
            }
            statements.push_back(parse_statement());
            if (!at(TokenKind::Eof)) {
                if (!at(TokenKind::Semi)) {
                    throw err("expected ';' between statements, found " + found());
                }
                skip_semis();
            }
        }
        return statements;
    }

    PromptStatement parse_prompt() { return parse_prompt_stmt(); }

    /// True if the cursor ever moved backwards (it cannot; kept as the
    /// observable no-backtracking witness for the LL(1) claim).
    bool cursor_regressed() const { return regressed_; }

private:
    std::vector<SourceToken> tokens_;
    ParserOptions options_;
    std::size_t pos_ = 0;
    std::size_t high_water_ = 0;
    bool regressed_ = false;
    std::optional<BenchmarkModels> active_models_;

    // --- cursor helpers ---

    const SourceToken& cur() const { return tokens_[pos_]; }

    const SourceToken& advance() {
        const SourceToken& t = tokens_[pos_];
        if (!at(TokenKind::Eof)) ++pos_;
        if (pos_ < high_water_) regressed_ = true;
        high_water_ = std::max(high_water_, pos_);
        return t;
    }

    bool at(TokenKind k) const { return cur().kind == k; }
    bool at_keyword(const char* kw) const {
        return cur().kind == TokenKind::Keyword && cur().keyword == kw;
    }
    bool at_ident(const char* name) const {
        return cur().kind == TokenKind::Ident && cur().text == name;
    }

    std::string found() const {
        const SourceToken& t = cur();
        if (t.kind == TokenKind::Eof) return "end of input";
        if (t.kind == TokenKind::String) return "string literal";
        return "'" + t.text + "'";
    }

    ParseError err(const std::string& message) const {
        return ParseError(message, cur().line, cur().column);
    }

    SourceToken expect(TokenKind k, const std::string& what) {
        if (!at(k)) throw err("expected " + what + ", found " + found());
        return advance();
    }

    SourceToken expect_keyword(const char* kw, const std::string& message) {
        if (!at_keyword(kw)) throw err(message + ", found " + found());
        return advance();
    }

    std::string expect_ident(const std::string& what) {
        if (!at(TokenKind::Ident)) throw err("expected " + what + ", found " + found());
        return advance().text;
    }

    long long expect_integer(const std::string& what) {
        if (!at(TokenKind::Integer)) throw err("expected " + what + ", found " + found());
        return std::stoll(advance().text);
    }

    void skip_semis() {
        while (at(TokenKind::Semi)) advance();
    }

    // --- program level ---

    Statement parse_statement() {
        if (at_keyword("PROMPT")) {
            PromptStatement p = parse_prompt_stmt();
            p.benchmark_models = active_models_;
            return p;
        }
        if (at_keyword("CREATE")) return parse_create_function();
        if (at_keyword("EXPLAIN")) return parse_explain();
        if (at_keyword("EXECUTE")) return parse_execute();
        throw err("expected a statement (PROMPT, CREATE FUNCTION, EXPLAIN, or EXECUTE), found " +
                  found());
    }

    void parse_using_models_directive() {
        const SourceToken& tok = cur();
        advance();  // USING
        if (!(at(TokenKind::Ident) && to_upper(cur().text) == "MODELS")) {
            throw ParseError("expected MODELS after USING at statement level", tok.line,
                             tok.column);
        }
        if (!options_.using_models_extension) {
            throw ParseError("USING MODELS directive is not enabled", tok.line, tok.column);
        }
        advance();  // MODELS
        BenchmarkModels bm;
        bm.models.push_back(parse_model_id());
        while (at(TokenKind::Comma)) {
            advance();
            bm.models.push_back(parse_model_id());
        }
        if (at(TokenKind::Pipe)) {
            advance();
            if (!(at(TokenKind::Ident) && to_upper(cur().text) == "AUTO")) {
                throw err("expected 'auto' after '|' in USING MODELS");
            }
            advance();
            bm.include_auto = true;
        }
        active_models_ = std::move(bm);
    }

    /// Model identifiers may be quoted strings or bare runs of adjacent
    /// tokens (claude-sonnet-4-5, llama3.1:70b). A bare run extends while the
    /// next token touches the previous one with no intervening whitespace.
    std::string parse_model_id() {
        if (at(TokenKind::String)) return advance().text;
        if (!at(TokenKind::Ident)) throw err("expected model identifier, found " + found());
        SourceToken prev = advance();
        std::string id = prev.text;
        for (;;) {
            TokenKind k = cur().kind;
            bool joinable = k == TokenKind::Ident || k == TokenKind::Integer ||
                            k == TokenKind::Float || k == TokenKind::Minus ||
                            k == TokenKind::Dot || k == TokenKind::Colon;
            bool adjacent = cur().line == prev.line &&
                            cur().column == prev.column + static_cast<int>(prev.text.size());
            if (!joinable || !adjacent) break;
            prev = advance();
            id += prev.text;
        }
        return id;
    }

    // --- prompt statement ---

    PromptStatement parse_prompt_stmt() {
        PromptStatement p;
        const SourceToken& tok = expect_keyword("PROMPT", "expected PROMPT");
        p.line = tok.line;
        p.column = tok.column;
        p.name = expect_ident("prompt name after PROMPT");
        parse_prompt_body(p);
        return p;
    }

    void parse_prompt_body(PromptStatement& p) {
        // Header clauses, then the optional CTE block (both introduced by
        // WITH; the token after it disambiguates).
        bool saw_ctes = false;
        while (!saw_ctes) {
            if (at_keyword("WITH")) {
                advance();
                if (at_keyword("BUDGET")) {
                    advance();
                    if (p.budget_tokens) throw err("duplicate BUDGET clause");
                    p.budget_tokens = expect_integer("token count after WITH BUDGET");
                    expect_keyword("TOKENS", "expected TOKENS after the budget value");
                } else if (at(TokenKind::Ident)) {
                    parse_cte_block(p);
                    saw_ctes = true;
                } else {
                    throw err("expected BUDGET or a CTE definition after WITH, found " + found());
                }
            } else if (at_keyword("USING")) {
                advance();
                expect_keyword("MODEL", "expected MODEL after USING");
                if (p.model) throw err("duplicate USING MODEL clause");
                p.model = parse_model_id();
            } else if (at_keyword("CACHE")) {
                const SourceToken& c = advance();
                expect_keyword("FOR", "expected FOR after CACHE");
                if (p.cache_ttl) throw err("duplicate CACHE FOR clause");
                CacheTtl ttl;
                ttl.line = c.line;
                ttl.column = c.column;
                ttl.count = expect_integer("duration after CACHE FOR");
                if (at(TokenKind::Ident) || at(TokenKind::Keyword)) {
                    ttl.unit = advance().text;
                } else {
                    throw err("expected a time unit after CACHE FOR " + std::to_string(ttl.count));
                }
                p.cache_ttl = std::move(ttl);
            } else {
                break;
            }
        }

        expect_keyword("SELECT", "expected SELECT clause");
        p.select_items = parse_select_items();
        if (at_keyword("WHERE")) p.where = parse_where();
        if (at_keyword("ORDER")) p.order_by = parse_order_by();
        if (!at_keyword("GENERATE")) {
            throw err("expected GENERATE clause after SELECT");
        }
        p.generate = parse_generate();
        if (at_keyword("STORE")) p.store_key = parse_store();
    }

    void parse_cte_block(PromptStatement& p) {
        // Cursor sits on the first CTE name (WITH already consumed).
        for (;;) {
            CteClause cte;
            const SourceToken& nameTok = cur();
            cte.name = expect_ident("CTE name");
            cte.line = nameTok.line;
            cte.column = nameTok.column;
            expect_keyword("AS", "expected AS after CTE name '" + cte.name + "'");
            expect(TokenKind::LParen, "'(' before CTE body");
            parse_cte_body(cte);
            expect(TokenKind::RParen, "')' after CTE body");
            p.ctes.push_back(std::move(cte));
            if (!at(TokenKind::Comma)) break;
            advance();
        }
    }

    void parse_cte_body(CteClause& cte) {
        if (at_keyword("PROMPT")) {
            cte.prompt = std::make_shared<PromptStatement>(parse_prompt_stmt());
            return;
        }
        expect_keyword("SELECT", "expected PROMPT or SELECT in CTE body");
        std::vector<SelectItem> items = parse_select_items();

        std::optional<FromClause> from;
        if (at_keyword("FROM")) {
            advance();
            FromClause f;
            f.source = parse_source_expr();
            if (at_keyword("AS")) {
                advance();
                f.alias = expect_ident("alias after AS");
            }
            from = std::move(f);
        }
        std::optional<WhereClause> where;
        if (at_keyword("WHERE")) where = parse_where();

        if (!from && (at_keyword("GENERATE") || at_keyword("ORDER"))) {
            // Headerless nested prompt: SELECT ... GENERATE inside the CTE.
            auto nested = std::make_shared<PromptStatement>();
            nested->name = cte.name;
            nested->anonymous_body = true;
            nested->line = cte.line;
            nested->column = cte.column;
            nested->select_items = std::move(items);
            nested->where = std::move(where);
            if (at_keyword("ORDER")) nested->order_by = parse_order_by();
            if (!at_keyword("GENERATE")) throw err("expected GENERATE clause after SELECT");
            nested->generate = parse_generate();
            if (at_keyword("STORE")) nested->store_key = parse_store();
            cte.prompt = std::move(nested);
            return;
        }

        SelectBody body;
        body.items = std::move(items);
        body.from = std::move(from);
        body.where = std::move(where);
        if (at_keyword("LIMIT")) {
            advance();
            body.limit_tokens = expect_integer("token count after LIMIT");
            expect_keyword("TOKENS", "expected TOKENS after the limit value");
        }
        cte.select = std::move(body);
    }

    // --- SELECT ---

    std::vector<SelectItem> parse_select_items() {
        std::vector<SelectItem> items;
        for (;;) {
            items.push_back(parse_select_item());
            if (!at(TokenKind::Comma)) break;
            advance();
        }
        return items;
    }

    SelectItem parse_select_item() {
        SelectItem item;
        const SourceToken& tok = cur();
        item.line = tok.line;
        item.column = tok.column;
        item.source = parse_source_expr();
        if (at_keyword("AS")) {
            advance();
            item.alias = expect_ident("alias after AS");
        }
        if (at_keyword("LIMIT")) {
            advance();
            item.limit_tokens = expect_integer("token count after LIMIT");
            expect_keyword("TOKENS", "expected TOKENS after the limit value");
        }
        return item;
    }

    SourceExpr parse_source_expr() {
        SourceExpr src;
        const SourceToken& tok = cur();
        src.line = tok.line;
        src.column = tok.column;
        if (!at(TokenKind::Ident)) {
            throw err("expected a context source (system_role, context.<field>, rag.query, "
                      "memory.get, a function call, or a name), found " +
                      found());
        }
        std::string head = advance().text;

        if (head == "system_role") {
            expect(TokenKind::LParen, "'(' after system_role");
            src.kind = SourceKind::SystemRole;
            if (!at(TokenKind::String)) {
                throw err("system_role requires a string argument, found " + found());
            }
            src.text = advance().text;
            expect(TokenKind::RParen, "')' after system_role argument");
            return src;
        }
        if (head == "context" && at(TokenKind::Dot)) {
            advance();
            src.kind = SourceKind::Context;
            src.text = expect_ident("field name after context.");
            return src;
        }
        if (head == "rag" && at(TokenKind::Dot)) {
            advance();
            std::string method = expect_ident("method after rag.");
            if (method != "query") {
                throw ParseError("rag source supports only rag.query", src.line, src.column);
            }
            expect(TokenKind::LParen, "'(' after rag.query");
            src.kind = SourceKind::Rag;
            src.rag_query = parse_expression();
            if (at(TokenKind::Comma)) {
                advance();
                if (!at_ident("top_k")) {
                    throw err("expected top_k=<n> as the second rag.query argument, found " +
                              found());
                }
                advance();
                expect(TokenKind::Eq, "'=' after top_k");
                src.rag_top_k = parse_expression();
            }
            expect(TokenKind::RParen, "')' after rag.query arguments");
            return src;
        }
        if (head == "memory" && at(TokenKind::Dot)) {
            advance();
            std::string method = expect_ident("method after memory.");
            if (method != "get") {
                throw ParseError("memory source supports only memory.get", src.line, src.column);
            }
            expect(TokenKind::LParen, "'(' after memory.get");
            src.kind = SourceKind::Memory;
            src.memory_key = parse_expression();
            expect(TokenKind::RParen, "')' after memory.get argument");
            return src;
        }
        if (at(TokenKind::LParen)) {
            advance();
            src.kind = SourceKind::FunctionCall;
            src.text = head;
            src.args = parse_arg_list();
            expect(TokenKind::RParen, "')' after function arguments");
            return src;
        }
        src.kind = SourceKind::NameRef;
        src.text = head;
        return src;
    }

    std::vector<Expression> parse_arg_list() {
        std::vector<Expression> args;
        if (at(TokenKind::RParen)) return args;
        args.push_back(parse_expression());
        while (at(TokenKind::Comma)) {
            advance();
            args.push_back(parse_expression());
        }
        return args;
    }

    // --- WHERE / ORDER BY ---

    WhereClause parse_where() {
        advance();  // WHERE
        WhereClause w;
        w.conditions.push_back(parse_condition());
        while (at_keyword("AND") || at_keyword("OR")) {
            w.or_connective.push_back(at_keyword("OR"));
            advance();
            w.conditions.push_back(parse_condition());
        }
        return w;
    }

    Condition parse_condition() {
        Condition c;
        const SourceToken& tok = cur();
        c.line = tok.line;
        c.column = tok.column;
        c.lhs = parse_expression();
        if (at_keyword("IN")) {
            advance();
            c.cmp = Comparator::In;
            expect(TokenKind::LParen, "'(' after IN");
            c.in_list.push_back(parse_expression());
            while (at(TokenKind::Comma)) {
                advance();
                c.in_list.push_back(parse_expression());
            }
            expect(TokenKind::RParen, "')' after IN list");
            return c;
        }
        switch (cur().kind) {
            case TokenKind::Eq: c.cmp = Comparator::Eq; break;
            case TokenKind::Neq: c.cmp = Comparator::Neq; break;
            case TokenKind::Gt: c.cmp = Comparator::Gt; break;
            case TokenKind::Lt: c.cmp = Comparator::Lt; break;
            case TokenKind::Gte: c.cmp = Comparator::Gte; break;
            case TokenKind::Lte: c.cmp = Comparator::Lte; break;
            default:
                throw err("expected a comparator (=, !=, >, <, >=, <=, IN) in WHERE condition");
        }
        advance();
        c.rhs = parse_expression();
        return c;
    }

    std::vector<OrderItem> parse_order_by() {
        advance();  // ORDER
        expect_keyword("BY", "expected BY after ORDER");
        std::vector<OrderItem> items;
        for (;;) {
            OrderItem o;
            o.expr = parse_expression();
            if (at_keyword("ASC")) {
                advance();
            } else if (at_keyword("DESC")) {
                advance();
                o.descending = true;
            }
            items.push_back(std::move(o));
            if (!at(TokenKind::Comma)) break;
            advance();
        }
        return items;
    }

    // --- GENERATE / STORE ---

    GenerateClause parse_generate() {
        GenerateClause g;
        const SourceToken& tok = advance();  // GENERATE
        g.line = tok.line;
        g.column = tok.column;
        g.function_name = expect_ident("generation function name after GENERATE");
        expect(TokenKind::LParen, "'(' after the generation function name");
        g.args = parse_arg_list();
        expect(TokenKind::RParen, "')' after generation arguments");
        if (at_keyword("WITH")) {
            advance();
            for (;;) {
                if (at_keyword("OUTPUT")) {
                    advance();
                    expect_keyword("BUDGET", "expected BUDGET after OUTPUT");
                    g.output_budget_tokens = expect_integer("token count after OUTPUT BUDGET");
                    expect_keyword("TOKENS", "expected TOKENS after the output budget value");
                } else if (at_keyword("TEMPERATURE")) {
                    advance();
                    if (!at(TokenKind::Float)) {
                        throw err("expected a float after TEMPERATURE, found " + found());
                    }
                    g.temperature = std::stod(advance().text);
                } else if (at_keyword("FORMAT")) {
                    advance();
                    g.format = expect_ident("format name after FORMAT");
                } else {
                    throw err("expected OUTPUT BUDGET, TEMPERATURE, or FORMAT, found " + found());
                }
                if (!at(TokenKind::Comma)) break;
                advance();
            }
        }
        return g;
    }

    std::string parse_store() {
        advance();  // STORE
        expect_keyword("RESULT", "expected RESULT after STORE");
        // IN lexes as a keyword (the comparator word) but doubles as the
        // STORE RESULT IN connective.
        expect_keyword("IN", "expected IN after STORE RESULT");
        if (!at_ident("memory")) throw err("expected memory.<key> after STORE RESULT IN");
        advance();
        expect(TokenKind::Dot, "'.' after memory");
        return expect_ident("memory key");
    }

    // --- expressions ---

    Expression parse_expression() {
        Expression e;
        const SourceToken& tok = cur();
        e.line = tok.line;
        e.column = tok.column;
        e.terms.push_back(parse_primary());
        while (at(TokenKind::Plus) || at(TokenKind::Minus)) {
            e.ops.push_back(at(TokenKind::Plus) ? '+' : '-');
            advance();
            e.terms.push_back(parse_primary());
        }
        return e;
    }

    Term parse_primary() {
        Term t;
        const SourceToken& tok = cur();
        t.line = tok.line;
        t.column = tok.column;
        switch (tok.kind) {
            case TokenKind::String:
                t.kind = TermKind::String;
                t.text = advance().text;
                return t;
            case TokenKind::Integer:
                t.kind = TermKind::Integer;
                t.int_value = std::stoll(advance().text);
                return t;
            case TokenKind::Float:
                t.kind = TermKind::Float;
                t.float_value = std::stod(advance().text);
                return t;
            case TokenKind::At:
                advance();
                t.kind = TermKind::Param;
                t.text = expect_ident("parameter name after '@'");
                return t;
            case TokenKind::Ident: {
                std::string head = advance().text;
                if (at(TokenKind::LParen)) {
                    advance();
                    t.kind = TermKind::Call;
                    t.text = std::move(head);
                    t.args = parse_arg_list();
                    expect(TokenKind::RParen, "')' after function arguments");
                    return t;
                }
                t.kind = TermKind::Name;
                t.path.push_back(std::move(head));
                while (at(TokenKind::Dot)) {
                    advance();
                    t.path.push_back(expect_ident("name after '.'"));
                }
                return t;
            }
            default:
                throw err("expected an expression, found " + found());
        }
    }

    // --- EXPLAIN / EXECUTE / CREATE FUNCTION ---

    Statement parse_explain() {
        ExplainStatement e;
        const SourceToken& tok = advance();  // EXPLAIN
        e.line = tok.line;
        e.column = tok.column;
        expect_keyword("PROMPT", "expected PROMPT after EXPLAIN");
        std::string name = expect_ident("prompt name after EXPLAIN PROMPT");
        if (at(TokenKind::Semi) || at(TokenKind::Eof)) {
            e.prompt_name = std::move(name);
            return e;
        }
        // Inline prompt: the identifier was its name and the body follows.
        auto inline_prompt = std::make_shared<PromptStatement>();
        inline_prompt->name = std::move(name);
        inline_prompt->line = tok.line;
        inline_prompt->column = tok.column;
        parse_prompt_body(*inline_prompt);
        e.inline_prompt = std::move(inline_prompt);
        return e;
    }

    Statement parse_execute() {
        ExecuteStatement x;
        const SourceToken& tok = advance();  // EXECUTE
        x.line = tok.line;
        x.column = tok.column;
        expect_keyword("PROMPT", "expected PROMPT after EXECUTE");
        x.prompt_name = expect_ident("prompt name after EXECUTE PROMPT");
        if (at_keyword("WITH")) {
            advance();
            expect_keyword("PARAMS", "expected PARAMS after WITH in EXECUTE");
            expect(TokenKind::LParen, "'(' after PARAMS");
            for (;;) {
                std::string name = expect_ident("parameter name");
                while (at(TokenKind::Dot)) {
                    advance();
                    name += "." + expect_ident("name after '.'");
                }
                expect(TokenKind::Eq, "'=' in parameter assignment");
                x.params.emplace_back(std::move(name), parse_expression());
                if (!at(TokenKind::Comma)) break;
                advance();
            }
            expect(TokenKind::RParen, "')' after PARAMS list");
        }
        return x;
    }

    Statement parse_create_function() {
        CreateFunctionStatement f;
        const SourceToken& tok = advance();  // CREATE
        f.line = tok.line;
        f.column = tok.column;
        expect_keyword("FUNCTION", "expected FUNCTION after CREATE");
        f.name = expect_ident("function name");
        expect(TokenKind::LParen, "'(' after the function name");
        if (!at(TokenKind::RParen)) {
            for (;;) {
                FunctionParam p;
                p.name = expect_ident("parameter name");
                if (at(TokenKind::Ident)) p.type = advance().text;
                f.params.push_back(std::move(p));
                if (!at(TokenKind::Comma)) break;
                advance();
            }
        }
        expect(TokenKind::RParen, "')' after the parameter list");
        expect_keyword("RETURNS", "expected RETURNS after the parameter list");
        f.return_type = expect_ident("return type after RETURNS");
        expect_keyword("AS", "expected AS before the function body");
        if (!at(TokenKind::Dollars)) {
            throw err("expected a $$-delimited function body after AS");
        }
        f.body_text = advance().text;
        return f;
    }
};

/// Parse a full program from source text.
inline std::vector<Statement> parse_program(std::string_view source, ParserOptions options = {}) {
    return Parser(tokenize(source), options).parse_program();
}

/// Parse a token stream (must end with EOF).
inline std::vector<Statement> parse_program(std::vector<SourceToken> tokens,
                                            ParserOptions options = {}) {
    return Parser(std::move(tokens), options).parse_program();
}

}  // namespace spl
