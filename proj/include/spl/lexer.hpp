#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "spl/token.hpp"

namespace spl {

/// Reserved words. Built-in source names (system_role, context, rag, memory)
/// deliberately lex as identifiers; the parser recognizes them positionally.
inline const std::unordered_set<std::string>& keyword_set() {
    static const std::unordered_set<std::string> kw = {
        // structural
        "PROMPT", "SELECT", "GENERATE", "WITH", "AS", "FROM",
        // budget
        "BUDGET", "TOKENS", "LIMIT", "OUTPUT",
        // model
        "USING", "MODEL", "TEMPERATURE", "FORMAT",
        // filtering
        "WHERE", "AND", "OR", "NOT", "IN", "ORDER", "BY", "ASC", "DESC",
        // functions
        "CREATE", "FUNCTION", "RETURNS",
        // control
        "EXPLAIN", "EXECUTE", "PARAMS", "STORE", "RESULT", "CACHE", "FOR",
    };
    return kw;
}

inline std::string to_upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

/// Character-by-character scanner producing the full token stream,
/// terminated by a single EOF token.
class Lexer {
public:
    explicit Lexer(std::string_view source) : src_(source) {}

    std::vector<SourceToken> scan_all() {
        std::vector<SourceToken> tokens;
        for (;;) {
            SourceToken t = next();
            bool done = t.kind == TokenKind::Eof;
            tokens.push_back(std::move(t));
            if (done) break;
        }
        return tokens;
    }

private:
    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int column_ = 1;

    bool at_end() const { return pos_ >= src_.size(); }
    char peek(std::size_t off = 0) const {
        return pos_ + off < src_.size() ? src_[pos_ + off] : '\0';
    }
    char prev_char() const { return pos_ > 0 ? src_[pos_ - 1] : '\0'; }

    char advance() {
        char c = src_[pos_++];
        if (c == '\n') {
            ++line_;
            column_ = 1;
        } else {
            ++column_;
        }
        return c;
    }

    void skip_trivia() {
        while (!at_end()) {
            char c = peek();
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                advance();
            } else if (c == '-' && peek(1) == '-') {
                while (!at_end() && peek() != '\n') advance();
            } else {
                break;
            }
        }
    }

    SourceToken make(TokenKind kind, std::string text, int line, int column) const {
        SourceToken t;
        t.kind = kind;
        t.text = std::move(text);
        t.line = line;
        t.column = column;
        return t;
    }

    static bool is_ident_start(char c) {
        return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
    }
    static bool is_ident_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    }
    static bool is_digit(char c) { return c >= '0' && c <= '9'; }

    SourceToken next() {
        skip_trivia();
        int line = line_;
        int col = column_;
        if (at_end()) return make(TokenKind::Eof, "", line, col);

        char c = peek();

        if (is_ident_start(c)) return scan_word(line, col);
        if (is_digit(c)) return scan_number(line, col);
        if (c == '\'' || c == '"') return scan_string(line, col);
        if (c == '$' && peek(1) == '$') return scan_dollar_body(line, col);

        if (c == '.') {
            // Float literals require digits on both sides of the dot, so a dot
            // that starts a fresh lexeme must not be followed by a digit. Dots
            // glued to an identifier or number (context.question, llama3.1)
            // are ordinary DOT tokens.
            bool starts_lexeme = pos_ == 0 || !is_ident_char(prev_char());
            if (starts_lexeme && is_digit(peek(1))) {
                throw LexError("float literal requires digits before the decimal point", line, col);
            }
            advance();
            return make(TokenKind::Dot, ".", line, col);
        }

        advance();
        switch (c) {
            case ',': return make(TokenKind::Comma, ",", line, col);
            case '(': return make(TokenKind::LParen, "(", line, col);
            case ')': return make(TokenKind::RParen, ")", line, col);
            case ';': return make(TokenKind::Semi, ";", line, col);
            case '=': return make(TokenKind::Eq, "=", line, col);
            case '+': return make(TokenKind::Plus, "+", line, col);
            case '-': return make(TokenKind::Minus, "-", line, col);
            case '@': return make(TokenKind::At, "@", line, col);
            case ':': return make(TokenKind::Colon, ":", line, col);
            case '|': return make(TokenKind::Pipe, "|", line, col);
            case '!':
                if (peek() == '=') {
                    advance();
                    return make(TokenKind::Neq, "!=", line, col);
                }
                throw LexError("illegal character '!'", line, col);
            case '>':
                if (peek() == '=') {
                    advance();
                    return make(TokenKind::Gte, ">=", line, col);
                }
                return make(TokenKind::Gt, ">", line, col);
            case '<':
                if (peek() == '=') {
                    advance();
                    return make(TokenKind::Lte, "<=", line, col);
                }
                return make(TokenKind::Lt, "<", line, col);
            default:
                throw LexError("illegal character '" + std::string(1, c) + "'", line, col);
        }
    }

    SourceToken scan_word(int line, int col) {
        std::size_t start = pos_;
        while (!at_end() && is_ident_char(peek())) advance();
        std::string text(src_.substr(start, pos_ - start));
        std::string upper = to_upper(text);
        if (keyword_set().count(upper)) {
            SourceToken t = make(TokenKind::Keyword, std::move(text), line, col);
            t.keyword = std::move(upper);
            return t;
        }
        return make(TokenKind::Ident, std::move(text), line, col);
    }

    SourceToken scan_number(int line, int col) {
        std::size_t start = pos_;
        while (!at_end() && is_digit(peek())) advance();
        if (peek() == '.' && is_digit(peek(1))) {
            advance();  // '.'
            while (!at_end() && is_digit(peek())) advance();
            return make(TokenKind::Float, std::string(src_.substr(start, pos_ - start)), line, col);
        }
        return make(TokenKind::Integer, std::string(src_.substr(start, pos_ - start)), line, col);
    }

    SourceToken scan_string(int line, int col) {
        char quote = advance();
        std::string value;
        while (!at_end()) {
            char c = advance();
            if (c == quote) {
                SourceToken t = make(TokenKind::String, std::move(value), line, col);
                return t;
            }
            if (c == '\\') {
                if (at_end()) break;
                char e = advance();
                switch (e) {
                    case '"': value += '"'; break;
                    case '\'': value += '\''; break;
                    case '\\': value += '\\'; break;
                    case 'n': value += '\n'; break;
                    default:
                        value += '\\';
                        value += e;
                        break;
                }
                continue;
            }
            value += c;
        }
        throw LexError("unterminated string literal", line, col);
    }

    SourceToken scan_dollar_body(int line, int col) {
        advance();
        advance();  // consume $$
        std::string body;
        while (!at_end()) {
            if (peek() == '$' && peek(1) == '$') {
                advance();
                advance();
                return make(TokenKind::Dollars, std::move(body), line, col);
            }
            body += advance();
        }
        throw LexError("unterminated $$ body", line, col);
    }
};

/// Tokenize SPL source text. Keywords match case-insensitively; `--` comments
/// are elided; string literals accept single or double quotes and may span
/// lines; `$$ ... $$` captures a raw function body as one token.
inline std::vector<SourceToken> tokenize(std::string_view source) {
    return Lexer(source).scan_all();
}

}  // namespace spl
