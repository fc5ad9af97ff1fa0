#pragma once

#include <stdexcept>
#include <string>

namespace spl {

enum class TokenKind {
    Keyword,
    Ident,
    String,
    Integer,
    Float,
    Dot,
    Comma,
    LParen,
    RParen,
    Semi,
    Eq,
    Neq,
    Gt,
    Lt,
    Gte,
    Lte,
    Plus,
    Minus,
    At,
    Dollars,
    Colon,
    Pipe,
    Eof,
};

/// One lexical token. `text` is the raw lexeme (decoded value for strings);
/// `keyword` holds the canonical uppercase form iff kind == Keyword.
struct SourceToken {
    TokenKind kind = TokenKind::Eof;
    std::string text;
    std::string keyword;
    int line = 1;
    int column = 1;
};

inline const char* token_kind_name(TokenKind k) {
    switch (k) {
        case TokenKind::Keyword: return "keyword";
        case TokenKind::Ident: return "identifier";
        case TokenKind::String: return "string";
        case TokenKind::Integer: return "integer";
        case TokenKind::Float: return "float";
        case TokenKind::Dot: return ".";
        case TokenKind::Comma: return ",";
        case TokenKind::LParen: return "(";
        case TokenKind::RParen: return ")";
        case TokenKind::Semi: return ";";
        case TokenKind::Eq: return "=";
        case TokenKind::Neq: return "!=";
        case TokenKind::Gt: return ">";
        case TokenKind::Lt: return "<";
        case TokenKind::Gte: return ">=";
        case TokenKind::Lte: return "<=";
        case TokenKind::Plus: return "+";
        case TokenKind::Minus: return "-";
        case TokenKind::At: return "@";
        case TokenKind::Dollars: return "$$";
        case TokenKind::Colon: return ":";
        case TokenKind::Pipe: return "|";
        case TokenKind::Eof: return "end of input";
    }
    return "?";
}

class LexError : public std::runtime_error {
public:
    LexError(std::string message, int line, int column)
        : std::runtime_error(std::move(message)), line(line), column(column) {}
    int line;
    int column;
};

}  // namespace spl
