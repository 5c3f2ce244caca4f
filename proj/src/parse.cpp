#include "hampert/expr.hpp"

#include <cctype>
#include <string>

namespace hampert {

namespace {

// Recursive-descent parser for the expression grammar (see README):
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := ('+'|'-')* power
//   power  := primary ('^' exponent)?
//   primary:= integer | ident | ident '(' expr ')' | '(' expr ')'
// Only sqrt and log are accepted as functions; exponents must be integers.
struct Parser {
    const Workspace* ws;
    const std::string& src;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& msg, std::size_t at) {
        throw Error(ErrKind::Syntax, msg + " at position " + std::to_string(at), at);
    }

    void skip_ws() {
        while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
    }

    bool peek(char c) {
        skip_ws();
        return pos < src.size() && src[pos] == c;
    }

    bool accept(char c) {
        if (peek(c)) {
            ++pos;
            return true;
        }
        return false;
    }

    Expr parse_expr() {
        Expr e = parse_term();
        while (true) {
            if (accept('+'))
                e = e + parse_term();
            else if (accept('-'))
                e = e - parse_term();
            else
                return e;
        }
    }

    Expr parse_term() {
        Expr e = parse_factor();
        while (true) {
            if (accept('*')) {
                e = e * parse_factor();
            } else if (accept('/')) {
                std::size_t at = pos;
                Expr d = parse_factor();
                if (d.is_structurally_zero()) fail("division by zero", at);
                e = e / d;
            } else {
                return e;
            }
        }
    }

    Expr parse_factor() {
        bool negate = false;
        while (true) {
            if (accept('-'))
                negate = !negate;
            else if (accept('+'))
                ;
            else
                break;
        }
        Expr e = parse_power();
        return negate ? -e : e;
    }

    Expr parse_power() {
        Expr base = parse_primary();
        if (accept('^')) {
            int k = parse_exponent();
            if (k < 0 && base.is_structurally_zero())
                fail("zero raised to a negative power", pos);
            return base.pow(k);
        }
        return base;
    }

    int parse_exponent() {
        skip_ws();
        bool paren = accept('(');
        skip_ws();
        bool neg = false;
        if (accept('-')) neg = true;
        skip_ws();
        std::size_t start = pos;
        while (pos < src.size() && std::isdigit(static_cast<unsigned char>(src[pos]))) ++pos;
        if (pos == start) fail("expected integer exponent", start);
        // a fractional exponent is a named error, not a generic syntax error
        if (pos < src.size() && (src[pos] == '.' || (paren && src[pos] == '/')))
            throw Error(ErrKind::NonIntegerExponent,
                        "non-integer exponent at position " + std::to_string(start), start);
        long v = std::stol(src.substr(start, pos - start));
        if (paren) {
            if (!accept(')')) fail("expected ')'", pos);
        }
        return static_cast<int>(neg ? -v : v);
    }

    Expr parse_primary() {
        skip_ws();
        if (pos >= src.size()) fail("unexpected end of input", pos);
        char c = src[pos];
        if (c == '(') {
            ++pos;
            Expr e = parse_expr();
            if (!accept(')')) fail("expected ')'", pos);
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t start = pos;
            while (pos < src.size() && std::isdigit(static_cast<unsigned char>(src[pos]))) ++pos;
            if (pos < src.size() && src[pos] == '.')
                fail("decimal literals are not supported (use rationals like 1/2)", pos);
            Rat v(src.substr(start, pos - start));
            return Expr::constant(ws, v);
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos;
            while (pos < src.size() &&
                   (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_'))
                ++pos;
            std::string ident = src.substr(start, pos - start);
            if (ident == "sqrt" || ident == "log") {
                if (!accept('(')) fail("expected '(' after " + ident, pos);
                Expr arg = parse_expr();
                if (!accept(')')) fail("expected ')'", pos);
                if (ident == "sqrt") return Expr::sqrt_of(arg);
                if (arg.is_structurally_zero()) fail("log of zero", start);
                return Expr::log_of(arg);
            }
            VarRef v = ws->lookup(ident);
            if (v.base < 0)
                throw Error(ErrKind::UnknownIdentifier,
                            "unknown identifier '" + ident + "' at position " +
                                std::to_string(start),
                            start);
            return Expr::variable(ws, v);
        }
        fail(std::string("unexpected character '") + c + "'", pos);
    }
};

}  // namespace

Expr Expr::parse(const Workspace* ws, const std::string& source) {
    Parser p{ws, source};
    Expr e = p.parse_expr();
    p.skip_ws();
    if (p.pos != source.size())
        throw Error(ErrKind::Syntax,
                    "unexpected trailing input at position " + std::to_string(p.pos), p.pos);
    return e;
}

}  // namespace hampert
