#pragma once

// Text grammar for expressions:
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' unary)?          right-associative
//   primary := number | '(' expr ')' | 't'
//            | 'y' '(' index [',' expr] ')'   current or delayed state
//            | fn '(' expr ')'                sin cos tan exp log sqrt sinh cosh tanh abs
//            | identifier                     helper if declared, parameter otherwise
//
// Whitespace is insignificant.

#include <cctype>
#include <cstdlib>
#include <string>
#include <string_view>
#include <unordered_set>

#include "symde/errors.hpp"
#include "symde/expression.hpp"

namespace symde {

struct ParseOptions {
    /// Identifiers that resolve to helper references instead of parameters.
    std::unordered_set<std::string> helpers;
    /// Position of the first character of the text, for diagnostics.
    std::size_t line = 1;
    std::size_t column = 1;
};

namespace detail {

class ExpressionParser {
public:
    ExpressionParser(std::string_view text, const ParseOptions& options) : text_(text), options_(options) {}

    Expr parse() {
        Expr e = expr();
        skip_ws();
        if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& message) const {
        throw ParseError(message, options_.line, options_.column + pos_);
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) {
            skip_ws();
            if (pos_ >= text_.size()) fail(std::string("expected '") + c + "' before end of expression");
            fail(std::string("expected '") + c + "'");
        }
    }

    Expr expr() {
        std::vector<Expr> terms{term()};
        for (;;) {
            if (accept('+')) {
                terms.push_back(term());
            } else if (accept('-')) {
                terms.push_back(-term());
            } else {
                break;
            }
        }
        return Expr::sum(std::move(terms));
    }

    Expr term() {
        std::vector<Expr> factors{unary()};
        for (;;) {
            if (accept('*')) {
                factors.push_back(unary());
            } else if (accept('/')) {
                factors.push_back(Expr::power(unary(), Expr::constant(-1.0)));
            } else {
                break;
            }
        }
        return Expr::product(std::move(factors));
    }

    Expr unary() {
        if (accept('-')) return -unary();
        if (accept('+')) return unary();
        return power();
    }

    Expr power() {
        Expr base = primary();
        if (accept('^')) return Expr::power(std::move(base), unary());
        return base;
    }

    Expr primary() {
        skip_ws();
        if (pos_ >= text_.size()) fail("unexpected end of expression");
        const char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            Expr e = expr();
            expect(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        fail("unexpected '" + std::string(1, c) + "'");
    }

    Expr number() {
        const char* begin = text_.data() + pos_;
        char* end = nullptr;
        // strtod needs a terminated buffer; copy the maximal numeric run.
        std::size_t len = 0;
        while (pos_ + len < text_.size()) {
            char ch = text_[pos_ + len];
            bool exp_sign = len > 0 && (ch == '+' || ch == '-') &&
                            (text_[pos_ + len - 1] == 'e' || text_[pos_ + len - 1] == 'E');
            if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '.' || ch == 'e' || ch == 'E' || exp_sign) {
                ++len;
            } else {
                break;
            }
        }
        std::string buf(begin, len);
        double v = std::strtod(buf.c_str(), &end);
        std::size_t used = static_cast<std::size_t>(end - buf.c_str());
        if (used == 0) fail("malformed number");
        pos_ += used;
        return Expr::constant(v);
    }

    std::size_t index_literal() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        if (start == pos_) fail("expected a non-negative integer state index");
        return static_cast<std::size_t>(std::stoull(std::string(text_.substr(start, pos_ - start))));
    }

    Expr identifier() {
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        std::string name(text_.substr(start, pos_ - start));

        if (name == "t") return Expr::time();
        if (name == "y") {
            expect('(');
            std::size_t index = index_literal();
            if (accept(',')) {
                std::size_t at_pos = pos_;
                Expr at = expr();
                expect(')');
                if (contains_past(at)) {
                    pos_ = at_pos;
                    fail("a delayed state may not appear inside a delay argument");
                }
                return Expr::past_state(index, std::move(at));
            }
            expect(')');
            return Expr::state(index);
        }
        Fn fn;
        if (name != "sign" && fn_from_name(name, fn)) {
            expect('(');
            Expr arg = expr();
            expect(')');
            return Expr::call(fn, std::move(arg));
        }
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == '(') {
            pos_ = start;
            fail("unknown function '" + name + "'");
        }
        if (options_.helpers.count(name) != 0) return Expr::helper(std::move(name));
        return Expr::parameter(std::move(name));
    }

    std::string_view text_;
    const ParseOptions& options_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline Expr parse_expression(std::string_view text, const ParseOptions& options = {}) {
    detail::ExpressionParser p(text, options);
    return p.parse();
}

} // namespace symde
