#include "splitkit/expression.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <vector>

namespace splitkit {

struct Expression::Node {
    enum class Op { Number, X1, X2, T, Neg, Add, Sub, Mul, Div, Sin, Cos, Exp };
    Op op = Op::Number;
    double value = 0.0;
    std::shared_ptr<const Node> lhs;
    std::shared_ptr<const Node> rhs;
};

namespace {

using Node = Expression::Node;
using NodePtr = std::shared_ptr<const Node>;

NodePtr make(Node::Op op, NodePtr lhs = nullptr, NodePtr rhs = nullptr, double value = 0.0) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->value = value;
    n->lhs = std::move(lhs);
    n->rhs = std::move(rhs);
    return n;
}

// expr   := term (('+' | '-') term)*
// term   := unary (('*' | '/') unary)*
// unary  := '-' unary | '+' unary | atom
// atom   := number | name | name '(' expr ')' | '(' expr ')'
class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    NodePtr parse() {
        NodePtr root = expr();
        skip();
        if (pos_ != text_.size()) fail("unexpected character");
        return root;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw ExpressionError(what + " at position " + std::to_string(pos_) + " in \"" + std::string(text_) + "\"",
                              pos_);
    }

    void skip() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr expr() {
        NodePtr lhs = term();
        for (;;) {
            if (accept('+')) {
                lhs = make(Node::Op::Add, lhs, term());
            } else if (accept('-')) {
                lhs = make(Node::Op::Sub, lhs, term());
            } else {
                return lhs;
            }
        }
    }

    NodePtr term() {
        NodePtr lhs = unary();
        for (;;) {
            if (accept('*')) {
                lhs = make(Node::Op::Mul, lhs, unary());
            } else if (accept('/')) {
                lhs = make(Node::Op::Div, lhs, unary());
            } else {
                return lhs;
            }
        }
    }

    NodePtr unary() {
        if (accept('-')) return make(Node::Op::Neg, unary());
        if (accept('+')) return unary();
        return atom();
    }

    NodePtr atom() {
        skip();
        if (pos_ >= text_.size()) fail("unexpected end of expression");
        if (accept('(')) {
            NodePtr inner = expr();
            if (!accept(')')) fail("expected ')'");
            return inner;
        }
        const char c = text_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c))) return name();
        fail("unexpected character");
    }

    NodePtr number() {
        double value = 0.0;
        const char* first = text_.data() + pos_;
        const char* last = text_.data() + text_.size();
        const auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc{}) fail("malformed number");
        pos_ += static_cast<std::size_t>(ptr - first);
        return make(Node::Op::Number, nullptr, nullptr, value);
    }

    NodePtr name() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && std::isalnum(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        const std::string_view id = text_.substr(start, pos_ - start);
        if (id == "x1") return make(Node::Op::X1);
        if (id == "x2") return make(Node::Op::X2);
        if (id == "t") return make(Node::Op::T);
        if (id == "pi") return make(Node::Op::Number, nullptr, nullptr, std::numbers::pi);
        Node::Op fn;
        if (id == "sin") {
            fn = Node::Op::Sin;
        } else if (id == "cos") {
            fn = Node::Op::Cos;
        } else if (id == "exp") {
            fn = Node::Op::Exp;
        } else {
            pos_ = start;
            fail("unknown name '" + std::string(id) + "'");
        }
        if (!accept('(')) fail("expected '(' after function name");
        NodePtr arg = expr();
        if (!accept(')')) fail("expected ')'");
        return make(fn, arg);
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

double eval(const Node& n, double x1, double x2, double t) {
    switch (n.op) {
        case Node::Op::Number:
            return n.value;
        case Node::Op::X1:
            return x1;
        case Node::Op::X2:
            return x2;
        case Node::Op::T:
            return t;
        case Node::Op::Neg:
            return -eval(*n.lhs, x1, x2, t);
        case Node::Op::Add:
            return eval(*n.lhs, x1, x2, t) + eval(*n.rhs, x1, x2, t);
        case Node::Op::Sub:
            return eval(*n.lhs, x1, x2, t) - eval(*n.rhs, x1, x2, t);
        case Node::Op::Mul:
            return eval(*n.lhs, x1, x2, t) * eval(*n.rhs, x1, x2, t);
        case Node::Op::Div:
            return eval(*n.lhs, x1, x2, t) / eval(*n.rhs, x1, x2, t);
        case Node::Op::Sin:
            return std::sin(eval(*n.lhs, x1, x2, t));
        case Node::Op::Cos:
            return std::cos(eval(*n.lhs, x1, x2, t));
        case Node::Op::Exp:
            return std::exp(eval(*n.lhs, x1, x2, t));
    }
    return 0.0;
}

bool mentions_time(const Node& n) {
    if (n.op == Node::Op::T) return true;
    return (n.lhs && mentions_time(*n.lhs)) || (n.rhs && mentions_time(*n.rhs));
}

}  // namespace

Expression Expression::parse(std::string_view text) {
    Expression e;
    e.root_ = Parser(text).parse();
    e.source_ = std::string(text);
    return e;
}

double Expression::operator()(double x1, double x2, double t) const { return eval(*root_, x1, x2, t); }

bool Expression::depends_on_time() const noexcept { return mentions_time(*root_); }

}  // namespace splitkit
