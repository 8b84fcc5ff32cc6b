#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "splitkit/errors.hpp"

namespace splitkit {

/// Parse failure with the 0-based character offset of the problem.
class ExpressionError : public Error {
public:
    ExpressionError(const std::string& what, std::size_t position) : Error(what), position_(position) {}
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// Arithmetic expression in x1, x2 and t.
///
/// Grammar: numbers, `pi`, the variables, unary minus, + - * /, parentheses,
/// and the functions sin, cos, exp.
class Expression {
public:
    static Expression parse(std::string_view text);

    double operator()(double x1, double x2, double t = 0.0) const;
    /// Whether t appears in the expression.
    bool depends_on_time() const noexcept;
    const std::string& source() const noexcept { return source_; }

    struct Node;

private:
    std::shared_ptr<const Node> root_;
    std::string source_;
};

}  // namespace splitkit
