#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "splitkit/errors.hpp"

namespace splitkit {

/// Real vector indexed by interior grid nodes.
///
/// Holds the discrete solution, its splitting components and right-hand
/// sides. Arithmetic helpers below reduce in fixed left-to-right order so
/// that results are bitwise reproducible.
class GridFunction {
public:
    GridFunction() = default;
    explicit GridFunction(std::size_t size, double value = 0.0) : values_(size, value) {}
    explicit GridFunction(std::vector<double> values) : values_(std::move(values)) {}
    GridFunction(std::initializer_list<double> values) : values_(values) {}

    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    double* data() noexcept { return values_.data(); }
    const double* data() const noexcept { return values_.data(); }
    auto begin() noexcept { return values_.begin(); }
    auto end() noexcept { return values_.end(); }
    auto begin() const noexcept { return values_.begin(); }
    auto end() const noexcept { return values_.end(); }

    std::span<double> span() noexcept { return values_; }
    std::span<const double> span() const noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }

    bool all_finite() const noexcept;

    GridFunction& operator+=(const GridFunction& other);
    GridFunction& operator-=(const GridFunction& other);
    GridFunction& operator*=(double factor) noexcept;

    friend bool operator==(const GridFunction&, const GridFunction&) = default;

private:
    std::vector<double> values_;
};

GridFunction operator+(GridFunction lhs, const GridFunction& rhs);
GridFunction operator-(GridFunction lhs, const GridFunction& rhs);
GridFunction operator*(double factor, GridFunction x);

double dot(const GridFunction& x, const GridFunction& y);
double norm(const GridFunction& x);
double max_abs(const GridFunction& x);
/// y += a * x
void axpy(double a, const GridFunction& x, GridFunction& y);
/// Entrywise product with a weight vector.
GridFunction hadamard(std::span<const double> weights, const GridFunction& x);

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

/// Compressed-row sparse matrix.
///
/// Column indices are sorted within each row and duplicate triplets are
/// summed at construction. The symmetric flag is a claim made by the
/// producer; `is_symmetric` verifies it numerically.
class SparseOperator {
public:
    SparseOperator() = default;

    static SparseOperator from_triplets(std::size_t rows, std::size_t cols,
                                        std::vector<Triplet> triplets, bool symmetric = false);
    static SparseOperator identity(std::size_t n);
    static SparseOperator diagonal(std::span<const double> entries);
    static SparseOperator zero(std::size_t rows, std::size_t cols);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t nonzeros() const noexcept { return values_.size(); }
    bool symmetric() const noexcept { return symmetric_; }

    std::span<const std::size_t> row_offsets() const noexcept { return row_offsets_; }
    std::span<const std::size_t> column_indices() const noexcept { return column_indices_; }
    std::span<const double> values() const noexcept { return values_; }

    /// Entry (i, j); zero when not stored.
    double at(std::size_t i, std::size_t j) const;
    std::vector<double> diagonal_entries() const;

    /// y = A x. Sizes must match exactly.
    void apply(std::span<const double> x, std::span<double> y) const;
    GridFunction apply(const GridFunction& x) const;
    GridFunction apply_transpose(const GridFunction& x) const;

    SparseOperator transpose() const;
    /// diag(w) * A
    SparseOperator scale_rows(std::span<const double> w) const;
    /// A * diag(w)
    SparseOperator scale_cols(std::span<const double> w) const;
    /// alpha * I + beta * A (square only).
    SparseOperator shifted(double alpha, double beta) const;
    /// Rows and columns restricted to the given (sorted) index set.
    SparseOperator submatrix(std::span<const std::size_t> rows,
                             std::span<const std::size_t> cols) const;
    SparseOperator with_symmetric_flag(bool symmetric) const;

    /// Row-major dense copy (desk-scale oracles only).
    std::vector<double> to_dense() const;

    double max_abs_entry() const noexcept;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::size_t> row_offsets_{0};
    std::vector<std::size_t> column_indices_;
    std::vector<double> values_;
    bool symmetric_ = false;
};

GridFunction apply(const SparseOperator& op, const GridFunction& x);

/// alpha * A + beta * B
SparseOperator combine(double alpha, const SparseOperator& a, double beta, const SparseOperator& b);
SparseOperator operator+(const SparseOperator& a, const SparseOperator& b);
SparseOperator operator-(const SparseOperator& a, const SparseOperator& b);
SparseOperator multiply(const SparseOperator& a, const SparseOperator& b);
SparseOperator sum(std::span<const SparseOperator> terms);

/// max |a_ij - b_ij| / max |b_ij| (absolute when b vanishes).
double relative_difference(const SparseOperator& a, const SparseOperator& b);
/// Entrywise check |a_ij - a_ji| <= tol * max |a|.
bool is_symmetric(const SparseOperator& a, double tol = 1e-14);

enum class NormKind { Identity, A, AInverse };

struct CgOptions {
    double rel_tol = 1e-13;
    std::size_t max_iter = 20000;
};

struct CgResult {
    GridFunction solution;
    std::size_t iterations = 0;
    double relative_residual = 0.0;
};

/// Conjugate gradients for a symmetric positive definite operator.
///
/// On return ||op x - rhs|| <= rel_tol ||rhs|| holds for the true residual.
/// Throws SolverError when the iteration cap is hit or a direction of
/// non-positive curvature shows up.
CgResult cg_solve(const SparseOperator& op, const GridFunction& rhs, const CgOptions& options = {});
CgResult cg_solve(const SparseOperator& op, const GridFunction& rhs, const GridFunction& initial_guess,
                  const CgOptions& options = {});

/// (D x, x)^{1/2} with D one of I, A, A^{-1}. The A^{-1} case solves A z = x
/// by CG at relative tolerance 1e-12.
double weighted_norm(const GridFunction& x, NormKind kind, const SparseOperator& a);
double weighted_norm_squared(const GridFunction& x, NormKind kind, const SparseOperator& a);

/// Power iteration for the largest-magnitude eigenvalue of a symmetric operator.
double operator_norm_estimate(const SparseOperator& op, double tol = 1e-10, std::size_t max_iter = 200000);

/// Smallest Ritz value of a symmetric positive semidefinite operator, by power
/// iteration on the shifted operator (||A|| I - A). The returned Rayleigh
/// quotient never undercuts the true minimum eigenvalue beyond roundoff.
double min_eigenvalue_estimate(const SparseOperator& op, double tol = 1e-12, std::size_t max_iter = 200000);

}  // namespace splitkit
