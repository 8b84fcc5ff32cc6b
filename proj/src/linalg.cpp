#include "splitkit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>

namespace splitkit {

namespace {

void require_same_size(const GridFunction& a, const GridFunction& b, const char* what) {
    if (a.size() != b.size()) {
        std::ostringstream msg;
        msg << what << ": size mismatch (" << a.size() << " vs " << b.size() << ")";
        throw DimensionError(msg.str());
    }
}

// Deterministic start vector for the power iterations.
GridFunction start_vector(std::size_t n) {
    std::mt19937_64 engine(0x9e3779b97f4a7c15ULL);
    GridFunction v(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double unit = static_cast<double>(engine() >> 11) * 0x1.0p-53;
        v[i] = 2.0 * unit - 1.0;
    }
    v *= 1.0 / norm(v);
    return v;
}

}  // namespace

bool GridFunction::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

GridFunction& GridFunction::operator+=(const GridFunction& other) {
    require_same_size(*this, other, "GridFunction +=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

GridFunction& GridFunction::operator-=(const GridFunction& other) {
    require_same_size(*this, other, "GridFunction -=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
}

GridFunction& GridFunction::operator*=(double factor) noexcept {
    for (double& v : values_) v *= factor;
    return *this;
}

GridFunction operator+(GridFunction lhs, const GridFunction& rhs) { return lhs += rhs; }
GridFunction operator-(GridFunction lhs, const GridFunction& rhs) { return lhs -= rhs; }
GridFunction operator*(double factor, GridFunction x) { return x *= factor; }

double dot(const GridFunction& x, const GridFunction& y) {
    require_same_size(x, y, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

double norm(const GridFunction& x) { return std::sqrt(dot(x, x)); }

double max_abs(const GridFunction& x) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
}

void axpy(double a, const GridFunction& x, GridFunction& y) {
    require_same_size(x, y, "axpy");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

GridFunction hadamard(std::span<const double> weights, const GridFunction& x) {
    if (weights.size() != x.size()) throw DimensionError("hadamard: size mismatch");
    GridFunction out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = weights[i] * x[i];
    return out;
}

// ---------------------------------------------------------------------------
// SparseOperator

SparseOperator SparseOperator::from_triplets(std::size_t rows, std::size_t cols,
                                             std::vector<Triplet> triplets, bool symmetric) {
    for (const auto& t : triplets) {
        if (t.row >= rows || t.col >= cols) {
            std::ostringstream msg;
            msg << "triplet (" << t.row << ", " << t.col << ") outside " << rows << "x" << cols;
            throw DimensionError(msg.str());
        }
    }
    // Stable sort keeps the summation order of duplicates deterministic.
    std::stable_sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });

    SparseOperator op;
    op.rows_ = rows;
    op.cols_ = cols;
    op.symmetric_ = symmetric;
    op.row_offsets_.assign(rows + 1, 0);
    op.column_indices_.reserve(triplets.size());
    op.values_.reserve(triplets.size());

    std::size_t k = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        while (k < triplets.size() && triplets[k].row == r) {
            const std::size_t c = triplets[k].col;
            double v = 0.0;
            while (k < triplets.size() && triplets[k].row == r && triplets[k].col == c) {
                v += triplets[k].value;
                ++k;
            }
            op.column_indices_.push_back(c);
            op.values_.push_back(v);
        }
        op.row_offsets_[r + 1] = op.values_.size();
    }
    return op;
}

SparseOperator SparseOperator::identity(std::size_t n) {
    std::vector<double> ones(n, 1.0);
    return diagonal(ones);
}

SparseOperator SparseOperator::diagonal(std::span<const double> entries) {
    std::vector<Triplet> t;
    t.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) t.push_back({i, i, entries[i]});
    return from_triplets(entries.size(), entries.size(), std::move(t), true);
}

SparseOperator SparseOperator::zero(std::size_t rows, std::size_t cols) {
    return from_triplets(rows, cols, {}, rows == cols);
}

double SparseOperator::at(std::size_t i, std::size_t j) const {
    if (i >= rows_ || j >= cols_) throw DimensionError("SparseOperator::at: index out of range");
    const auto first = column_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[i]);
    const auto last = column_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[i + 1]);
    const auto it = std::lower_bound(first, last, j);
    if (it == last || *it != j) return 0.0;
    return values_[static_cast<std::size_t>(it - column_indices_.begin())];
}

std::vector<double> SparseOperator::diagonal_entries() const {
    std::vector<double> d(std::min(rows_, cols_), 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = at(i, i);
    return d;
}

void SparseOperator::apply(std::span<const double> x, std::span<double> y) const {
    if (x.size() != cols_ || y.size() != rows_) {
        std::ostringstream msg;
        msg << "apply: operator is " << rows_ << "x" << cols_ << ", got x of " << x.size()
            << " and y of " << y.size();
        throw DimensionError(msg.str());
    }
    for (std::size_t r = 0; r < rows_; ++r) {
        double s = 0.0;
        for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
            s += values_[k] * x[column_indices_[k]];
        }
        y[r] = s;
    }
}

GridFunction SparseOperator::apply(const GridFunction& x) const {
    GridFunction y(rows_);
    apply(x.span(), y.span());
    return y;
}

GridFunction SparseOperator::apply_transpose(const GridFunction& x) const {
    if (x.size() != rows_) throw DimensionError("apply_transpose: size mismatch");
    GridFunction y(cols_);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
            y[column_indices_[k]] += values_[k] * x[r];
        }
    }
    return y;
}

SparseOperator SparseOperator::transpose() const {
    std::vector<Triplet> t;
    t.reserve(values_.size());
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
            t.push_back({column_indices_[k], r, values_[k]});
        }
    }
    return from_triplets(cols_, rows_, std::move(t), symmetric_);
}

SparseOperator SparseOperator::scale_rows(std::span<const double> w) const {
    if (w.size() != rows_) throw DimensionError("scale_rows: weight size mismatch");
    SparseOperator out = *this;
    out.symmetric_ = false;
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) out.values_[k] *= w[r];
    }
    return out;
}

SparseOperator SparseOperator::scale_cols(std::span<const double> w) const {
    if (w.size() != cols_) throw DimensionError("scale_cols: weight size mismatch");
    SparseOperator out = *this;
    out.symmetric_ = false;
    for (std::size_t k = 0; k < values_.size(); ++k) out.values_[k] *= w[column_indices_[k]];
    return out;
}

SparseOperator SparseOperator::shifted(double alpha, double beta) const {
    if (rows_ != cols_) throw DimensionError("shifted: operator must be square");
    std::vector<Triplet> t;
    t.reserve(values_.size() + rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        t.push_back({r, r, alpha});
        for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
            t.push_back({r, column_indices_[k], beta * values_[k]});
        }
    }
    return from_triplets(rows_, cols_, std::move(t), symmetric_);
}

SparseOperator SparseOperator::submatrix(std::span<const std::size_t> rows,
                                         std::span<const std::size_t> cols) const {
    std::vector<std::ptrdiff_t> col_map(cols_, -1);
    for (std::size_t j = 0; j < cols.size(); ++j) {
        if (cols[j] >= cols_) throw DimensionError("submatrix: column index out of range");
        col_map[cols[j]] = static_cast<std::ptrdiff_t>(j);
    }
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t r = rows[i];
        if (r >= rows_) throw DimensionError("submatrix: row index out of range");
        for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
            const auto mapped = col_map[column_indices_[k]];
            if (mapped >= 0) t.push_back({i, static_cast<std::size_t>(mapped), values_[k]});
        }
    }
    const bool same_index_set = std::equal(rows.begin(), rows.end(), cols.begin(), cols.end());
    return from_triplets(rows.size(), cols.size(), std::move(t), symmetric_ && same_index_set);
}

SparseOperator SparseOperator::with_symmetric_flag(bool symmetric) const {
    SparseOperator out = *this;
    out.symmetric_ = symmetric;
    return out;
}

std::vector<double> SparseOperator::to_dense() const {
    std::vector<double> dense(rows_ * cols_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
            dense[r * cols_ + column_indices_[k]] += values_[k];
        }
    }
    return dense;
}

double SparseOperator::max_abs_entry() const noexcept {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
}

GridFunction apply(const SparseOperator& op, const GridFunction& x) { return op.apply(x); }

SparseOperator combine(double alpha, const SparseOperator& a, double beta, const SparseOperator& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("combine: shape mismatch");
    std::vector<Triplet> t;
    t.reserve(a.nonzeros() + b.nonzeros());
    auto push = [&t](const SparseOperator& m, double factor) {
        const auto offsets = m.row_offsets();
        const auto cols = m.column_indices();
        const auto vals = m.values();
        for (std::size_t r = 0; r < m.rows(); ++r) {
            for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) t.push_back({r, cols[k], factor * vals[k]});
        }
    };
    push(a, alpha);
    push(b, beta);
    return SparseOperator::from_triplets(a.rows(), a.cols(), std::move(t), a.symmetric() && b.symmetric());
}

SparseOperator operator+(const SparseOperator& a, const SparseOperator& b) { return combine(1.0, a, 1.0, b); }
SparseOperator operator-(const SparseOperator& a, const SparseOperator& b) { return combine(1.0, a, -1.0, b); }

SparseOperator multiply(const SparseOperator& a, const SparseOperator& b) {
    if (a.cols() != b.rows()) throw DimensionError("multiply: inner dimension mismatch");
    const auto ao = a.row_offsets();
    const auto ac = a.column_indices();
    const auto av = a.values();
    const auto bo = b.row_offsets();
    const auto bc = b.column_indices();
    const auto bv = b.values();

    std::vector<Triplet> t;
    std::vector<double> accumulator(b.cols(), 0.0);
    std::vector<char> touched(b.cols(), 0);
    std::vector<std::size_t> pattern;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        pattern.clear();
        for (std::size_t k = ao[r]; k < ao[r + 1]; ++k) {
            const std::size_t mid = ac[k];
            for (std::size_t q = bo[mid]; q < bo[mid + 1]; ++q) {
                const std::size_t c = bc[q];
                if (!touched[c]) {
                    touched[c] = 1;
                    pattern.push_back(c);
                }
                accumulator[c] += av[k] * bv[q];
            }
        }
        std::sort(pattern.begin(), pattern.end());
        for (std::size_t c : pattern) {
            t.push_back({r, c, accumulator[c]});
            accumulator[c] = 0.0;
            touched[c] = 0;
        }
    }
    return SparseOperator::from_triplets(a.rows(), b.cols(), std::move(t), false);
}

SparseOperator sum(std::span<const SparseOperator> terms) {
    if (terms.empty()) throw DimensionError("sum: no terms");
    std::vector<Triplet> t;
    bool symmetric = true;
    for (const auto& m : terms) {
        if (m.rows() != terms.front().rows() || m.cols() != terms.front().cols()) {
            throw DimensionError("sum: shape mismatch");
        }
        symmetric = symmetric && m.symmetric();
        const auto offsets = m.row_offsets();
        const auto cols = m.column_indices();
        const auto vals = m.values();
        for (std::size_t r = 0; r < m.rows(); ++r) {
            for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) t.push_back({r, cols[k], vals[k]});
        }
    }
    return SparseOperator::from_triplets(terms.front().rows(), terms.front().cols(), std::move(t), symmetric);
}

double relative_difference(const SparseOperator& a, const SparseOperator& b) {
    const SparseOperator diff = combine(1.0, a, -1.0, b);
    const double scale = b.max_abs_entry();
    const double d = diff.max_abs_entry();
    return scale > 0.0 ? d / scale : d;
}

bool is_symmetric(const SparseOperator& a, double tol) {
    if (a.rows() != a.cols()) return false;
    return relative_difference(a, a.transpose()) <= tol;
}

// ---------------------------------------------------------------------------
// Solvers

CgResult cg_solve(const SparseOperator& op, const GridFunction& rhs, const CgOptions& options) {
    return cg_solve(op, rhs, GridFunction(rhs.size()), options);
}

CgResult cg_solve(const SparseOperator& op, const GridFunction& rhs, const GridFunction& initial_guess,
                  const CgOptions& options) {
    if (op.rows() != op.cols() || op.cols() != rhs.size() || initial_guess.size() != rhs.size()) {
        throw DimensionError("cg_solve: operator, right-hand side and guess sizes disagree");
    }
    if (!(options.rel_tol > 0.0 && options.rel_tol < 1.0)) {
        throw DomainError("cg_solve: rel_tol must lie in (0, 1)");
    }

    CgResult result;
    const double rhs_norm = norm(rhs);
    if (rhs_norm == 0.0) {
        result.solution = GridFunction(rhs.size());
        return result;
    }
    const double target = options.rel_tol * rhs_norm;

    GridFunction x = initial_guess;
    GridFunction r = rhs - op.apply(x);
    double r_norm = norm(r);
    std::size_t iterations = 0;

    // Outer loop restarts from the true residual whenever the recursive one
    // drifted below the target without the true one following.
    while (r_norm > target) {
        GridFunction p = r;
        double rr = dot(r, r);
        GridFunction ap(rhs.size());
        while (std::sqrt(rr) > target) {
            if (iterations >= options.max_iter) {
                throw SolverError("cg_solve: iteration cap reached", std::sqrt(rr) / rhs_norm, iterations);
            }
            op.apply(p.span(), ap.span());
            const double curvature = dot(p, ap);
            if (!(curvature > 0.0)) {
                throw SolverError("cg_solve: non-positive curvature, operator is not positive definite",
                                  std::sqrt(rr) / rhs_norm, iterations);
            }
            const double alpha = rr / curvature;
            axpy(alpha, p, x);
            axpy(-alpha, ap, r);
            const double rr_next = dot(r, r);
            const double beta = rr_next / rr;
            rr = rr_next;
            for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
            ++iterations;
        }
        r = rhs - op.apply(x);
        r_norm = norm(r);
        if (iterations >= options.max_iter && r_norm > target) {
            throw SolverError("cg_solve: iteration cap reached", r_norm / rhs_norm, iterations);
        }
    }
    if (!x.all_finite()) throw SolverError("cg_solve: non-finite iterate", r_norm / rhs_norm, iterations);

    result.solution = std::move(x);
    result.iterations = iterations;
    result.relative_residual = r_norm / rhs_norm;
    return result;
}

double weighted_norm_squared(const GridFunction& x, NormKind kind, const SparseOperator& a) {
    switch (kind) {
        case NormKind::Identity:
            return dot(x, x);
        case NormKind::A:
            return dot(a.apply(x), x);
        case NormKind::AInverse: {
            if (!a.symmetric()) throw DomainError("weighted_norm: A^{-1} norm needs a symmetric operator");
            const CgResult z = cg_solve(a, x, CgOptions{1e-12, 20000});
            return dot(z.solution, x);
        }
    }
    throw DomainError("weighted_norm: unknown norm kind");
}

double weighted_norm(const GridFunction& x, NormKind kind, const SparseOperator& a) {
    return std::sqrt(std::max(0.0, weighted_norm_squared(x, kind, a)));
}

double operator_norm_estimate(const SparseOperator& op, double tol, std::size_t max_iter) {
    if (op.rows() != op.cols()) throw DimensionError("operator_norm_estimate: operator must be square");
    if (op.rows() == 0) return 0.0;
    GridFunction v = start_vector(op.rows());
    GridFunction w(op.rows());
    double estimate = 0.0;
    for (std::size_t k = 0; k < max_iter; ++k) {
        op.apply(v.span(), w.span());
        const double next = norm(w);
        if (next == 0.0) return 0.0;
        const double change = std::abs(next - estimate);
        estimate = next;
        if (k > 0 && change <= tol * estimate) return estimate;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = w[i] / next;
    }
    throw SolverError("operator_norm_estimate: power iteration did not converge", tol, max_iter);
}

double min_eigenvalue_estimate(const SparseOperator& op, double tol, std::size_t max_iter) {
    const double shift = operator_norm_estimate(op, 1e-6, max_iter);
    GridFunction v = start_vector(op.rows());
    GridFunction av(op.rows());
    double rayleigh = 0.0;
    for (std::size_t k = 0; k < max_iter; ++k) {
        op.apply(v.span(), av.span());
        const double next = dot(av, v);
        const double change = std::abs(next - rayleigh);
        rayleigh = next;
        if (k > 0 && change <= tol * std::max(std::abs(rayleigh), 1e-8 * shift)) return rayleigh;
        // v <- (shift I - A) v, normalised
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = shift * v[i] - av[i];
        const double len = norm(v);
        if (len == 0.0) return rayleigh;
        v *= 1.0 / len;
    }
    throw SolverError("min_eigenvalue_estimate: power iteration did not converge", tol, max_iter);
}

}  // namespace splitkit
