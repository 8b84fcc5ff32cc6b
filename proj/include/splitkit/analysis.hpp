#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "splitkit/integrator.hpp"
#include "splitkit/linalg.hpp"

namespace splitkit {

/// Largest dimension accepted by the dense references.
inline constexpr std::size_t kDenseReferenceLimit = 1024;

/// Dense symmetric eigendecomposition A = V diag(lambda) V^T, reused for
/// every evaluation time.
class ExpmReference {
public:
    explicit ExpmReference(const SparseOperator& a);

    std::size_t dimension() const noexcept { return n_; }
    std::span<const double> eigenvalues() const noexcept { return values_; }

    /// exp(-t A) u0
    GridFunction evolve(const GridFunction& u0, double t) const;
    /// Solution of u'' + A u = 0 with u(0) = u0, u'(0) = v0.
    GridFunction oscillate(const GridFunction& u0, const GridFunction& v0, double t) const;

private:
    GridFunction spectral(const GridFunction& x, const std::function<double(double)>& fn) const;

    std::size_t n_ = 0;
    std::vector<double> vectors_;  // column-major
    std::vector<double> values_;
};

/// exp(-t A) u0 by a one-off decomposition.
GridFunction dense_expm_reference(const SparseOperator& a, const GridFunction& u0, double t);

struct RunRecord {
    std::size_t n = 0;
    double t = 0.0;
    double norm_i = 0.0;
    double norm_a = 0.0;
    double norm_cert = 0.0;
    double err_i = 0.0;
    double err_a = 0.0;
    double step_seconds = 0.0;
};

/// Exact solution at time t; empty when no reference is available.
using ReferenceFn = std::function<GridFunction(double)>;

struct RecordOptions {
    /// Measure wall-clock per step; otherwise step_seconds stays 0 so that
    /// output is reproducible byte for byte.
    bool timing = false;
    bool norm_i = true;
    bool norm_a = true;
    bool norm_cert = true;
    /// Squared I-norm growth relative to the start that counts as divergence.
    double divergence_factor = 1e12;
};

/// Snapshot of the current state; unrequested or unavailable values are NaN.
RunRecord make_record(const Integrator& integrator, const ReferenceFn& reference, const RecordOptions& options,
                      double step_seconds = 0.0);

/// Called after every appended record.
using StepObserver = std::function<void(const Integrator&)>;

/// Appends the record of the current state, then advances `steps` times
/// appending one record per step. Throws DivergenceError on a non-finite
/// state or growth past the divergence factor; `out` keeps completed steps.
void record_run(Integrator& integrator, std::size_t steps, const ReferenceFn& reference,
                const RecordOptions& options, std::vector<RunRecord>& out, const StepObserver& observer = {});

struct AprioriCheck {
    bool holds = true;
    /// min over n of rhs_n - lhs_n
    double worst_margin = 0.0;
    std::size_t worst_step = 0;
    double lhs = 0.0;
    double rhs = 0.0;
};

/// Evaluates |y^n|_D^2 <= |u0|_D^2 + 1/2 sum_{k<n} tau |f^{k+s}|^2_{D A^{-1}} for
/// n = 1..N. `trajectory` holds y^0..y^N, `f_history` f^{k+s} for k = 0..N-1
/// (empty for f = 0). The bound holds when the worst margin is at least
/// -slack times the largest right-hand side.
AprioriCheck apriori_check_thm1(std::span<const GridFunction> trajectory, const GridFunction& u0,
                                std::span<const GridFunction> f_history, double tau, NormKind d,
                                const SparseOperator& a, double slack = 1e-10);

struct OrderEstimate {
    std::vector<double> taus;
    std::vector<double> errors;
    /// log2(e_k / e_{k+1})
    std::vector<double> ratios;
    /// Least-squares slope of log error against log tau; NaN when saturated.
    double slope = 0.0;
    bool saturated = false;
};

/// Runs the scheme with step tau for `steps` steps, returning the terminal state.
using LevelRunner = std::function<GridFunction(double tau, std::size_t steps)>;

struct OrderProblem {
    double final_time = 0.0;
    GridFunction reference;
    GridFunction initial;
    /// Norm used for errors and for the divergence test.
    std::function<double(const GridFunction&)> error_norm;
    double divergence_factor = 1e12;
    /// Errors at or below this times max(1, |reference|) count as exact.
    double saturation = 1e-11;
};

/// tau0, tau0/2, ... over `levels` (>= 3) levels with terminal-time errors.
/// final_time / tau0 must be an integer. Throws DivergenceError naming the level.
OrderEstimate estimate_order(const LevelRunner& run, double tau0, std::size_t levels, const OrderProblem& problem);

/// Least-squares slope of log(errors) against log(taus).
double fit_log_slope(std::span<const double> taus, std::span<const double> errors);

}  // namespace splitkit
