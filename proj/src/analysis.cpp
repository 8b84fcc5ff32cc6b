#include "splitkit/analysis.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace splitkit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

ExpmReference::ExpmReference(const SparseOperator& a) : n_(a.rows()) {
    if (a.rows() != a.cols()) throw DimensionError("dense reference: operator must be square");
    if (n_ > kDenseReferenceLimit) {
        std::ostringstream msg;
        msg << "dense reference: dimension " << n_ << " exceeds " << kDenseReferenceLimit;
        throw DimensionError(msg.str());
    }
    if (!is_symmetric(a, 1e-13)) throw DomainError("dense reference: operator must be symmetric");
    const std::vector<double> dense = a.to_dense();
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
        dense.data(), static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) throw SolverError("dense reference: eigendecomposition failed", kNaN, 0);
    values_.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + n_);
    vectors_.assign(solver.eigenvectors().data(), solver.eigenvectors().data() + n_ * n_);
}

GridFunction ExpmReference::spectral(const GridFunction& x, const std::function<double(double)>& fn) const {
    if (x.size() != n_) throw DimensionError("dense reference: vector size mismatch");
    const auto n = static_cast<Eigen::Index>(n_);
    const Eigen::Map<const Eigen::MatrixXd> v(vectors_.data(), n, n);
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), n);
    Eigen::VectorXd coeff = v.transpose() * xv;
    for (Eigen::Index k = 0; k < n; ++k) coeff[k] *= fn(values_[static_cast<std::size_t>(k)]);
    const Eigen::VectorXd out = v * coeff;
    return GridFunction(std::vector<double>(out.data(), out.data() + n));
}

GridFunction ExpmReference::evolve(const GridFunction& u0, double t) const {
    return spectral(u0, [t](double lambda) { return std::exp(-lambda * t); });
}

GridFunction ExpmReference::oscillate(const GridFunction& u0, const GridFunction& v0, double t) const {
    GridFunction out = spectral(u0, [t](double lambda) { return std::cos(std::sqrt(std::max(lambda, 0.0)) * t); });
    out += spectral(v0, [t](double lambda) {
        const double w = std::sqrt(std::max(lambda, 0.0));
        return w > 0.0 ? std::sin(w * t) / w : t;
    });
    return out;
}

GridFunction dense_expm_reference(const SparseOperator& a, const GridFunction& u0, double t) {
    return ExpmReference(a).evolve(u0, t);
}

RunRecord make_record(const Integrator& integrator, const ReferenceFn& reference, const RecordOptions& options,
                      double step_seconds) {
    RunRecord r;
    r.n = integrator.step_index();
    r.t = integrator.time();
    const GridFunction& y = integrator.solution();
    const SparseOperator& a = integrator.norm_operator();
    r.norm_i = options.norm_i ? norm(y) : kNaN;
    r.norm_a = options.norm_a ? weighted_norm(y, NormKind::A, a) : kNaN;
    r.norm_cert = options.norm_cert ? integrator.certified_norm() : kNaN;
    r.err_i = kNaN;
    r.err_a = kNaN;
    if (reference) {
        const GridFunction e = y - reference(r.t);
        r.err_i = norm(e);
        r.err_a = weighted_norm(e, NormKind::A, a);
    }
    r.step_seconds = step_seconds;
    return r;
}

void record_run(Integrator& integrator, std::size_t steps, const ReferenceFn& reference,
                const RecordOptions& options, std::vector<RunRecord>& out, const StepObserver& observer) {
    const double initial_energy = dot(integrator.solution(), integrator.solution());
    out.push_back(make_record(integrator, reference, options));
    if (observer) observer(integrator);
    for (std::size_t k = 0; k < steps; ++k) {
        double seconds = 0.0;
        if (options.timing) {
            const auto start = std::chrono::steady_clock::now();
            integrator.advance();
            seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        } else {
            integrator.advance();
        }
        const GridFunction& y = integrator.solution();
        const double energy = dot(y, y);
        const bool blown = !y.all_finite() || !std::isfinite(energy) ||
                           (initial_energy > 0.0 && energy > options.divergence_factor * initial_energy);
        if (blown) {
            std::ostringstream msg;
            msg << "divergence at step " << integrator.step_index() << ": |y|^2 = " << energy;
            throw DivergenceError(msg.str(), integrator.step_index());
        }
        out.push_back(make_record(integrator, reference, options, seconds));
        if (observer) observer(integrator);
    }
}

namespace {

// |f|^2_{D A^{-1}}
double forcing_weight(const GridFunction& f, NormKind d, const SparseOperator& a) {
    switch (d) {
        case NormKind::A:
            return dot(f, f);
        case NormKind::Identity:
            return weighted_norm_squared(f, NormKind::AInverse, a);
        case NormKind::AInverse: {
            const GridFunction z = cg_solve(a, f, CgOptions{1e-12, 20000}).solution;
            return dot(z, z);
        }
    }
    return 0.0;
}

}  // namespace

AprioriCheck apriori_check_thm1(std::span<const GridFunction> trajectory, const GridFunction& u0,
                                std::span<const GridFunction> f_history, double tau, NormKind d,
                                const SparseOperator& a, double slack) {
    AprioriCheck out;
    if (trajectory.size() < 2) return out;
    const std::size_t steps = trajectory.size() - 1;
    if (!f_history.empty() && f_history.size() < steps) {
        throw DimensionError("apriori check: forcing history shorter than trajectory");
    }
    const double base = weighted_norm_squared(u0, d, a);
    double forcing = 0.0;
    double scale = base;
    bool first = true;
    for (std::size_t n = 1; n <= steps; ++n) {
        if (!f_history.empty()) forcing += 0.5 * tau * forcing_weight(f_history[n - 1], d, a);
        const double rhs = base + forcing;
        const double lhs = weighted_norm_squared(trajectory[n], d, a);
        const double margin = std::isfinite(lhs) ? rhs - lhs : -std::numeric_limits<double>::infinity();
        scale = std::max(scale, rhs);
        if (first || margin < out.worst_margin) {
            out.worst_margin = margin;
            out.worst_step = n;
            out.lhs = lhs;
            out.rhs = rhs;
            first = false;
        }
    }
    out.holds = out.worst_margin >= -slack * scale;
    return out;
}

double fit_log_slope(std::span<const double> taus, std::span<const double> errors) {
    if (taus.size() != errors.size() || taus.size() < 2) throw DimensionError("fit_log_slope: need matching levels");
    const double m = static_cast<double>(taus.size());
    double sx = 0.0;
    double sy = 0.0;
    for (std::size_t k = 0; k < taus.size(); ++k) {
        sx += std::log(taus[k]);
        sy += std::log(errors[k]);
    }
    const double mx = sx / m;
    const double my = sy / m;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t k = 0; k < taus.size(); ++k) {
        const double dx = std::log(taus[k]) - mx;
        sxy += dx * (std::log(errors[k]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

OrderEstimate estimate_order(const LevelRunner& run, double tau0, std::size_t levels, const OrderProblem& problem) {
    if (levels < 3) throw DomainError("estimate_order: at least three levels");
    if (!(tau0 > 0.0)) throw DomainError("estimate_order: tau0 must be positive");
    if (!problem.error_norm) throw DomainError("estimate_order: error norm missing");
    const double ratio = problem.final_time / tau0;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
        throw DomainError("estimate_order: final time must be a positive multiple of tau0");
    }
    const double initial = problem.error_norm(problem.initial);
    const double ref_norm = problem.error_norm(problem.reference);
    OrderEstimate est;
    auto steps = static_cast<std::size_t>(rounded);
    double tau = tau0;
    for (std::size_t level = 0; level < levels; ++level) {
        const GridFunction y = run(tau, steps);
        if (y.size() != problem.reference.size()) throw DimensionError("estimate_order: runner returned wrong size");
        const double size = problem.error_norm(y);
        if (!y.all_finite() || !std::isfinite(size) ||
            (initial > 0.0 && size * size > problem.divergence_factor * initial * initial)) {
            std::ostringstream msg;
            msg << "estimate_order: level " << level << " (tau = " << tau << ") diverged";
            throw DivergenceError(msg.str(), level);
        }
        est.taus.push_back(tau);
        est.errors.push_back(problem.error_norm(y - problem.reference));
        tau *= 0.5;
        steps *= 2;
    }
    const double floor = problem.saturation * std::max(1.0, ref_norm);
    est.saturated = true;
    for (const double e : est.errors) est.saturated = est.saturated && e <= floor;
    for (std::size_t k = 0; k + 1 < est.errors.size(); ++k) {
        est.ratios.push_back(std::log2(est.errors[k] / est.errors[k + 1]));
    }
    est.slope = est.saturated ? kNaN : fit_log_slope(est.taus, est.errors);
    return est;
}

}  // namespace splitkit
