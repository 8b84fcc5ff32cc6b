#include "splitkit/schemes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <utility>

namespace splitkit {

namespace {

constexpr std::array<std::pair<SchemeKind, std::string_view>, 14> kSchemeNames{{
    {SchemeKind::Weighted, "WEIGHTED"},
    {SchemeKind::Factorized, "FACTORIZED"},
    {SchemeKind::Componentwise, "COMPONENTWISE"},
    {SchemeKind::ComponentwiseSymmetrized, "COMPONENTWISE_SYMMETRIZED"},
    {SchemeKind::AdditiveAveraged, "ADDITIVE_AVERAGED"},
    {SchemeKind::Regularized, "REGULARIZED"},
    {SchemeKind::VectorAdditive, "VECTOR_ADDITIVE"},
    {SchemeKind::Subdomain418, "SUBDOMAIN_418"},
    {SchemeKind::Subdomain422, "SUBDOMAIN_422"},
    {SchemeKind::ComponentSpace57, "COMPONENT_SPACE_57"},
    {SchemeKind::ComponentSpace3Level, "COMPONENT_SPACE_3LEVEL"},
    {SchemeKind::SecondOrderRegularized, "SECOND_ORDER_REGULARIZED"},
    {SchemeKind::SystemRowSplit, "SYSTEM_ROW_SPLIT"},
    {SchemeKind::SystemColumnSplit, "SYSTEM_COLUMN_SPLIT"},
}};

void check_step(const StepConfig& cfg) {
    if (!(cfg.tau > 0.0) || !std::isfinite(cfg.tau)) throw DomainError("time step must be positive and finite");
    if (!std::isfinite(cfg.sigma)) throw DomainError("weight sigma must be finite");
}

void check_size(const GridFunction& x, std::size_t n, const char* what) {
    if (x.size() != n) {
        std::ostringstream msg;
        msg << what << ": expected size " << n << ", got " << x.size();
        throw DimensionError(msg.str());
    }
}

void check_family(const OperatorFamily& family, std::size_t n) {
    if (family.summands.empty()) throw DimensionError("operator family has no summands");
    for (const auto& s : family.summands) {
        if (s.rows() != n || s.cols() != n) throw DimensionError("operator family summand has wrong shape");
    }
}

// rhs = y - c * ay + tau * f
GridFunction explicit_part(const GridFunction& y, const GridFunction& ay, double c, double tau,
                           const GridFunction* f) {
    GridFunction rhs(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) rhs[i] = y[i] - c * ay[i];
    if (f != nullptr) {
        check_size(*f, y.size(), "forcing");
        for (std::size_t i = 0; i < y.size(); ++i) rhs[i] += tau * (*f)[i];
    }
    return rhs;
}

std::vector<std::size_t> positive_support(std::span<const double> w) {
    std::vector<std::size_t> s;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] > 0.0) s.push_back(i);
    }
    return s;
}

// c W_S^{-1} + shift A_SS, diagonal entries laid down before the A entries
// (the same triplet order SparseOperator::shifted uses).
SparseOperator support_matrix(const SparseOperator& a, std::span<const std::size_t> s, std::span<const double> w,
                              double c, double shift) {
    const SparseOperator sub = a.submatrix(s, s);
    const auto offsets = sub.row_offsets();
    const auto cols = sub.column_indices();
    const auto vals = sub.values();
    std::vector<Triplet> t;
    t.reserve(sub.nonzeros() + s.size());
    for (std::size_t r = 0; r < s.size(); ++r) {
        const double d = c / w[s[r]];
        if (!std::isfinite(d)) {
            std::ostringstream msg;
            msg << "singular restricted system: weight " << w[s[r]] << " at node " << s[r];
            throw DomainError(msg.str());
        }
        t.push_back({r, r, d});
        for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) t.push_back({r, cols[k], shift * vals[k]});
    }
    return SparseOperator::from_triplets(s.size(), s.size(), std::move(t), true);
}

GridFunction gather(const GridFunction& x, std::span<const std::size_t> s) {
    GridFunction out(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) out[k] = x[s[k]];
    return out;
}

GridFunction solve_row_scaled(const SparseOperator& a, std::span<const double> w, double shift,
                              const GridFunction& rhs, const GridFunction& guess, const CgOptions& solver) {
    const auto s = positive_support(w);
    GridFunction x = rhs;
    if (s.empty()) return x;
    GridFunction b(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) b[k] = rhs[s[k]] / w[s[k]];
    if (s.size() < rhs.size()) {
        GridFunction outside = rhs;
        for (const auto i : s) outside[i] = 0.0;
        const GridFunction coupling = a.apply(outside);
        for (std::size_t k = 0; k < s.size(); ++k) b[k] -= shift * coupling[s[k]];
    }
    const auto z = cg_solve(support_matrix(a, s, w, 1.0, shift), b, gather(guess, s), solver);
    for (std::size_t k = 0; k < s.size(); ++k) x[s[k]] = z.solution[k];
    return x;
}

GridFunction solve_column_scaled(const SparseOperator& a, std::span<const double> w, double shift,
                                 const GridFunction& rhs, const GridFunction& guess, const CgOptions& solver) {
    const auto s = positive_support(w);
    GridFunction x = rhs;
    if (s.empty()) return x;
    GridFunction z0(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) z0[k] = w[s[k]] * guess[s[k]];
    const auto z = cg_solve(support_matrix(a, s, w, 1.0, shift), gather(rhs, s), z0, solver);
    GridFunction spread(rhs.size());
    for (std::size_t k = 0; k < s.size(); ++k) {
        x[s[k]] = z.solution[k] / w[s[k]];
        spread[s[k]] = z.solution[k];
    }
    if (s.size() < rhs.size()) {
        const GridFunction coupling = a.apply(spread);
        std::vector<bool> inside(rhs.size(), false);
        for (const auto i : s) inside[i] = true;
        for (std::size_t i = 0; i < rhs.size(); ++i) {
            if (!inside[i]) x[i] = rhs[i] - shift * coupling[i];
        }
    }
    return x;
}

// Weighted sub-step (I + s tau A_a) y+ = y - (1-s) tau A_a y + tau f.
GridFunction family_substep(const OperatorFamily& family, std::size_t part, const GridFunction& y,
                            const GridFunction* f, double sigma, double tau, const CgOptions& solver) {
    const GridFunction ay = family.summands[part].apply(y);
    const GridFunction rhs = explicit_part(y, ay, (1.0 - sigma) * tau, tau, f);
    return solve_shifted(family, part, sigma * tau, rhs, y, solver);
}

// Entrywise mean whose per-entry reduction order is independent of the
// order of `parts`.
GridFunction sorted_average(const std::vector<GridFunction>& parts) {
    const std::size_t n = parts.front().size();
    GridFunction out(n);
    std::vector<double> column(parts.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < parts.size(); ++a) column[a] = parts[a][i];
        std::sort(column.begin(), column.end());
        double acc = 0.0;
        for (const double v : column) acc += v;
        out[i] = acc / static_cast<double>(parts.size());
    }
    return out;
}

GridFunction family_apply(const OperatorFamily& family, const GridFunction& y) {
    GridFunction out(y.size());
    for (const auto& s : family.summands) out += s.apply(y);
    return out;
}

const GridFunction* forcing_part(std::span<const GridFunction> f_parts, std::size_t part, std::size_t parts) {
    if (f_parts.empty()) return nullptr;
    if (f_parts.size() != parts) throw DimensionError("forcing split must have one term per summand");
    return &f_parts[part];
}

void check_state(const VectorState& state, std::size_t parts) {
    if (state.components.size() != parts) {
        std::ostringstream msg;
        msg << "vector state has " << state.components.size() << " components, family has " << parts;
        throw DimensionError(msg.str());
    }
}

SparseOperator component_operator(const SparseOperator& a, const SpaceRestrictionFamily& g, std::size_t part) {
    const auto s = g.support(part);
    const auto r = g.scaling(part);
    return a.submatrix(s, s).scale_rows(r).scale_cols(r).with_symmetric_flag(true);
}

GridFunction restricted_residual(const SpaceRestrictionFamily& g, std::size_t part, const GridFunction& ay) {
    const auto s = g.support(part);
    const auto r = g.scaling(part);
    GridFunction out(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) out[k] = r[k] * ay[s[k]];
    return out;
}

// (D x, y) for D in {I, A, A^{-1}}.
double metric_dot(const GridFunction& x, const GridFunction& y, NormKind kind, const SparseOperator& a) {
    switch (kind) {
        case NormKind::Identity:
            return dot(x, y);
        case NormKind::A:
            return dot(a.apply(x), y);
        case NormKind::AInverse:
            return dot(cg_solve(a, x, CgOptions{1e-12, 20000}).solution, y);
    }
    return 0.0;
}

}  // namespace

std::string_view scheme_name(SchemeKind kind) noexcept {
    for (const auto& [k, name] : kSchemeNames) {
        if (k == kind) return name;
    }
    return "UNKNOWN";
}

std::optional<SchemeKind> parse_scheme_kind(std::string_view name) noexcept {
    for (const auto& [k, n] : kSchemeNames) {
        if (n == name) return k;
    }
    return std::nullopt;
}

std::optional<double> stability_threshold(SchemeKind kind, std::size_t parts) noexcept {
    const double p = static_cast<double>(parts);
    switch (kind) {
        case SchemeKind::Weighted:
        case SchemeKind::Factorized:
        case SchemeKind::Componentwise:
        case SchemeKind::ComponentwiseSymmetrized:
        case SchemeKind::AdditiveAveraged:
            return 0.5;
        case SchemeKind::Regularized:
        case SchemeKind::VectorAdditive:
        case SchemeKind::Subdomain418:
        case SchemeKind::ComponentSpace57:
            return 0.5 * p;
        case SchemeKind::ComponentSpace3Level:
        case SchemeKind::SecondOrderRegularized:
            return 0.25 * p;
        case SchemeKind::Subdomain422:
        case SchemeKind::SystemRowSplit:
        case SchemeKind::SystemColumnSplit:
            return std::nullopt;
    }
    return std::nullopt;
}

GridFunction solve_shifted(const OperatorFamily& family, std::size_t part, double shift, const GridFunction& rhs,
                           const GridFunction& guess, const CgOptions& solver) {
    if (part >= family.parts()) throw DimensionError("solve_shifted: summand index out of range");
    const SparseOperator& summand = family.summands[part];
    check_size(rhs, summand.rows(), "solve_shifted rhs");
    check_size(guess, summand.rows(), "solve_shifted guess");
    if (shift == 0.0) return rhs;
    if (family.selfadjoint_summands || summand.symmetric()) {
        return cg_solve(summand.shifted(1.0, shift), rhs, guess, solver).solution;
    }
    if ((family.row_scaled() || family.column_scaled()) && family.base && family.base->symmetric() &&
        part < family.weights.size()) {
        const auto& w = family.weights[part];
        if (family.row_scaled()) return solve_row_scaled(*family.base, w, shift, rhs, guess, solver);
        return solve_column_scaled(*family.base, w, shift, rhs, guess, solver);
    }
    throw DomainError("solve_shifted: summand is neither symmetric nor a scaled symmetric operator");
}

GridFunction weighted_step(const SparseOperator& a, const GridFunction& y, const GridFunction& f_n,
                           const GridFunction& f_np1, const StepConfig& cfg) {
    check_step(cfg);
    check_size(y, a.rows(), "weighted_step state");
    check_size(f_n, a.rows(), "weighted_step f^n");
    check_size(f_np1, a.rows(), "weighted_step f^{n+1}");
    GridFunction f_sigma(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) f_sigma[i] = cfg.sigma * f_np1[i] + (1.0 - cfg.sigma) * f_n[i];
    const GridFunction rhs = explicit_part(y, a.apply(y), (1.0 - cfg.sigma) * cfg.tau, cfg.tau, &f_sigma);
    if (cfg.sigma == 0.0) return rhs;
    return cg_solve(a.shifted(1.0, cfg.sigma * cfg.tau), rhs, y, cfg.solver).solution;
}

GridFunction weighted_step(const SparseOperator& a, const GridFunction& y, const StepConfig& cfg) {
    check_step(cfg);
    check_size(y, a.rows(), "weighted_step state");
    const GridFunction rhs = explicit_part(y, a.apply(y), (1.0 - cfg.sigma) * cfg.tau, cfg.tau, nullptr);
    if (cfg.sigma == 0.0) return rhs;
    return cg_solve(a.shifted(1.0, cfg.sigma * cfg.tau), rhs, y, cfg.solver).solution;
}

namespace {

GridFunction factorized_impl(const OperatorFamily& family, const GridFunction& y, const GridFunction* f,
                             const StepConfig& cfg) {
    check_step(cfg);
    check_family(family, y.size());
    if (family.parts() != 2) throw DimensionError("factorized_step needs a two-term family");
    GridFunction residual = family_apply(family, y);
    residual *= -cfg.tau;
    if (f != nullptr) {
        check_size(*f, y.size(), "forcing");
        axpy(cfg.tau, *f, residual);
    }
    const double shift = cfg.sigma * cfg.tau;
    const GridFunction zero(y.size());
    const GridFunction half = solve_shifted(family, 0, shift, residual, zero, cfg.solver);
    const GridFunction increment = solve_shifted(family, 1, shift, half, half, cfg.solver);
    return y + increment;
}

}  // namespace

GridFunction factorized_step(const OperatorFamily& family, const GridFunction& y, const GridFunction& f_sigma,
                             const StepConfig& cfg) {
    return factorized_impl(family, y, &f_sigma, cfg);
}

GridFunction factorized_step(const OperatorFamily& family, const GridFunction& y, const StepConfig& cfg) {
    return factorized_impl(family, y, nullptr, cfg);
}

GridFunction componentwise_sweep(const OperatorFamily& family, const GridFunction& y,
                                 std::span<const GridFunction> f_parts, const StepConfig& cfg,
                                 SweepOrdering ordering) {
    check_step(cfg);
    check_family(family, y.size());
    const std::size_t p = family.parts();
    GridFunction current = y;
    if (ordering == SweepOrdering::Forward) {
        for (std::size_t a = 0; a < p; ++a) {
            current = family_substep(family, a, current, forcing_part(f_parts, a, p), cfg.sigma, cfg.tau, cfg.solver);
        }
        return current;
    }
    const double half = 0.5 * cfg.tau;
    for (std::size_t a = 0; a < p; ++a) {
        current = family_substep(family, a, current, forcing_part(f_parts, a, p), cfg.sigma, half, cfg.solver);
    }
    for (std::size_t a = p; a-- > 0;) {
        current = family_substep(family, a, current, forcing_part(f_parts, a, p), cfg.sigma, half, cfg.solver);
    }
    return current;
}

GridFunction additive_averaged_step(const OperatorFamily& family, const GridFunction& y,
                                    std::span<const GridFunction> f_parts, const StepConfig& cfg) {
    check_step(cfg);
    check_family(family, y.size());
    const std::size_t p = family.parts();
    const double big_tau = static_cast<double>(p) * cfg.tau;
    std::vector<GridFunction> parts;
    parts.reserve(p);
    for (std::size_t a = 0; a < p; ++a) {
        parts.push_back(family_substep(family, a, y, forcing_part(f_parts, a, p), cfg.sigma, big_tau, cfg.solver));
    }
    return sorted_average(parts);
}

namespace {

GridFunction regularized_impl(const OperatorFamily& family, const GridFunction& y, const GridFunction* f,
                              const StepConfig& cfg) {
    check_step(cfg);
    check_family(family, y.size());
    const GridFunction q = regularized_operator_apply(family, cfg.sigma * cfg.tau, y, cfg.solver);
    GridFunction out = y;
    axpy(-cfg.tau, q, out);
    if (f != nullptr) {
        check_size(*f, y.size(), "forcing");
        axpy(cfg.tau, *f, out);
    }
    return out;
}

}  // namespace

GridFunction regularized_step(const OperatorFamily& family, const GridFunction& y, const GridFunction& f_sigma,
                              const StepConfig& cfg) {
    return regularized_impl(family, y, &f_sigma, cfg);
}

GridFunction regularized_step(const OperatorFamily& family, const GridFunction& y, const StepConfig& cfg) {
    return regularized_impl(family, y, nullptr, cfg);
}

GridFunction regularized_averaged_step(const OperatorFamily& family, const GridFunction& y, const StepConfig& cfg) {
    check_step(cfg);
    check_family(family, y.size());
    const std::size_t p = family.parts();
    const double big_tau = static_cast<double>(p) * cfg.tau;
    std::vector<GridFunction> parts;
    parts.reserve(p);
    for (std::size_t a = 0; a < p; ++a) {
        const GridFunction ay = family.summands[a].apply(y);
        const GridFunction q = solve_shifted(family, a, cfg.sigma * cfg.tau, ay, ay, cfg.solver);
        GridFunction component = y;
        axpy(-big_tau, q, component);
        parts.push_back(std::move(component));
    }
    return sorted_average(parts);
}

GridFunction regularized_operator_apply(const OperatorFamily& family, double shift, const GridFunction& x,
                                        const CgOptions& solver) {
    check_family(family, x.size());
    GridFunction out(x.size());
    for (std::size_t a = 0; a < family.parts(); ++a) {
        const GridFunction ax = family.summands[a].apply(x);
        out += solve_shifted(family, a, shift, ax, ax, solver);
    }
    return out;
}

namespace {

VectorState vector_additive_impl(const OperatorFamily& family, const VectorState& state, const GridFunction* f,
                                 const StepConfig& cfg) {
    check_step(cfg);
    const std::size_t p = family.parts();
    check_state(state, p);
    const std::size_t n = state.components.front().size();
    check_family(family, n);
    GridFunction shared(n);
    for (std::size_t b = 0; b < p; ++b) {
        check_size(state.components[b], n, "vector state component");
        shared += family.summands[b].apply(state.components[b]);
    }
    if (f != nullptr) check_size(*f, n, "forcing");
    const double shift = cfg.sigma * cfg.tau;
    VectorState next;
    next.components.reserve(p);
    for (std::size_t a = 0; a < p; ++a) {
        const GridFunction& ya = state.components[a];
        const GridFunction aya = family.summands[a].apply(ya);
        GridFunction rhs(n);
        for (std::size_t i = 0; i < n; ++i) rhs[i] = ya[i] + shift * aya[i] - cfg.tau * shared[i];
        if (f != nullptr) axpy(cfg.tau, *f, rhs);
        next.components.push_back(solve_shifted(family, a, shift, rhs, ya, cfg.solver));
    }
    return next;
}

}  // namespace

VectorState vector_additive_step(const OperatorFamily& family, const VectorState& state, const GridFunction& f,
                                 const StepConfig& cfg) {
    return vector_additive_impl(family, state, &f, cfg);
}

VectorState vector_additive_step(const OperatorFamily& family, const VectorState& state, const StepConfig& cfg) {
    return vector_additive_impl(family, state, nullptr, cfg);
}

namespace {

// Increment of one subdomain component: zero outside supp R_a, and on the
// support R_S Delta_S = z with (R_S^{-1}/tau + s A_SS) z = -(A y)_S.
GridFunction subdomain_increment(const SparseOperator& a, std::span<const double> w, const GridFunction& ay,
                                 const StepConfig& cfg) {
    const auto s = positive_support(w);
    GridFunction delta(ay.size());
    if (s.empty()) return delta;
    GridFunction rhs(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) rhs[k] = -ay[s[k]];
    const auto z = cg_solve(support_matrix(a, s, w, 1.0 / cfg.tau, cfg.sigma), rhs, cfg.solver);
    for (std::size_t k = 0; k < s.size(); ++k) delta[s[k]] = z.solution[k] / w[s[k]];
    return delta;
}

void check_subdomain(const SparseOperator& a, const RestrictionFamily& r, const StepConfig& cfg) {
    check_step(cfg);
    if (!a.symmetric()) throw DomainError("subdomain schemes need a symmetric operator");
    if (r.dimension() != a.rows()) throw DimensionError("restriction family dimension does not match operator");
}

}  // namespace

ComposedStep subdomain_step_418(const SparseOperator& a, const RestrictionFamily& r, const VectorState& state,
                                const StepConfig& cfg) {
    check_subdomain(a, r, cfg);
    check_state(state, r.parts());
    for (const auto& c : state.components) check_size(c, a.rows(), "subdomain component");
    const GridFunction ay = a.apply(r.compose(state.components));
    ComposedStep out;
    out.state.components.reserve(r.parts());
    for (std::size_t p = 0; p < r.parts(); ++p) {
        out.state.components.push_back(state.components[p] + subdomain_increment(a, r.weights(p), ay, cfg));
    }
    out.composed = r.compose(out.state.components);
    return out;
}

GridFunction subdomain_step_422(const SparseOperator& a, const RestrictionFamily& r, const GridFunction& y,
                                const StepConfig& cfg) {
    check_subdomain(a, r, cfg);
    check_size(y, a.rows(), "subdomain state");
    const GridFunction ay = a.apply(y);
    std::vector<GridFunction> components;
    components.reserve(r.parts());
    for (std::size_t p = 0; p < r.parts(); ++p) components.push_back(y + subdomain_increment(a, r.weights(p), ay, cfg));
    return r.compose(components);
}

ComposedStep component_space_step_57(const SparseOperator& a, const SpaceRestrictionFamily& g,
                                     const VectorState& state, const StepConfig& cfg) {
    check_step(cfg);
    if (g.dimension() != a.rows()) throw DimensionError("space restriction dimension does not match operator");
    check_state(state, g.parts());
    const GridFunction ay = a.apply(g.compose(state.components));
    ComposedStep out;
    out.state.components.reserve(g.parts());
    for (std::size_t p = 0; p < g.parts(); ++p) {
        check_size(state.components[p], g.component_dimension(p), "component-space state");
        GridFunction rhs = restricted_residual(g, p, ay);
        rhs *= -1.0;
        const SparseOperator m = component_operator(a, g, p).shifted(1.0 / cfg.tau, cfg.sigma);
        out.state.components.push_back(state.components[p] + cg_solve(m, rhs, cfg.solver).solution);
    }
    out.composed = g.compose(out.state.components);
    return out;
}

VectorState component_space_step_3level(const SparseOperator& a, const SpaceRestrictionFamily& g,
                                        const VectorState& previous, const VectorState& current,
                                        const StepConfig& cfg) {
    check_step(cfg);
    if (g.dimension() != a.rows()) throw DimensionError("space restriction dimension does not match operator");
    check_state(previous, g.parts());
    check_state(current, g.parts());
    const GridFunction ay = a.apply(g.compose(current.components));
    VectorState next;
    next.components.reserve(g.parts());
    for (std::size_t p = 0; p < g.parts(); ++p) {
        check_size(previous.components[p], g.component_dimension(p), "component-space state");
        check_size(current.components[p], g.component_dimension(p), "component-space state");
        const SparseOperator m = component_operator(a, g, p);
        const GridFunction d = current.components[p] - previous.components[p];
        GridFunction rhs = m.apply(d);
        rhs *= 2.0 * cfg.sigma;
        rhs -= restricted_residual(g, p, ay);
        const auto w = cg_solve(m.shifted(0.5 / cfg.tau, cfg.sigma), rhs, 2.0 * d, cfg.solver);
        next.components.push_back(previous.components[p] + w.solution);
    }
    return next;
}

double three_level_energy(const SparseOperator& a, const SpaceRestrictionFamily& g, const VectorState& previous,
                          const VectorState& current, double sigma) {
    check_state(previous, g.parts());
    check_state(current, g.parts());
    const GridFunction mid = g.compose(current.components) + g.compose(previous.components);
    std::vector<GridFunction> d;
    d.reserve(g.parts());
    double block = 0.0;
    for (std::size_t p = 0; p < g.parts(); ++p) {
        d.push_back(current.components[p] - previous.components[p]);
        block += dot(component_operator(a, g, p).apply(d.back()), d.back());
    }
    const GridFunction dc = g.compose(d);
    return 0.25 * dot(a.apply(mid), mid) + sigma * block - 0.25 * dot(a.apply(dc), dc);
}

namespace {

GridFunction second_order_impl(const OperatorFamily& family, const GridFunction& y_prev, const GridFunction& y,
                               const GridFunction* f, const StepConfig& cfg) {
    check_step(cfg);
    check_family(family, y.size());
    check_size(y_prev, y.size(), "second-order previous level");
    const double tau2 = cfg.tau * cfg.tau;
    const GridFunction q = regularized_operator_apply(family, cfg.sigma * tau2, y, cfg.solver);
    GridFunction out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = 2.0 * y[i] - y_prev[i] - tau2 * q[i];
    if (f != nullptr) {
        check_size(*f, y.size(), "forcing");
        axpy(tau2, *f, out);
    }
    return out;
}

}  // namespace

GridFunction second_order_regularized_step(const OperatorFamily& family, const GridFunction& y_prev,
                                           const GridFunction& y, const GridFunction& f_n, const StepConfig& cfg) {
    return second_order_impl(family, y_prev, y, &f_n, cfg);
}

GridFunction second_order_regularized_step(const OperatorFamily& family, const GridFunction& y_prev,
                                           const GridFunction& y, const StepConfig& cfg) {
    return second_order_impl(family, y_prev, y, nullptr, cfg);
}

GridFunction second_order_start(const SparseOperator& a, const GridFunction& u0, const GridFunction& v0,
                                const GridFunction& f0, double tau) {
    check_size(u0, a.rows(), "initial displacement");
    check_size(v0, a.rows(), "initial velocity");
    check_size(f0, a.rows(), "initial forcing");
    const GridFunction au = a.apply(u0);
    GridFunction out(u0.size());
    const double c = 0.5 * tau * tau;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = u0[i] + tau * v0[i] - c * (au[i] - f0[i]);
    return out;
}

NormKind regularized_metric(const OperatorFamily& family) noexcept {
    if (family.row_scaled()) return NormKind::A;
    if (family.column_scaled()) return NormKind::AInverse;
    return NormKind::Identity;
}

double second_order_energy(const OperatorFamily& family, const SparseOperator& a, const GridFunction& y_prev,
                           const GridFunction& y, const StepConfig& cfg) {
    check_step(cfg);
    const double tau2 = cfg.tau * cfg.tau;
    GridFunction v = y - y_prev;
    v *= 1.0 / cfg.tau;
    GridFunction w = y + y_prev;
    w *= 0.5;
    const NormKind metric = regularized_metric(family);
    const double shift = cfg.sigma * tau2;
    const GridFunction qv = regularized_operator_apply(family, shift, v, cfg.solver);
    const GridFunction qw = regularized_operator_apply(family, shift, w, cfg.solver);
    return metric_dot(v, v, metric, a) - 0.25 * tau2 * metric_dot(qv, v, metric, a) + metric_dot(qw, w, metric, a);
}

void SystemOperator::validate() const {
    const std::size_t n = a11.rows();
    const auto square = [n](const SparseOperator& m) { return m.rows() == n && m.cols() == n; };
    if (!square(a11) || !square(a12) || !square(a21) || !square(a22)) {
        throw DimensionError("system blocks must all be square of the same size");
    }
}

SparseOperator SystemOperator::assembled() const {
    validate();
    const std::size_t n = block_size();
    std::vector<Triplet> t;
    t.reserve(a11.nonzeros() + a12.nonzeros() + a21.nonzeros() + a22.nonzeros());
    const auto append = [&t](const SparseOperator& m, std::size_t r0, std::size_t c0) {
        const auto offsets = m.row_offsets();
        const auto cols = m.column_indices();
        const auto vals = m.values();
        for (std::size_t r = 0; r < m.rows(); ++r) {
            for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) t.push_back({r0 + r, c0 + cols[k], vals[k]});
        }
    };
    append(a11, 0, 0);
    append(a12, 0, n);
    append(a21, n, 0);
    append(a22, n, n);
    SparseOperator out = SparseOperator::from_triplets(2 * n, 2 * n, std::move(t));
    return out.with_symmetric_flag(is_symmetric(out, 0.0));
}

GridFunction SystemState::stacked() const {
    std::vector<double> v(u1.begin(), u1.end());
    v.insert(v.end(), u2.begin(), u2.end());
    return GridFunction(std::move(v));
}

SystemState SystemState::from_stacked(const GridFunction& u, std::size_t block) {
    check_size(u, 2 * block, "stacked system state");
    const auto mid = u.begin() + static_cast<std::ptrdiff_t>(block);
    return {GridFunction(std::vector<double>(u.begin(), mid)), GridFunction(std::vector<double>(mid, u.end()))};
}

SystemState system_split_step(const SystemOperator& sys, const SystemState& state, SystemSplit variant,
                              const StepConfig& cfg) {
    check_step(cfg);
    sys.validate();
    const std::size_t n = sys.block_size();
    check_size(state.u1, n, "system component u1");
    check_size(state.u2, n, "system component u2");
    const double s = cfg.sigma;
    const double tau = cfg.tau;
    const double explicit_c = (1.0 - s) * tau;
    const SparseOperator m11 = sys.a11.shifted(1.0, s * tau);
    const SparseOperator m22 = sys.a22.shifted(1.0, s * tau);
    const auto blend = [s](const GridFunction& now, const GridFunction& before) {
        GridFunction out(now.size());
        for (std::size_t i = 0; i < now.size(); ++i) out[i] = s * now[i] + (1.0 - s) * before[i];
        return out;
    };

    if (variant == SystemSplit::Row) {
        GridFunction r1 = explicit_part(state.u1, sys.a11.apply(state.u1), explicit_c, tau, nullptr);
        axpy(-tau, sys.a12.apply(state.u2), r1);
        GridFunction y1 = cg_solve(m11, r1, state.u1, cfg.solver).solution;
        GridFunction r2 = explicit_part(state.u2, sys.a22.apply(state.u2), explicit_c, tau, nullptr);
        axpy(-tau, sys.a21.apply(y1), r2);
        GridFunction y2 = cg_solve(m22, r2, state.u2, cfg.solver).solution;
        return {std::move(y1), std::move(y2)};
    }

    const GridFunction r1 = explicit_part(state.u1, sys.a11.apply(state.u1), explicit_c, tau, nullptr);
    const GridFunction y1_half = cg_solve(m11, r1, state.u1, cfg.solver).solution;
    GridFunction y2_half = state.u2;
    axpy(-tau, sys.a21.apply(blend(y1_half, state.u1)), y2_half);
    const GridFunction r2 = explicit_part(y2_half, sys.a22.apply(y2_half), explicit_c, tau, nullptr);
    GridFunction y2 = cg_solve(m22, r2, y2_half, cfg.solver).solution;
    GridFunction y1 = y1_half;
    axpy(-tau, sys.a12.apply(blend(y2, y2_half)), y1);
    return {std::move(y1), std::move(y2)};
}

}  // namespace splitkit
