#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "splitkit/decomposition.hpp"
#include "splitkit/linalg.hpp"

namespace splitkit {

enum class SchemeKind {
    Weighted,
    Factorized,
    Componentwise,
    ComponentwiseSymmetrized,
    AdditiveAveraged,
    Regularized,
    VectorAdditive,
    Subdomain418,
    Subdomain422,
    ComponentSpace57,
    ComponentSpace3Level,
    SecondOrderRegularized,
    SystemRowSplit,
    SystemColumnSplit,
};

std::string_view scheme_name(SchemeKind kind) noexcept;
std::optional<SchemeKind> parse_scheme_kind(std::string_view name) noexcept;

/// Smallest weight for which the scheme is unconditionally stable with a
/// p-term decomposition; empty when no threshold is established.
std::optional<double> stability_threshold(SchemeKind kind, std::size_t parts) noexcept;

struct StepConfig {
    double sigma = 0.5;
    double tau = 0.01;
    CgOptions solver{};
};

struct SchemeConfig {
    SchemeKind kind = SchemeKind::Weighted;
    double sigma = 0.5;
    double tau = 0.01;
    std::size_t steps = 1;
    CgOptions solver{};

    StepConfig step() const { return {sigma, tau, solver}; }
};

enum class SweepOrdering { Forward, Strang };

/// Per-component unknowns of the vector and subdomain schemes.
struct VectorState {
    std::vector<GridFunction> components;
};

struct ComposedStep {
    VectorState state;
    GridFunction composed;
};

/// Solves (I + shift A_part) x = rhs.
///
/// Symmetric summands go straight to CG. Row-scaled (chi A) and
/// column-scaled (A chi) summands are reduced to the symmetric system
/// (W_S^{-1} + shift A_SS) on the support S of the weights; nodes outside
/// S are eliminated explicitly.
GridFunction solve_shifted(const OperatorFamily& family, std::size_t part, double shift, const GridFunction& rhs,
                           const GridFunction& guess, const CgOptions& solver);

/// (I + s tau A) y+ = (I - (1-s) tau A) y + tau f^{n+s}, f^{n+s} = s f^{n+1} + (1-s) f^n.
GridFunction weighted_step(const SparseOperator& a, const GridFunction& y, const GridFunction& f_n,
                           const GridFunction& f_np1, const StepConfig& cfg);
GridFunction weighted_step(const SparseOperator& a, const GridFunction& y, const StepConfig& cfg);

/// (I + s tau A1)(I + s tau A2)(y+ - y)/tau + (A1 + A2) y = f^{n+s}.
GridFunction factorized_step(const OperatorFamily& family, const GridFunction& y, const GridFunction& f_sigma,
                             const StepConfig& cfg);
GridFunction factorized_step(const OperatorFamily& family, const GridFunction& y, const StepConfig& cfg);

/// Sequential weighted sub-steps A_1 -> ... -> A_p. STRANG runs
/// A_1 -> ... -> A_p -> A_p -> ... -> A_1 with tau/2 each.
/// `f_parts` holds f_a^{n+s} (empty span: homogeneous).
GridFunction componentwise_sweep(const OperatorFamily& family, const GridFunction& y,
                                 std::span<const GridFunction> f_parts, const StepConfig& cfg,
                                 SweepOrdering ordering);

/// Independent sub-steps with step p tau from y^n, then averaged. The average
/// sums each entry's p values in sorted order, so permuting the family
/// leaves the result bitwise unchanged.
GridFunction additive_averaged_step(const OperatorFamily& family, const GridFunction& y,
                                    std::span<const GridFunction> f_parts, const StepConfig& cfg);

/// y+ = y - tau sum_a (I + s tau A_a)^{-1} A_a y + tau f^{n+s}.
GridFunction regularized_step(const OperatorFamily& family, const GridFunction& y, const GridFunction& f_sigma,
                              const StepConfig& cfg);
GridFunction regularized_step(const OperatorFamily& family, const GridFunction& y, const StepConfig& cfg);

/// The regularized scheme (f = 0) realized as p averaged components
/// y_a = y - p tau (I + s tau A_a)^{-1} A_a y.
GridFunction regularized_averaged_step(const OperatorFamily& family, const GridFunction& y, const StepConfig& cfg);

/// (I + s tau A_a)(y_a+ - y_a)/tau + sum_b A_b y_b = f, for every a.
VectorState vector_additive_step(const OperatorFamily& family, const VectorState& state, const GridFunction& f,
                                 const StepConfig& cfg);
VectorState vector_additive_step(const OperatorFamily& family, const VectorState& state, const StepConfig& cfg);

/// Subdomain scheme on the auxiliary system R_a du_a/dt + R_a A sum_b R_b u_b = 0
/// with per-component increments; composition y = sum_a R_a y_a.
/// Unknowns outside supp R_a are carried over.
ComposedStep subdomain_step_418(const SparseOperator& a, const RestrictionFamily& r, const VectorState& state,
                                const StepConfig& cfg);

/// Same sub-problems, but every component restarts from the composed y^n.
GridFunction subdomain_step_422(const SparseOperator& a, const RestrictionFamily& r, const GridFunction& y,
                                const StepConfig& cfg);

/// Two-level scheme in the component spaces H_a; composition y = sum_a G_a^T y_a.
ComposedStep component_space_step_57(const SparseOperator& a, const SpaceRestrictionFamily& g,
                                     const VectorState& state, const StepConfig& cfg);

/// Three-level variant:
/// (y+ - y-)/(2 tau) + s G A G^T (y+ - 2y + y-) + G A sum_b G_b^T y_b = 0.
VectorState component_space_step_3level(const SparseOperator& a, const SpaceRestrictionFamily& g,
                                        const VectorState& previous, const VectorState& current,
                                        const StepConfig& cfg);

/// (y+ - 2y + y-)/tau^2 + sum_a (I + s tau^2 A_a)^{-1} A_a y = f^n.
GridFunction second_order_regularized_step(const OperatorFamily& family, const GridFunction& y_prev,
                                           const GridFunction& y, const GridFunction& f_n, const StepConfig& cfg);
GridFunction second_order_regularized_step(const OperatorFamily& family, const GridFunction& y_prev,
                                           const GridFunction& y, const StepConfig& cfg);

/// Taylor start y^1 = u0 + tau v0 - tau^2/2 (A u0 - f(0)).
GridFunction second_order_start(const SparseOperator& a, const GridFunction& u0, const GridFunction& v0,
                                const GridFunction& f0, double tau);

/// 2 x 2 block operator [[A11, A12], [A21, A22]].
struct SystemOperator {
    SparseOperator a11;
    SparseOperator a12;
    SparseOperator a21;
    SparseOperator a22;

    std::size_t block_size() const noexcept { return a11.rows(); }
    /// Stacked (2n x 2n) operator.
    SparseOperator assembled() const;
    void validate() const;
};

struct SystemState {
    GridFunction u1;
    GridFunction u2;

    GridFunction stacked() const;
    static SystemState from_stacked(const GridFunction& u, std::size_t block);
};

enum class SystemSplit { Row, Column };

/// Component-wise splitting of the block system. ROW uses the families
/// [[A11, A12], [0, 0]] + [[0, 0], [A21, A22]], COLUMN uses
/// [[A11, 0], [A21, 0]] + [[0, A12], [0, A22]]. Only diagonal blocks are
/// inverted. For s = 1 the COLUMN variant evaluates y1, y2 (half), y2, y1.
SystemState system_split_step(const SystemOperator& sys, const SystemState& state, SystemSplit variant,
                              const StepConfig& cfg);

/// Three-level energy, non-increasing for s >= p/4:
/// |y^n + y^{n-1}|_A^2 / 4 + s sum_a (M_a d_a, d_a) - |sum_a G_a^T d_a|_A^2 / 4
/// with d = y^n - y^{n-1} and M_a = G_a A G_a^T.
double three_level_energy(const SparseOperator& a, const SpaceRestrictionFamily& g, const VectorState& previous,
                          const VectorState& current, double sigma);

/// Norm in which the regularized operator Q = sum_a (I + c A_a)^{-1} A_a is
/// symmetric: A for row-scaled families, A^{-1} for column-scaled, I else.
NormKind regularized_metric(const OperatorFamily& family) noexcept;

/// Q x = sum_a (I + shift A_a)^{-1} A_a x.
GridFunction regularized_operator_apply(const OperatorFamily& family, double shift, const GridFunction& x,
                                        const CgOptions& solver);

/// Conserved energy of the second-order regularized scheme (f = 0):
/// (Dv, v) - tau^2/4 (D Q v, v) + (D Q w, w), v = (y - y_prev)/tau, w = (y + y_prev)/2.
double second_order_energy(const OperatorFamily& family, const SparseOperator& a, const GridFunction& y_prev,
                           const GridFunction& y, const StepConfig& cfg);

}  // namespace splitkit
