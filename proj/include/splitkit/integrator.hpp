#pragma once

#include <cstddef>
#include <optional>

#include "splitkit/decomposition.hpp"
#include "splitkit/model.hpp"
#include "splitkit/schemes.hpp"

namespace splitkit {

/// Everything a time integrator needs. Optional pieces fall back to the
/// trivial one-term family / restriction when absent.
struct SchemeSetup {
    SchemeConfig config;
    SparseOperator op;
    std::optional<OperatorFamily> family;
    std::optional<RestrictionFamily> restrictions;
    std::optional<SpaceRestrictionFamily> spaces;
    /// f_a = chi_a f when present, f / p otherwise.
    std::optional<PartitionOfUnity> forcing_partition;
    std::optional<SystemOperator> system;
    SweepOrdering ordering = SweepOrdering::Forward;
    /// Empty means f = 0.
    Forcing forcing;
    /// Stacked (u1, u2) for the system schemes.
    GridFunction initial;
    /// Second-order scheme only; zero when empty.
    GridFunction initial_velocity;
};

/// Advances any scheme one step at a time.
///
/// `solution()` is the composed approximation (component 1 for the vector
/// additive scheme, the stacked pair for systems). Querying norms never
/// touches the state.
class Integrator {
public:
    explicit Integrator(SchemeSetup setup);

    void advance();
    void advance(std::size_t steps);

    const GridFunction& solution() const noexcept { return solution_; }
    std::size_t step_index() const noexcept { return step_; }
    double time() const noexcept { return static_cast<double>(step_) * setup_.config.tau; }
    const SchemeSetup& setup() const noexcept { return setup_; }
    std::size_t parts() const noexcept;

    /// Operator behind the A-norm (the assembled block operator for systems).
    const SparseOperator& norm_operator() const noexcept { return norm_op_; }
    const VectorState& components() const noexcept { return current_; }

    /// Norm in which the scheme's stability estimate is stated; see README.
    double certified_norm() const;

private:
    GridFunction forcing_at(double t) const;
    GridFunction forcing_sigma() const;
    std::vector<GridFunction> forcing_parts(const GridFunction& f) const;

    SchemeSetup setup_;
    OperatorFamily family_;
    RestrictionFamily restrictions_;
    SpaceRestrictionFamily spaces_;
    SparseOperator norm_op_;
    std::size_t step_ = 0;
    GridFunction solution_;
    GridFunction previous_;
    GridFunction start_;
    VectorState current_;
    VectorState prior_;
};

}  // namespace splitkit
