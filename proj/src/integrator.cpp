#include "splitkit/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace splitkit {

namespace {

bool homogeneous_only(SchemeKind kind) {
    switch (kind) {
        case SchemeKind::Subdomain418:
        case SchemeKind::Subdomain422:
        case SchemeKind::ComponentSpace57:
        case SchemeKind::ComponentSpace3Level:
        case SchemeKind::SystemRowSplit:
        case SchemeKind::SystemColumnSplit:
            return true;
        default:
            return false;
    }
}

bool is_system(SchemeKind kind) {
    return kind == SchemeKind::SystemRowSplit || kind == SchemeKind::SystemColumnSplit;
}

RestrictionFamily trivial_restrictions(std::size_t n) { return RestrictionFamily({std::vector<double>(n, 1.0)}); }

}  // namespace

Integrator::Integrator(SchemeSetup setup)
    : setup_(std::move(setup)),
      restrictions_(trivial_restrictions(std::max<std::size_t>(setup_.op.rows(), 1))),
      spaces_(PartitionOfUnity::trivial(std::max<std::size_t>(setup_.op.rows(), 1))) {
    const SchemeConfig& cfg = setup_.config;
    const SchemeKind kind = cfg.kind;
    if (!(cfg.tau > 0.0) || !std::isfinite(cfg.tau)) throw DomainError("time step must be positive and finite");
    if (!std::isfinite(cfg.sigma)) throw DomainError("weight sigma must be finite");
    if (homogeneous_only(kind) && setup_.forcing) {
        std::ostringstream msg;
        msg << scheme_name(kind) << " is implemented for f = 0 only";
        throw DomainError(msg.str());
    }

    if (is_system(kind)) {
        if (!setup_.system) throw DomainError("system scheme needs block operators");
        norm_op_ = setup_.system->assembled();
        if (setup_.initial.size() != norm_op_.rows()) throw DimensionError("initial data does not match system size");
        solution_ = setup_.initial;
        return;
    }

    const std::size_t n = setup_.op.rows();
    if (n == 0 || setup_.op.cols() != n) throw DimensionError("operator must be square and non-empty");
    if (setup_.initial.size() != n) throw DimensionError("initial data does not match operator size");
    norm_op_ = setup_.op;
    family_ = setup_.family ? *setup_.family : trivial_family(setup_.op);
    if (family_.summands.empty() || family_.summands.front().rows() != n) {
        throw DimensionError("operator family does not match operator size");
    }
    if (kind == SchemeKind::Factorized && family_.parts() != 2) {
        throw DomainError("FACTORIZED needs a two-term decomposition");
    }
    if (setup_.forcing_partition && setup_.forcing_partition->parts() != family_.parts()) {
        throw DimensionError("forcing partition and family have different numbers of parts");
    }
    if (setup_.restrictions) {
        if (setup_.restrictions->dimension() != n) throw DimensionError("restriction family size mismatch");
        restrictions_ = *setup_.restrictions;
    }
    if (setup_.spaces) {
        if (setup_.spaces->dimension() != n) throw DimensionError("space restriction size mismatch");
        spaces_ = *setup_.spaces;
    }

    solution_ = setup_.initial;
    switch (kind) {
        case SchemeKind::VectorAdditive:
            current_.components.assign(family_.parts(), setup_.initial);
            break;
        case SchemeKind::Subdomain418:
            current_.components.assign(restrictions_.parts(), setup_.initial);
            break;
        case SchemeKind::ComponentSpace57:
        case SchemeKind::ComponentSpace3Level:
            current_.components = spaces_.decompose(setup_.initial);
            prior_ = current_;
            break;
        case SchemeKind::SecondOrderRegularized: {
            const GridFunction v0 = setup_.initial_velocity.empty() ? GridFunction(n) : setup_.initial_velocity;
            if (v0.size() != n) throw DimensionError("initial velocity does not match operator size");
            start_ = second_order_start(setup_.op, setup_.initial, v0, forcing_at(0.0), cfg.tau);
            previous_ = setup_.initial;
            break;
        }
        default:
            break;
    }
}

std::size_t Integrator::parts() const noexcept {
    switch (setup_.config.kind) {
        case SchemeKind::Subdomain418:
        case SchemeKind::Subdomain422:
            return restrictions_.parts();
        case SchemeKind::ComponentSpace57:
        case SchemeKind::ComponentSpace3Level:
            return spaces_.parts();
        case SchemeKind::SystemRowSplit:
        case SchemeKind::SystemColumnSplit:
            return 2;
        case SchemeKind::Weighted:
            return 1;
        default:
            return family_.parts();
    }
}

GridFunction Integrator::forcing_at(double t) const {
    if (!setup_.forcing) return GridFunction(setup_.op.rows());
    GridFunction f = setup_.forcing(t);
    if (f.size() != setup_.op.rows()) throw DimensionError("forcing returned a vector of the wrong size");
    return f;
}

GridFunction Integrator::forcing_sigma() const {
    const double s = setup_.config.sigma;
    const GridFunction f0 = forcing_at(time());
    const GridFunction f1 = forcing_at(static_cast<double>(step_ + 1) * setup_.config.tau);
    GridFunction out(f0.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * f1[i] + (1.0 - s) * f0[i];
    return out;
}

std::vector<GridFunction> Integrator::forcing_parts(const GridFunction& f) const {
    const std::size_t p = family_.parts();
    std::vector<GridFunction> parts;
    parts.reserve(p);
    for (std::size_t a = 0; a < p; ++a) {
        if (setup_.forcing_partition) {
            parts.push_back(hadamard(setup_.forcing_partition->weights(a), f));
        } else {
            GridFunction share(f.size());
            for (std::size_t i = 0; i < f.size(); ++i) share[i] = f[i] / static_cast<double>(p);
            parts.push_back(std::move(share));
        }
    }
    return parts;
}

void Integrator::advance() {
    const StepConfig cfg = setup_.config.step();
    const bool forced = static_cast<bool>(setup_.forcing);
    switch (setup_.config.kind) {
        case SchemeKind::Weighted:
            if (forced) {
                solution_ = weighted_step(setup_.op, solution_, forcing_at(time()),
                                          forcing_at(static_cast<double>(step_ + 1) * cfg.tau), cfg);
            } else {
                solution_ = weighted_step(setup_.op, solution_, cfg);
            }
            break;
        case SchemeKind::Factorized:
            solution_ = forced ? factorized_step(family_, solution_, forcing_sigma(), cfg)
                               : factorized_step(family_, solution_, cfg);
            break;
        case SchemeKind::Componentwise:
        case SchemeKind::ComponentwiseSymmetrized: {
            const SweepOrdering ordering = setup_.config.kind == SchemeKind::ComponentwiseSymmetrized
                                               ? SweepOrdering::Strang
                                               : setup_.ordering;
            const std::vector<GridFunction> parts = forced ? forcing_parts(forcing_sigma()) : std::vector<GridFunction>{};
            solution_ = componentwise_sweep(family_, solution_, parts, cfg, ordering);
            break;
        }
        case SchemeKind::AdditiveAveraged: {
            const std::vector<GridFunction> parts = forced ? forcing_parts(forcing_sigma()) : std::vector<GridFunction>{};
            solution_ = additive_averaged_step(family_, solution_, parts, cfg);
            break;
        }
        case SchemeKind::Regularized:
            solution_ = forced ? regularized_step(family_, solution_, forcing_sigma(), cfg)
                               : regularized_step(family_, solution_, cfg);
            break;
        case SchemeKind::VectorAdditive:
            current_ = forced ? vector_additive_step(family_, current_, forcing_sigma(), cfg)
                              : vector_additive_step(family_, current_, cfg);
            solution_ = current_.components.front();
            break;
        case SchemeKind::Subdomain418: {
            ComposedStep next = subdomain_step_418(setup_.op, restrictions_, current_, cfg);
            current_ = std::move(next.state);
            solution_ = std::move(next.composed);
            break;
        }
        case SchemeKind::Subdomain422:
            solution_ = subdomain_step_422(setup_.op, restrictions_, solution_, cfg);
            break;
        case SchemeKind::ComponentSpace57: {
            ComposedStep next = component_space_step_57(setup_.op, spaces_, current_, cfg);
            current_ = std::move(next.state);
            solution_ = std::move(next.composed);
            break;
        }
        case SchemeKind::ComponentSpace3Level: {
            VectorState next;
            if (step_ == 0) {
                StepConfig boot = cfg;
                boot.sigma = std::max(cfg.sigma, 0.5 * static_cast<double>(spaces_.parts()));
                next = component_space_step_57(setup_.op, spaces_, current_, boot).state;
            } else {
                next = component_space_step_3level(setup_.op, spaces_, prior_, current_, cfg);
            }
            prior_ = std::move(current_);
            current_ = std::move(next);
            solution_ = spaces_.compose(current_.components);
            break;
        }
        case SchemeKind::SecondOrderRegularized: {
            GridFunction next;
            if (step_ == 0) {
                next = start_;
            } else if (forced) {
                next = second_order_regularized_step(family_, previous_, solution_, forcing_at(time()), cfg);
            } else {
                next = second_order_regularized_step(family_, previous_, solution_, cfg);
            }
            previous_ = std::move(solution_);
            solution_ = std::move(next);
            break;
        }
        case SchemeKind::SystemRowSplit:
        case SchemeKind::SystemColumnSplit: {
            const SystemSplit variant =
                setup_.config.kind == SchemeKind::SystemRowSplit ? SystemSplit::Row : SystemSplit::Column;
            const std::size_t block = setup_.system->block_size();
            const SystemState next =
                system_split_step(*setup_.system, SystemState::from_stacked(solution_, block), variant, cfg);
            solution_ = next.stacked();
            break;
        }
    }
    ++step_;
}

void Integrator::advance(std::size_t steps) {
    for (std::size_t k = 0; k < steps; ++k) advance();
}

double Integrator::certified_norm() const {
    const StepConfig cfg = setup_.config.step();
    switch (setup_.config.kind) {
        case SchemeKind::Weighted:
        case SchemeKind::Subdomain418:
        case SchemeKind::Subdomain422:
        case SchemeKind::ComponentSpace57:
            return weighted_norm(solution_, NormKind::A, norm_op_);
        case SchemeKind::Factorized: {
            GridFunction z = solution_;
            axpy(cfg.sigma * cfg.tau, family_.summands[1].apply(solution_), z);
            return norm(z);
        }
        case SchemeKind::Regularized:
            return weighted_norm(solution_, regularized_metric(family_), norm_op_);
        case SchemeKind::ComponentSpace3Level:
            if (step_ == 0) return weighted_norm(solution_, NormKind::A, norm_op_);
            return std::sqrt(three_level_energy(setup_.op, spaces_, prior_, current_, cfg.sigma));
        case SchemeKind::SecondOrderRegularized:
            if (step_ == 0) return std::sqrt(second_order_energy(family_, setup_.op, solution_, start_, cfg));
            return std::sqrt(second_order_energy(family_, setup_.op, previous_, solution_, cfg));
        default:
            return norm(solution_);
    }
}

}  // namespace splitkit
