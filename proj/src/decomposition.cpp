#include "splitkit/decomposition.hpp"

#include <cmath>
#include <sstream>

namespace splitkit {

namespace {

constexpr double kUnitTolerance = 1e-14;

void validate_unit_resolution(const std::vector<std::vector<double>>& weights, const char* what) {
    if (weights.empty()) {
        throw DomainError(std::string(what) + ": at least one component is required");
    }
    const std::size_t n = weights.front().size();
    for (const auto& w : weights) {
        if (w.size() != n) throw DimensionError(std::string(what) + ": components differ in length");
    }
    for (std::size_t i = 0; i < n; ++i) {
        double total = 0.0;
        for (std::size_t a = 0; a < weights.size(); ++a) {
            const double v = weights[a][i];
            if (!std::isfinite(v) || v < 0.0) {
                std::ostringstream msg;
                msg << what << ": weight " << a << " is negative or non-finite at index " << i;
                throw DomainError(msg.str());
            }
            total += v;
        }
        if (std::abs(total - 1.0) > kUnitTolerance) {
            std::ostringstream msg;
            msg << what << ": weights sum to " << total << " at index " << i;
            throw DomainError(msg.str());
        }
    }
}

std::vector<std::size_t> positive_support(std::span<const double> w) {
    std::vector<std::size_t> s;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] > 0.0) s.push_back(i);
    }
    return s;
}

double face_coefficient(const Coefficient& c, double x1, double x2) {
    const double value = c.k(x1, x2);
    if (!std::isfinite(value) || !(value > 0.0) || value < c.kappa) {
        std::ostringstream msg;
        msg << "coefficient k(" << x1 << ", " << x2 << ") = " << value << " violates k >= kappa > 0";
        throw DomainError(msg.str());
    }
    return value;
}

}  // namespace

// ---------------------------------------------------------------------------
// Partitions and restrictions

PartitionOfUnity::PartitionOfUnity(std::vector<std::vector<double>> weights) : weights_(std::move(weights)) {
    validate_unit_resolution(weights_, "PartitionOfUnity");
}

PartitionOfUnity PartitionOfUnity::trivial(std::size_t nodes) {
    return PartitionOfUnity({std::vector<double>(nodes, 1.0)});
}

std::vector<std::size_t> PartitionOfUnity::support(std::size_t part) const {
    return positive_support(weights_.at(part));
}

bool PartitionOfUnity::is_indicator() const noexcept {
    for (const auto& w : weights_) {
        for (double v : w) {
            if (v != 0.0 && v != 1.0) return false;
        }
    }
    return true;
}

PartitionOfUnity build_strip_partition(const Grid2D& grid, std::size_t parts, std::size_t overlap_nodes,
                                       StripProfile profile) {
    const auto columns = static_cast<std::size_t>(grid.interior1());
    if (parts < 1) throw DomainError("build_strip_partition: need at least one strip");
    if (parts > columns) {
        std::ostringstream msg;
        msg << "build_strip_partition: " << parts << " strips on " << columns << " interior columns";
        throw DomainError(msg.str());
    }
    std::vector<std::size_t> bounds(parts + 1);
    for (std::size_t a = 0; a <= parts; ++a) bounds[a] = a * columns / parts;

    const std::size_t overlap = profile == StripProfile::Linear ? overlap_nodes : 0;
    for (std::size_t a = 0; a < parts; ++a) {
        const std::size_t width = bounds[a + 1] - bounds[a];
        if (width < std::max<std::size_t>(overlap, 1)) {
            std::ostringstream msg;
            msg << "build_strip_partition: strip " << a << " has " << width
                << " columns, thinner than the overlap of " << overlap;
            throw DomainError(msg.str());
        }
    }

    // Column profiles, then replicated over rows.
    std::vector<std::vector<double>> column_weights(parts, std::vector<double>(columns, 0.0));
    for (std::size_t a = 0; a < parts; ++a) {
        for (std::size_t c = bounds[a]; c < bounds[a + 1]; ++c) column_weights[a][c] = 1.0;
    }
    if (overlap > 0) {
        for (std::size_t a = 0; a + 1 < parts; ++a) {
            const std::size_t start = bounds[a + 1] - overlap / 2;
            for (std::size_t j = 0; j < overlap; ++j) {
                const double w = static_cast<double>(j + 1) / static_cast<double>(overlap + 1);
                column_weights[a][start + j] = 1.0 - w;
                column_weights[a + 1][start + j] = w;
            }
        }
    }

    std::vector<std::vector<double>> weights(parts, std::vector<double>(grid.node_count(), 0.0));
    for (int i2 = 1; i2 <= grid.interior2(); ++i2) {
        for (int i1 = 1; i1 <= grid.interior1(); ++i1) {
            const std::size_t idx = grid.index(i1, i2);
            for (std::size_t a = 0; a < parts; ++a) {
                weights[a][idx] = column_weights[a][static_cast<std::size_t>(i1 - 1)];
            }
        }
    }
    return PartitionOfUnity(std::move(weights));
}

RestrictionFamily::RestrictionFamily(std::vector<std::vector<double>> weights) : weights_(std::move(weights)) {
    validate_unit_resolution(weights_, "RestrictionFamily");
}

RestrictionFamily RestrictionFamily::from_partition(const PartitionOfUnity& pou) {
    std::vector<std::vector<double>> w;
    for (std::size_t a = 0; a < pou.parts(); ++a) {
        const auto chi = pou.weights(a);
        w.emplace_back(chi.begin(), chi.end());
    }
    return RestrictionFamily(std::move(w));
}

std::vector<std::size_t> RestrictionFamily::support(std::size_t part) const {
    return positive_support(weights_.at(part));
}

SparseOperator RestrictionFamily::restriction(std::size_t part) const {
    return SparseOperator::diagonal(weights_.at(part));
}

GridFunction RestrictionFamily::compose(std::span<const GridFunction> components) const {
    if (components.size() != parts()) throw DimensionError("RestrictionFamily::compose: component count");
    GridFunction out(dimension());
    for (std::size_t a = 0; a < parts(); ++a) {
        if (components[a].size() != dimension()) throw DimensionError("RestrictionFamily::compose: length");
        for (std::size_t i = 0; i < dimension(); ++i) out[i] += weights_[a][i] * components[a][i];
    }
    return out;
}

SpaceRestrictionFamily::SpaceRestrictionFamily(const PartitionOfUnity& pou) : nodes_(pou.nodes()) {
    std::vector<double> total(nodes_, 0.0);
    for (std::size_t a = 0; a < pou.parts(); ++a) {
        const auto chi = pou.weights(a);
        supports_.push_back(positive_support(chi));
        std::vector<double> roots;
        roots.reserve(supports_.back().size());
        for (std::size_t node : supports_.back()) {
            roots.push_back(std::sqrt(chi[node]));
            total[node] += roots.back() * roots.back();
        }
        roots_.push_back(std::move(roots));
    }
    for (std::size_t i = 0; i < nodes_; ++i) {
        if (std::abs(total[i] - 1.0) > kUnitTolerance) {
            throw DomainError("SpaceRestrictionFamily: sum G^T G departs from the identity");
        }
    }
}

SparseOperator SpaceRestrictionFamily::restriction(std::size_t part) const {
    const auto& s = supports_.at(part);
    std::vector<Triplet> t;
    t.reserve(s.size());
    for (std::size_t j = 0; j < s.size(); ++j) t.push_back({j, s[j], roots_[part][j]});
    return SparseOperator::from_triplets(s.size(), nodes_, std::move(t));
}

SparseOperator SpaceRestrictionFamily::extension(std::size_t part) const { return restriction(part).transpose(); }

GridFunction SpaceRestrictionFamily::restrict_to(std::size_t part, const GridFunction& u) const {
    if (u.size() != nodes_) throw DimensionError("restrict_to: length mismatch");
    const auto& s = supports_.at(part);
    GridFunction v(s.size());
    for (std::size_t j = 0; j < s.size(); ++j) v[j] = roots_[part][j] * u[s[j]];
    return v;
}

GridFunction SpaceRestrictionFamily::extend_from(std::size_t part, const GridFunction& v) const {
    const auto& s = supports_.at(part);
    if (v.size() != s.size()) throw DimensionError("extend_from: length mismatch");
    GridFunction u(nodes_);
    for (std::size_t j = 0; j < s.size(); ++j) u[s[j]] = roots_[part][j] * v[j];
    return u;
}

std::vector<GridFunction> SpaceRestrictionFamily::decompose(const GridFunction& u) const {
    std::vector<GridFunction> out;
    out.reserve(parts());
    for (std::size_t a = 0; a < parts(); ++a) out.push_back(restrict_to(a, u));
    return out;
}

GridFunction SpaceRestrictionFamily::compose(std::span<const GridFunction> components) const {
    if (components.size() != parts()) throw DimensionError("SpaceRestrictionFamily::compose: component count");
    GridFunction u(nodes_);
    for (std::size_t a = 0; a < parts(); ++a) {
        const auto& s = supports_[a];
        if (components[a].size() != s.size()) throw DimensionError("SpaceRestrictionFamily::compose: length");
        for (std::size_t j = 0; j < s.size(); ++j) u[s[j]] += roots_[a][j] * components[a][j];
    }
    return u;
}

// ---------------------------------------------------------------------------
// Factorized form

FactorizedForm factorize_diffusion_operator(const Grid2D& grid, const Coefficient& coefficient) {
    const int n1 = grid.n1();
    const int n2 = grid.n2();
    FactorizedForm form;
    form.block1 = static_cast<std::size_t>(n1) * static_cast<std::size_t>(grid.interior2());
    form.block2 = static_cast<std::size_t>(grid.interior1()) * static_cast<std::size_t>(n2);
    form.face_owner.resize(form.block1 + form.block2);

    std::vector<Triplet> t;
    t.reserve(2 * form.range_dimension());
    std::size_t face = 0;
    // x1-faces between (f, i2) and (f + 1, i2), f = 0..N1-1.
    for (int i2 = 1; i2 <= grid.interior2(); ++i2) {
        for (int f = 0; f < n1; ++f, ++face) {
            const double w = std::sqrt(face_coefficient(coefficient, (f + 0.5) * grid.h1(), grid.x2(i2))) / grid.h1();
            if (f + 1 <= grid.interior1()) t.push_back({face, grid.index(f + 1, i2), w});
            if (f >= 1) t.push_back({face, grid.index(f, i2), -w});
            form.face_owner[face] = grid.index(std::max(f, 1), i2);
        }
    }
    // x2-faces between (i1, f) and (i1, f + 1), f = 0..N2-1.
    for (int f = 0; f < n2; ++f) {
        for (int i1 = 1; i1 <= grid.interior1(); ++i1, ++face) {
            const double w = std::sqrt(face_coefficient(coefficient, grid.x1(i1), (f + 0.5) * grid.h2())) / grid.h2();
            if (f + 1 <= grid.interior2()) t.push_back({face, grid.index(i1, f + 1), w});
            if (f >= 1) t.push_back({face, grid.index(i1, f), -w});
            form.face_owner[face] = grid.index(i1, std::max(f, 1));
        }
    }
    form.d = SparseOperator::from_triplets(form.range_dimension(), grid.node_count(), std::move(t));
    return form;
}

RestrictionFamily direction_restrictions(const FactorizedForm& form) {
    std::vector<double> first(form.range_dimension(), 0.0);
    std::vector<double> second(form.range_dimension(), 0.0);
    for (std::size_t f = 0; f < form.block1; ++f) first[f] = 1.0;
    for (std::size_t f = form.block1; f < form.range_dimension(); ++f) second[f] = 1.0;
    return RestrictionFamily({std::move(first), std::move(second)});
}

RestrictionFamily replicate_partition(const FactorizedForm& form, const PartitionOfUnity& pou) {
    if (pou.nodes() != form.d.cols()) throw DimensionError("replicate_partition: partition size mismatch");
    std::vector<std::vector<double>> w(pou.parts(), std::vector<double>(form.range_dimension(), 0.0));
    for (std::size_t a = 0; a < pou.parts(); ++a) {
        const auto chi = pou.weights(a);
        for (std::size_t f = 0; f < form.range_dimension(); ++f) w[a][f] = chi[form.face_owner[f]];
    }
    return RestrictionFamily(std::move(w));
}

// ---------------------------------------------------------------------------
// Operator families

void verify_reconstruction(const OperatorFamily& family, const SparseOperator& target, double tol) {
    const double diff = relative_difference(family.total(), target);
    if (!(diff <= tol)) {
        std::ostringstream msg;
        msg << "operator family does not reconstruct its target: relative difference " << diff;
        throw DomainError(msg.str());
    }
}

OperatorFamily trivial_family(const SparseOperator& a) {
    OperatorFamily family;
    family.kind = FamilyKind::RA;
    family.summands = {a};
    family.selfadjoint_summands = a.symmetric();
    family.base = a;
    family.weights = {std::vector<double>(a.rows(), 1.0)};
    return family;
}

OperatorFamily split_directional(const Grid2D& grid, const Coefficient& coefficient) {
    OperatorFamily family;
    family.kind = FamilyKind::Directional;
    family.summands = {assemble_directional_operator(grid, coefficient, Axis::X1),
                       assemble_directional_operator(grid, coefficient, Axis::X2)};
    family.selfadjoint_summands = true;
    verify_reconstruction(family, assemble_diffusion_operator(grid, coefficient));
    return family;
}

namespace {

OperatorFamily scaled_family(const SparseOperator& a, const std::vector<std::vector<double>>& weights, Side side,
                             FamilyKind left_kind, FamilyKind right_kind, bool indicator) {
    if (a.rows() != a.cols()) throw DimensionError("decomposition: operator must be square");
    OperatorFamily family;
    family.kind = side == Side::Left ? left_kind : right_kind;
    family.base = a;
    family.weights = weights;
    bool symmetric = indicator && a.symmetric();
    for (const auto& w : weights) {
        if (w.size() != a.rows()) throw DimensionError("decomposition: weight length differs from operator size");
        family.summands.push_back(side == Side::Left ? a.scale_rows(w) : a.scale_cols(w));
    }
    // Indicator weights give symmetric summands only when no row of one
    // support couples to a column of another.
    for (auto& s : family.summands) {
        if (symmetric && is_symmetric(s, 0.0)) continue;
        symmetric = false;
    }
    if (symmetric) {
        for (auto& s : family.summands) s = s.with_symmetric_flag(true);
    }
    family.selfadjoint_summands = symmetric;
    verify_reconstruction(family, a);
    return family;
}

}  // namespace

OperatorFamily decompose_chiA(const SparseOperator& a, const PartitionOfUnity& pou, Side side) {
    std::vector<std::vector<double>> w;
    for (std::size_t k = 0; k < pou.parts(); ++k) {
        const auto chi = pou.weights(k);
        w.emplace_back(chi.begin(), chi.end());
    }
    return scaled_family(a, w, side, FamilyKind::ChiA, FamilyKind::AChi, pou.is_indicator());
}

OperatorFamily decompose_restricted(const SparseOperator& a, const RestrictionFamily& r, Side side) {
    std::vector<std::vector<double>> w;
    bool indicator = true;
    for (std::size_t k = 0; k < r.parts(); ++k) {
        const auto rw = r.weights(k);
        for (double v : rw) indicator = indicator && (v == 0.0 || v == 1.0);
        w.emplace_back(rw.begin(), rw.end());
    }
    return scaled_family(a, w, side, FamilyKind::RA, FamilyKind::AR, indicator);
}

OperatorFamily decompose_DRD(const FactorizedForm& form, const RestrictionFamily& face_restrictions) {
    if (face_restrictions.dimension() != form.range_dimension()) {
        std::ostringstream msg;
        msg << "decompose_DRD: restrictions act on dimension " << face_restrictions.dimension()
            << " but D maps into " << form.range_dimension();
        throw DimensionError(msg.str());
    }
    const SparseOperator dt = form.adjoint();
    OperatorFamily family;
    family.kind = FamilyKind::DRD;
    family.selfadjoint_summands = true;
    for (std::size_t a = 0; a < face_restrictions.parts(); ++a) {
        family.summands.push_back(
            multiply(dt, form.d.scale_rows(face_restrictions.weights(a))).with_symmetric_flag(true));
    }
    verify_reconstruction(family, multiply(dt, form.d));
    return family;
}

namespace {

OperatorFamily skew_family(const SparseOperator& c, const PartitionOfUnity& pou) {
    OperatorFamily family;
    family.kind = FamilyKind::SkewSplit;
    family.selfadjoint_summands = false;
    const auto offsets = c.row_offsets();
    const auto cols = c.column_indices();
    const auto vals = c.values();
    for (std::size_t a = 0; a < pou.parts(); ++a) {
        const auto r = pou.weights(a);
        std::vector<Triplet> t;
        t.reserve(c.nonzeros());
        for (std::size_t i = 0; i < c.rows(); ++i) {
            for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) {
                const std::size_t j = cols[k];
                // (r_i c_ij + c_ij r_j)/2; the two products commute under
                // addition, so the transposed entry is the exact negative.
                t.push_back({i, j, 0.5 * (r[i] * vals[k] + vals[k] * r[j])});
            }
        }
        family.summands.push_back(SparseOperator::from_triplets(c.rows(), c.cols(), std::move(t)));
    }
    verify_reconstruction(family, c);
    return family;
}

std::pair<SparseOperator, SparseOperator> symmetric_and_skew(const SparseOperator& a, const PartitionOfUnity& pou) {
    if (a.rows() != a.cols()) throw DimensionError("skew_split: operator must be square");
    if (pou.nodes() != a.rows()) throw DimensionError("skew_split: partition size mismatch");
    const SparseOperator at = a.transpose();
    return {combine(0.5, a, 0.5, at).with_symmetric_flag(true), combine(0.5, a, -0.5, at)};
}

}  // namespace

SkewSplit skew_split(const SparseOperator& a, const PartitionOfUnity& pou, SymmetricPartStrategy strategy) {
    if (strategy == SymmetricPartStrategy::Factorized) {
        throw DomainError("skew_split: the factorized strategy needs a FactorizedForm");
    }
    auto [b, c] = symmetric_and_skew(a, pou);
    const Side side = strategy == SymmetricPartStrategy::RowScaled ? Side::Left : Side::Right;
    SkewSplit out{decompose_chiA(b, pou, side), skew_family(c, pou), strategy};
    return out;
}

SkewSplit skew_split(const SparseOperator& a, const PartitionOfUnity& pou, const FactorizedForm& form,
                     const RestrictionFamily& face_restrictions) {
    auto [b, c] = symmetric_and_skew(a, pou);
    OperatorFamily bf = decompose_DRD(form, face_restrictions);
    verify_reconstruction(bf, b);
    return SkewSplit{std::move(bf), skew_family(c, pou), SymmetricPartStrategy::Factorized};
}

GridFunction ComponentSystem::stack(std::span<const GridFunction> components) const {
    if (components.size() + 1 != offsets.size()) throw DimensionError("ComponentSystem::stack: component count");
    GridFunction out(offsets.back());
    for (std::size_t a = 0; a < components.size(); ++a) {
        if (components[a].size() != offsets[a + 1] - offsets[a]) throw DimensionError("ComponentSystem::stack");
        std::copy(components[a].begin(), components[a].end(), out.begin() + static_cast<std::ptrdiff_t>(offsets[a]));
    }
    return out;
}

std::vector<GridFunction> ComponentSystem::unstack(const GridFunction& stacked) const {
    if (stacked.size() != offsets.back()) throw DimensionError("ComponentSystem::unstack: length");
    std::vector<GridFunction> out;
    for (std::size_t a = 0; a + 1 < offsets.size(); ++a) {
        out.emplace_back(std::vector<double>(stacked.begin() + static_cast<std::ptrdiff_t>(offsets[a]),
                                             stacked.begin() + static_cast<std::ptrdiff_t>(offsets[a + 1])));
    }
    return out;
}

ComponentSystem component_system_operator(const SparseOperator& a, const SpaceRestrictionFamily& g) {
    if (a.rows() != g.dimension() || a.cols() != g.dimension()) {
        throw DimensionError("component_system_operator: size mismatch");
    }
    ComponentSystem sys;
    sys.offsets.push_back(0);
    for (std::size_t p = 0; p < g.parts(); ++p) sys.offsets.push_back(sys.offsets.back() + g.component_dimension(p));

    std::vector<Triplet> t;
    for (std::size_t p = 0; p < g.parts(); ++p) {
        const SparseOperator gp = g.restriction(p);
        for (std::size_t q = 0; q < g.parts(); ++q) {
            const SparseOperator block = multiply(gp, multiply(a, g.extension(q)));
            const auto off = block.row_offsets();
            const auto cols = block.column_indices();
            const auto vals = block.values();
            for (std::size_t r = 0; r < block.rows(); ++r) {
                for (std::size_t k = off[r]; k < off[r + 1]; ++k) {
                    t.push_back({sys.offsets[p] + r, sys.offsets[q] + cols[k], vals[k]});
                }
            }
        }
    }
    sys.k = SparseOperator::from_triplets(sys.offsets.back(), sys.offsets.back(), std::move(t), a.symmetric());
    return sys;
}

}  // namespace splitkit
