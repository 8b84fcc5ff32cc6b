#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "splitkit/linalg.hpp"
#include "splitkit/model.hpp"

namespace splitkit {

/// Nonnegative nodal weights chi_1..chi_p summing to one at every node.
class PartitionOfUnity {
public:
    /// Validates chi >= 0 and sum chi = 1 (1e-14 absolute); throws DomainError.
    explicit PartitionOfUnity(std::vector<std::vector<double>> weights);
    static PartitionOfUnity trivial(std::size_t nodes);

    std::size_t parts() const noexcept { return weights_.size(); }
    std::size_t nodes() const noexcept { return weights_.front().size(); }
    std::span<const double> weights(std::size_t part) const { return weights_.at(part); }
    /// Nodes where chi_part > 0, ascending.
    std::vector<std::size_t> support(std::size_t part) const;
    /// Every weight is 0 or 1.
    bool is_indicator() const noexcept;

private:
    std::vector<std::vector<double>> weights_;
};

enum class StripProfile { Hard, Linear };

/// Strips along x1. HARD gives 0/1 indicators split at i1 = a (N1-1) / p;
/// LINEAR additionally ramps each interface affinely over `overlap_nodes`
/// columns (weights j/(overlap+1), j = 1..overlap).
PartitionOfUnity build_strip_partition(const Grid2D& grid, std::size_t parts, std::size_t overlap_nodes,
                                       StripProfile profile);

/// Diagonal operators R_1..R_p with sum R_a = I, R_a >= 0.
class RestrictionFamily {
public:
    explicit RestrictionFamily(std::vector<std::vector<double>> weights);
    static RestrictionFamily from_partition(const PartitionOfUnity& pou);

    std::size_t parts() const noexcept { return weights_.size(); }
    std::size_t dimension() const noexcept { return weights_.front().size(); }
    std::span<const double> weights(std::size_t part) const { return weights_.at(part); }
    std::vector<std::size_t> support(std::size_t part) const;
    SparseOperator restriction(std::size_t part) const;
    /// sum_a R_a y_a
    GridFunction compose(std::span<const GridFunction> components) const;

private:
    std::vector<std::vector<double>> weights_;
};

/// G_a : H -> H_a, node selection on supp(chi_a) followed by scaling with
/// chi_a^{1/2}. Satisfies sum_a G_a^T G_a = I.
class SpaceRestrictionFamily {
public:
    explicit SpaceRestrictionFamily(const PartitionOfUnity& pou);

    std::size_t parts() const noexcept { return supports_.size(); }
    std::size_t dimension() const noexcept { return nodes_; }
    std::size_t component_dimension(std::size_t part) const { return supports_.at(part).size(); }
    std::span<const std::size_t> support(std::size_t part) const { return supports_.at(part); }
    std::span<const double> scaling(std::size_t part) const { return roots_.at(part); }

    /// G_a as an (dim H_a) x (dim H) sparse matrix.
    SparseOperator restriction(std::size_t part) const;
    /// G_a^T, exact transpose of `restriction`.
    SparseOperator extension(std::size_t part) const;

    GridFunction restrict_to(std::size_t part, const GridFunction& u) const;
    GridFunction extend_from(std::size_t part, const GridFunction& v) const;
    /// Components G_a u.
    std::vector<GridFunction> decompose(const GridFunction& u) const;
    /// sum_a G_a^T y_a
    GridFunction compose(std::span<const GridFunction> components) const;

private:
    std::size_t nodes_;
    std::vector<std::vector<std::size_t>> supports_;
    std::vector<std::vector<double>> roots_;
};

/// A = D^T D with D mapping nodal values to face differences.
///
/// The range space stacks one block of x1-faces and one of x2-faces. Faces
/// include those adjacent to the boundary, so block sizes are N1 (N2-1) and
/// (N1-1) N2. Each face has an owner node used to carry nodal partitions
/// over to the face space.
struct FactorizedForm {
    SparseOperator d;
    std::size_t block1 = 0;
    std::size_t block2 = 0;
    std::vector<std::size_t> face_owner;

    SparseOperator adjoint() const { return d.transpose(); }
    std::size_t range_dimension() const noexcept { return block1 + block2; }
};

/// Discrete gradient factor with entries k^{1/2}(face) / h.
FactorizedForm factorize_diffusion_operator(const Grid2D& grid, const Coefficient& coefficient);

/// R_1 keeps x1-faces, R_2 keeps x2-faces: recovers directional splitting.
RestrictionFamily direction_restrictions(const FactorizedForm& form);

/// chi_a of each face's owner node, replicated on both face blocks.
RestrictionFamily replicate_partition(const FactorizedForm& form, const PartitionOfUnity& pou);

enum class FamilyKind { Directional, ChiA, AChi, RA, AR, DRD, SkewSplit };
enum class Side { Left, Right };

/// Additive decomposition A = sum_a A_a.
///
/// For the row/column scaled kinds (ChiA, AChi, RA, AR) the base operator and
/// its diagonal weights are retained so shifted solves can stay symmetric.
struct OperatorFamily {
    FamilyKind kind = FamilyKind::Directional;
    std::vector<SparseOperator> summands;
    bool selfadjoint_summands = false;
    std::optional<SparseOperator> base;
    std::vector<std::vector<double>> weights;

    std::size_t parts() const noexcept { return summands.size(); }
    SparseOperator total() const { return sum(summands); }
    bool row_scaled() const noexcept { return kind == FamilyKind::ChiA || kind == FamilyKind::RA; }
    bool column_scaled() const noexcept { return kind == FamilyKind::AChi || kind == FamilyKind::AR; }
};

/// Trivial one-term family {A}.
OperatorFamily trivial_family(const SparseOperator& a);

OperatorFamily split_directional(const Grid2D& grid, const Coefficient& coefficient);

/// LEFT: A_a = chi_a A (row scaling). RIGHT: A_a = A chi_a (column scaling).
OperatorFamily decompose_chiA(const SparseOperator& a, const PartitionOfUnity& pou, Side side);

/// Same construction driven by a generic restriction family (kinds RA / AR).
OperatorFamily decompose_restricted(const SparseOperator& a, const RestrictionFamily& r, Side side);

/// A_a = D^T R_a D; symmetric positive semidefinite summands.
OperatorFamily decompose_DRD(const FactorizedForm& form, const RestrictionFamily& face_restrictions);

enum class SymmetricPartStrategy { RowScaled, ColumnScaled, Factorized };

struct SkewSplit {
    OperatorFamily symmetric_part;  ///< B_a with sum B_a = (A + A^T)/2
    OperatorFamily skew_part;       ///< C_a = (R_a C + C R_a)/2
    SymmetricPartStrategy strategy;
};

/// Splits A = B + C and decomposes each part. RowScaled / ColumnScaled use
/// chi_a B or B chi_a for the symmetric part.
SkewSplit skew_split(const SparseOperator& a, const PartitionOfUnity& pou,
                     SymmetricPartStrategy strategy = SymmetricPartStrategy::RowScaled);
/// Factorized variant: `form` must satisfy D^T D = (A + A^T)/2.
SkewSplit skew_split(const SparseOperator& a, const PartitionOfUnity& pou, const FactorizedForm& form,
                     const RestrictionFamily& face_restrictions);

/// Block operator K_{ab} = G_a A G_b^T on the stacked component space, with
/// the offset of each block.
struct ComponentSystem {
    SparseOperator k;
    std::vector<std::size_t> offsets;

    GridFunction stack(std::span<const GridFunction> components) const;
    std::vector<GridFunction> unstack(const GridFunction& stacked) const;
};

ComponentSystem component_system_operator(const SparseOperator& a, const SpaceRestrictionFamily& g);

/// Throws DomainError unless sum of summands equals `target` to `tol` relative.
void verify_reconstruction(const OperatorFamily& family, const SparseOperator& target, double tol = 1e-12);

}  // namespace splitkit
