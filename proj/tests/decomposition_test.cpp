#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "splitkit/decomposition.hpp"
#include "test_support.hpp"

namespace splitkit {
namespace {

using testing::dense;
using testing::model_operator;
using testing::random_vector;
using testing::sparse;
using testing::vec;

Eigen::VectorXd weights_vec(std::span<const double> w) {
    return Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
}

double column_weight(const Grid2D& g, const PartitionOfUnity& pou, std::size_t part, int i1) {
    return pou.weights(part)[g.index(i1, 1)];
}

Coefficient bumpy() {
    return {[](double x, double y) { return 1.0 + 0.5 * std::cos(2.0 * x) * std::sin(3.0 * y + 0.2); }, 0.5};
}

TEST(PartitionOfUnity, ValidatesWeights) {
    EXPECT_THROW(PartitionOfUnity({{0.5, 1.0}, {0.5, 0.1}}), DomainError);
    EXPECT_THROW(PartitionOfUnity({{1.5, 1.0}, {-0.5, 0.0}}), DomainError);
    const PartitionOfUnity ok({{0.25, 1.0}, {0.75, 0.0}});
    EXPECT_EQ(ok.support(1), std::vector<std::size_t>{0});
    EXPECT_FALSE(ok.is_indicator());
    EXPECT_TRUE(PartitionOfUnity::trivial(3).is_indicator());
}

TEST(StripPartition, SingleStripIsTrivial) {
    const Grid2D g = Grid2D::unit_square(6);
    const auto pou = build_strip_partition(g, 1, 0, StripProfile::Hard);
    ASSERT_EQ(pou.parts(), 1u);
    for (double w : pou.weights(0)) EXPECT_EQ(w, 1.0);
}

TEST(StripPartition, HardMidlineSplit) {
    const Grid2D g(1.0, 1.0, 5, 4);
    const auto pou = build_strip_partition(g, 2, 0, StripProfile::Hard);
    EXPECT_TRUE(pou.is_indicator());
    for (int i2 = 1; i2 <= g.interior2(); ++i2) {
        for (int i1 = 1; i1 <= 4; ++i1) {
            const std::size_t k = g.index(i1, i2);
            EXPECT_EQ(pou.weights(0)[k], i1 <= 2 ? 1.0 : 0.0);
            EXPECT_EQ(pou.weights(1)[k], i1 <= 2 ? 0.0 : 1.0);
        }
    }
}

TEST(StripPartition, LinearRampAcrossOverlap) {
    const Grid2D g(1.0, 1.0, 5, 3);
    const auto pou = build_strip_partition(g, 2, 2, StripProfile::Linear);
    const double ramp[] = {1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0};
    for (int i1 = 1; i1 <= 4; ++i1) {
        EXPECT_NEAR(column_weight(g, pou, 0, i1), ramp[i1 - 1], 1e-15);
        EXPECT_NEAR(column_weight(g, pou, 1, i1), 1.0 - ramp[i1 - 1], 1e-15);
    }
    EXPECT_THROW((void)build_strip_partition(g, 2, 3, StripProfile::Linear), DomainError);
    EXPECT_THROW((void)build_strip_partition(g, 5, 0, StripProfile::Hard), DomainError);
}

TEST(StripPartition, InvariantsOverManyConfigurations) {
    int checked = 0;
    for (int n1 = 4; n1 <= 16; n1 += 3) {
        for (std::size_t p = 1; p <= 4; ++p) {
            for (std::size_t overlap = 0; overlap <= 2; ++overlap) {
                const Grid2D g(1.0, 1.0, n1, 4);
                const auto profile = overlap == 0 ? StripProfile::Hard : StripProfile::Linear;
                if (static_cast<std::size_t>(g.interior1()) / p < std::max<std::size_t>(overlap, 1)) continue;
                const auto pou = build_strip_partition(g, p, overlap, profile);
                for (std::size_t i = 0; i < g.node_count(); ++i) {
                    double s = 0.0;
                    for (std::size_t a = 0; a < p; ++a) {
                        EXPECT_GE(pou.weights(a)[i], 0.0);
                        s += pou.weights(a)[i];
                    }
                    EXPECT_NEAR(s, 1.0, 1e-14);
                }
                ++checked;
            }
        }
    }
    EXPECT_GE(checked, 30);
}

TEST(Directional, FourByFourModel) {
    const Grid2D g = Grid2D::unit_square(3);
    const auto fam = split_directional(g, Coefficient::constant(1.0));
    ASSERT_EQ(fam.parts(), 2u);
    EXPECT_TRUE(fam.selfadjoint_summands);
    const Eigen::MatrixXd a1 = dense(fam.summands[0]);
    Eigen::MatrixXd expected(4, 4);
    expected << 18, -9, 0, 0, -9, 18, 0, 0, 0, 0, 18, -9, 0, 0, -9, 18;
    EXPECT_EQ(a1, expected);
    EXPECT_EQ(dense(fam.summands[0]) + dense(fam.summands[1]), dense(model_operator(g)));
    const GridFunction y = fam.summands[0].apply(GridFunction(4, 1.0));
    for (double v : y) EXPECT_DOUBLE_EQ(v, 9.0);
}

TEST(ChiA, TrivialPartitionGivesA) {
    const auto a = model_operator(Grid2D::unit_square(5));
    for (Side side : {Side::Left, Side::Right}) {
        const auto fam = decompose_chiA(a, PartitionOfUnity::trivial(a.rows()), side);
        ASSERT_EQ(fam.parts(), 1u);
        EXPECT_EQ(dense(fam.summands[0]), dense(a));
    }
}

TEST(ChiA, LeftHardKeepsSupportRows) {
    const Grid2D g = Grid2D::unit_square(3);
    const auto a = model_operator(g);
    const auto pou = build_strip_partition(g, 2, 0, StripProfile::Hard);
    const auto fam = decompose_chiA(a, pou, Side::Left);
    const Eigen::MatrixXd m = dense(a);
    for (std::size_t part = 0; part < 2; ++part) {
        const Eigen::MatrixXd s = dense(fam.summands[part]);
        for (std::size_t i = 0; i < a.rows(); ++i) {
            const Eigen::VectorXd want = pou.weights(part)[i] == 1.0 ? Eigen::VectorXd(m.row(static_cast<Eigen::Index>(i))) : Eigen::VectorXd::Zero(4);
            EXPECT_EQ(Eigen::VectorXd(s.row(static_cast<Eigen::Index>(i))), want);
        }
    }
    EXPECT_EQ(dense(fam.summands[0]) + dense(fam.summands[1]), m);
    EXPECT_FALSE(fam.selfadjoint_summands);
}

TEST(ChiA, RightIsTransposeOfLeft) {
    const Grid2D g(1.0, 1.0, 7, 5);
    const auto a = assemble_diffusion_operator(g, bumpy());
    const auto pou = build_strip_partition(g, 3, 1, StripProfile::Linear);
    const auto left = decompose_chiA(a.transpose(), pou, Side::Left);
    const auto right = decompose_chiA(a, pou, Side::Right);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_LT((dense(left.summands[k]).transpose() - dense(right.summands[k])).cwiseAbs().maxCoeff(), 1e-13);
        EXPECT_LT((dense(right.summands[k]) - dense(a) * weights_vec(pou.weights(k)).asDiagonal()).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Factorized, GradientFactorReproducesA) {
    const Grid2D g(1.0, 1.5, 6, 5);
    const auto a = assemble_diffusion_operator(g, bumpy());
    const auto form = factorize_diffusion_operator(g, bumpy());
    EXPECT_EQ(form.d.cols(), a.rows());
    EXPECT_EQ(form.d.rows(), form.range_dimension());
    for (std::uint64_t s = 0; s < 50; ++s) {
        const GridFunction u = random_vector(a.rows(), s);
        const GridFunction v = random_vector(a.rows(), 1000 + s);
        const double lhs = dot(form.d.apply(u), form.d.apply(v));
        const double rhs = dot(a.apply(u), v);
        EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(rhs)) * operator_norm_estimate(a) / 100.0);
    }
}

TEST(DRD, DirectionBlocksReproduceDirectionalSplit) {
    const Grid2D g(1.0, 1.0, 7, 6);
    const auto k = bumpy();
    const auto form = factorize_diffusion_operator(g, k);
    const auto drd = decompose_DRD(form, direction_restrictions(form));
    const auto dir = split_directional(g, k);
    for (std::size_t a = 0; a < 2; ++a) {
        const Eigen::MatrixXd want = dense(dir.summands[a]);
        EXPECT_LT((dense(drd.summands[a]) - want).cwiseAbs().maxCoeff(), 1e-13 * want.cwiseAbs().maxCoeff());
    }
}

TEST(DRD, SingleRestrictionGivesA) {
    const Grid2D g = Grid2D::unit_square(5);
    const auto form = factorize_diffusion_operator(g, Coefficient::constant(1.0));
    const RestrictionFamily one({std::vector<double>(form.range_dimension(), 1.0)});
    const auto fam = decompose_DRD(form, one);
    EXPECT_LT((dense(fam.summands[0]) - dense(model_operator(g))).cwiseAbs().maxCoeff(), 1e-12);
    const RestrictionFamily wrong({std::vector<double>(3, 1.0)});
    EXPECT_THROW((void)decompose_DRD(form, wrong), DimensionError);
}

TEST(DRD, ReplicatedPartitionSummandsAreSymmetricSemidefinite) {
    const Grid2D g(1.0, 1.0, 8, 5);
    const auto k = bumpy();
    const auto a = assemble_diffusion_operator(g, k);
    const auto form = factorize_diffusion_operator(g, k);
    const auto pou = build_strip_partition(g, 3, 2, StripProfile::Linear);
    const auto fam = decompose_DRD(form, replicate_partition(form, pou));
    EXPECT_TRUE(fam.selfadjoint_summands);
    EXPECT_LT((dense(fam.total()) - dense(a)).cwiseAbs().maxCoeff(), 1e-12 * dense(a).cwiseAbs().maxCoeff());
    for (const auto& s : fam.summands) {
        EXPECT_TRUE(is_symmetric(s, 1e-13));
        const double scale = operator_norm_estimate(s);
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const GridFunction u = random_vector(a.rows(), seed);
            EXPECT_GE(dot(s.apply(u), u), -1e-10 * scale * dot(u, u));
        }
    }
}

TEST(SpaceRestrictions, TrivialAndHardPartitions) {
    const Grid2D g(1.0, 1.0, 5, 4);
    const SpaceRestrictionFamily one(PartitionOfUnity::trivial(g.node_count()));
    EXPECT_EQ(dense(one.restriction(0)), Eigen::MatrixXd::Identity(12, 12));
    const SpaceRestrictionFamily hard(build_strip_partition(g, 2, 0, StripProfile::Hard));
    for (std::size_t a = 0; a < 2; ++a) {
        const Eigen::MatrixXd ga = dense(hard.restriction(a));
        for (Eigen::Index r = 0; r < ga.rows(); ++r) {
            EXPECT_EQ(ga.row(r).sum(), 1.0);
            EXPECT_EQ(ga.row(r).cwiseAbs().maxCoeff(), 1.0);
        }
    }
}

TEST(SpaceRestrictions, ResolutionOfIdentityAndAdjoint) {
    const Grid2D g(1.0, 1.0, 9, 4);
    const auto pou = build_strip_partition(g, 3, 2, StripProfile::Linear);
    const SpaceRestrictionFamily fam(pou);
    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g.node_count()), static_cast<Eigen::Index>(g.node_count()));
    for (std::size_t a = 0; a < fam.parts(); ++a) {
        const Eigen::MatrixXd ga = dense(fam.restriction(a));
        EXPECT_EQ(dense(fam.extension(a)), ga.transpose());
        total += ga.transpose() * ga;
        // G G^T is diag(chi) on the support.
        const Eigen::MatrixXd ggt = ga * ga.transpose();
        const auto supp = fam.support(a);
        for (std::size_t i = 0; i < supp.size(); ++i) {
            EXPECT_NEAR(ggt(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)), pou.weights(a)[supp[i]], 1e-15);
        }
        EXPECT_LT((ggt - Eigen::MatrixXd(ggt.diagonal().asDiagonal())).cwiseAbs().maxCoeff(), 1e-15);
    }
    EXPECT_LT((total - Eigen::MatrixXd::Identity(total.rows(), total.cols())).cwiseAbs().maxCoeff(), 1e-14);
    const GridFunction u = random_vector(g.node_count(), 4);
    EXPECT_LT(testing::max_abs_diff(fam.compose(fam.decompose(u)), u), 1e-14);
}

TEST(ComponentSystem, BlocksMatchDenseProducts) {
    const Grid2D g(1.0, 1.0, 6, 4);
    const auto a = model_operator(g);
    const SpaceRestrictionFamily fam(build_strip_partition(g, 2, 2, StripProfile::Linear));
    const auto sys = component_system_operator(a, fam);
    const Eigen::MatrixXd k = dense(sys.k);
    const Eigen::MatrixXd m = dense(a);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            const Eigen::MatrixXd want = dense(fam.restriction(i)) * m * dense(fam.extension(j));
            const Eigen::MatrixXd got = k.block(static_cast<Eigen::Index>(sys.offsets[i]), static_cast<Eigen::Index>(sys.offsets[j]), want.rows(), want.cols());
            EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-12);
        }
    }
    const auto parts = fam.decompose(random_vector(g.node_count(), 8));
    const auto back = sys.unstack(sys.stack(parts));
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(back[i], parts[i]);
}

TEST(SkewSplit, SymmetricInputHasZeroSkewPart) {
    const Grid2D g(1.0, 1.0, 5, 4);
    const auto a = model_operator(g);
    const auto split = skew_split(a, build_strip_partition(g, 2, 0, StripProfile::Hard));
    for (const auto& c : split.skew_part.summands) EXPECT_EQ(c.max_abs_entry(), 0.0);
}

TEST(SkewSplit, RandomMatrixOracle) {
    const Eigen::MatrixXd m = testing::random_matrix(6, 6, 77) + 6.0 * Eigen::MatrixXd::Identity(6, 6);
    const auto a = sparse(m);
    const PartitionOfUnity pou({{1, 1, 1, 0, 0, 0}, {0, 0, 0, 1, 1, 1}});
    const auto split = skew_split(a, pou);
    const Eigen::MatrixXd b = 0.5 * (m + m.transpose());
    const Eigen::MatrixXd c = 0.5 * (m - m.transpose());
    Eigen::MatrixXd csum = Eigen::MatrixXd::Zero(6, 6);
    Eigen::MatrixXd bsum = Eigen::MatrixXd::Zero(6, 6);
    for (std::size_t k = 0; k < 2; ++k) {
        const Eigen::MatrixXd r = weights_vec(pou.weights(k)).asDiagonal();
        const Eigen::MatrixXd ck = dense(split.skew_part.summands[k]);
        EXPECT_LT((ck + ck.transpose()).cwiseAbs().maxCoeff(), 1e-15);
        EXPECT_LT((ck - 0.5 * (r * c + c * r)).cwiseAbs().maxCoeff(), 1e-15);
        csum += ck;
        bsum += dense(split.symmetric_part.summands[k]);
    }
    EXPECT_LT((csum - c).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((bsum + csum - m).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((bsum - b).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SkewSplit, SinglePartAndFactorizedVariant) {
    const Grid2D g(1.0, 1.0, 5, 5);
    const auto base = assemble_diffusion_operator(g, bumpy());
    // Add a skew convection-like perturbation.
    const auto a1 = assemble_directional_operator(g, Coefficient::constant(1.0), Axis::X1);
    const Eigen::MatrixXd upper = dense(a1).triangularView<Eigen::StrictlyUpper>();
    const Eigen::MatrixXd skew = 0.3 * (upper - Eigen::MatrixXd(upper.transpose()));
    const auto a = sparse(dense(base) + skew);
    const auto one = skew_split(a, PartitionOfUnity::trivial(a.rows()));
    EXPECT_LT((dense(one.symmetric_part.summands[0]) - dense(base)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((dense(one.skew_part.summands[0]) - skew).cwiseAbs().maxCoeff(), 1e-12);

    const auto pou = build_strip_partition(g, 2, 2, StripProfile::Linear);
    const auto form = factorize_diffusion_operator(g, bumpy());
    const auto split = skew_split(a, pou, form, replicate_partition(form, pou));
    EXPECT_EQ(split.strategy, SymmetricPartStrategy::Factorized);
    EXPECT_TRUE(split.symmetric_part.selfadjoint_summands);
    const Eigen::MatrixXd total = dense(split.symmetric_part.total()) + dense(split.skew_part.total());
    EXPECT_LT((total - dense(a)).cwiseAbs().maxCoeff(), 1e-12 * dense(a).cwiseAbs().maxCoeff());
}

TEST(Restricted, SymmetrizedOperatorHasSameSpectrum) {
    // eig(R_a A) = eig(A^{1/2} R_a A^{1/2}) on small dense instances.
    for (int n = 3; n <= 5; ++n) {
        const Grid2D g(1.0, 1.0, n, 5);
        const auto a = assemble_diffusion_operator(g, bumpy());
        ASSERT_LE(a.rows(), 16u);
        const std::size_t overlap = static_cast<std::size_t>(n - 3);
        const auto pou = build_strip_partition(g, 2, overlap, overlap ? StripProfile::Linear : StripProfile::Hard);
        const auto fam = decompose_restricted(a, RestrictionFamily::from_partition(pou), Side::Left);
        const Eigen::MatrixXd root = testing::sqrt_spd(dense(a));
        for (std::size_t k = 0; k < fam.parts(); ++k) {
            const Eigen::MatrixXd r = weights_vec(pou.weights(k)).asDiagonal();
            const Eigen::MatrixXd sym = root * r * root;
            Eigen::VectorXd want = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym).eigenvalues();
            Eigen::VectorXd got = Eigen::EigenSolver<Eigen::MatrixXd>(dense(fam.summands[k])).eigenvalues().real();
            std::sort(got.data(), got.data() + got.size());
            std::sort(want.data(), want.data() + want.size());
            EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, want.cwiseAbs().maxCoeff()));
        }
    }
}

TEST(Reconstruction, RandomizedSweepOverFamilies) {
    int checked = 0;
    for (std::uint64_t s = 0; s < 60; ++s) {
        std::mt19937_64 gen(s);
        const int n1 = 4 + static_cast<int>(gen() % 6);
        const int n2 = 3 + static_cast<int>(gen() % 4);
        const std::size_t p = 1 + gen() % 3;
        const std::size_t overlap = (gen() % 2 == 0) ? 0 : 1 + gen() % 2;
        const Grid2D g(0.5 + 0.1 * static_cast<double>(gen() % 10), 1.0, n1, n2);
        if (static_cast<std::size_t>(g.interior1()) / p < std::max<std::size_t>(overlap, 1)) continue;
        const auto k = bumpy();
        const auto a = assemble_diffusion_operator(g, k);
        const auto pou = build_strip_partition(g, p, overlap, overlap ? StripProfile::Linear : StripProfile::Hard);
        const auto form = factorize_diffusion_operator(g, k);
        const double scale = dense(a).cwiseAbs().maxCoeff();
        const std::vector<OperatorFamily> families{
            split_directional(g, k),
            decompose_chiA(a, pou, Side::Left),
            decompose_chiA(a, pou, Side::Right),
            decompose_restricted(a, RestrictionFamily::from_partition(pou), Side::Left),
            decompose_restricted(a, RestrictionFamily::from_partition(pou), Side::Right),
            decompose_DRD(form, replicate_partition(form, pou)),
        };
        for (const auto& fam : families) {
            EXPECT_LT((dense(fam.total()) - dense(a)).cwiseAbs().maxCoeff(), 1e-12 * scale);
            EXPECT_NO_THROW(verify_reconstruction(fam, a));
        }
        ++checked;
    }
    EXPECT_GE(checked, 50);
}

TEST(Reconstruction, VerifyRejectsMismatch) {
    const auto a = model_operator(Grid2D::unit_square(4));
    auto fam = trivial_family(a);
    fam.summands[0] = a.shifted(0.1, 1.0);
    EXPECT_THROW(verify_reconstruction(fam, a), DomainError);
}

}  // namespace
}  // namespace splitkit
