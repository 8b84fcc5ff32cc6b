#include <gtest/gtest.h>

#include <cmath>

#include "splitkit/analysis.hpp"
#include "test_support.hpp"

namespace splitkit {
namespace {

using testing::max_abs_diff;
using testing::model_operator;
using testing::random_vector;

SchemeSetup weighted_setup(const SparseOperator& a, const GridFunction& u0, double sigma, double tau) {
    SchemeSetup s;
    s.config.kind = SchemeKind::Weighted;
    s.config.sigma = sigma;
    s.config.tau = tau;
    s.config.solver = {1e-14, 20000};
    s.op = a;
    s.initial = u0;
    return s;
}

std::vector<GridFunction> weighted_trajectory(const SparseOperator& a, const GridFunction& u0, double sigma,
                                              double tau, std::size_t steps, const Forcing& f = {}) {
    auto s = weighted_setup(a, u0, sigma, tau);
    s.forcing = f;
    Integrator integ(s);
    std::vector<GridFunction> out{u0};
    for (std::size_t n = 0; n < steps; ++n) {
        integ.advance();
        out.push_back(integ.solution());
    }
    return out;
}

TEST(ExpmReference, IdentityAtZeroAndEigenmodes) {
    const Grid2D g(1.0, 1.0, 6, 5);
    const auto a = model_operator(g);
    const ExpmReference ref(a);
    const GridFunction u0 = random_vector(a.rows(), 1);
    EXPECT_LT(max_abs_diff(ref.evolve(u0, 0.0), u0), 1e-13);
    for (int m1 = 1; m1 < 6; m1 += 2) {
        const GridFunction v = eigenmode_shape(g, m1, 2);
        const double lambda = eigenmode_eigenvalue(g, m1, 2);
        const GridFunction got = ref.evolve(v, 0.03);
        for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(got[i], std::exp(-lambda * 0.03) * v[i], 1e-12);
    }
}

TEST(ExpmReference, AgreesWithEigenmodeReference) {
    const Grid2D g = Grid2D::unit_square(9);
    const auto a = model_operator(g);
    for (double t : {0.0, 0.01, 0.1}) {
        const GridFunction want = eigenmode_reference(g, 2, 1, t);
        EXPECT_LT(max_abs_diff(dense_expm_reference(a, eigenmode_shape(g, 2, 1), t), want), 1e-11);
    }
}

TEST(ExpmReference, SemigroupAndOscillation) {
    const auto a = model_operator(Grid2D(1.0, 1.0, 5, 4));
    const ExpmReference ref(a);
    const GridFunction u0 = random_vector(a.rows(), 2);
    EXPECT_LT(max_abs_diff(ref.evolve(ref.evolve(u0, 0.02), 0.03), ref.evolve(u0, 0.05)), 1e-13);
    const GridFunction v0 = random_vector(a.rows(), 3);
    // u'' + A u = 0 with centred differences.
    const double t = 0.2;
    const double h = 1e-4;
    const GridFunction acc = (1.0 / (h * h)) * (ref.oscillate(u0, v0, t + h) - 2.0 * ref.oscillate(u0, v0, t) +
                                                ref.oscillate(u0, v0, t - h));
    const GridFunction res = acc + a.apply(ref.oscillate(u0, v0, t));
    EXPECT_LT(max_abs(res), 1e-3 * max_abs(a.apply(ref.oscillate(u0, v0, t))));
    EXPECT_LT(max_abs_diff(ref.oscillate(u0, v0, 0.0), u0), 1e-13);
}

TEST(ExpmReference, RejectsLargeOrNonsymmetric) {
    const auto big = SparseOperator::identity(kDenseReferenceLimit + 1).with_symmetric_flag(true);
    EXPECT_THROW(ExpmReference{big}, DimensionError);
    const auto skew = testing::sparse(testing::random_matrix(3, 3, 4));
    EXPECT_THROW(ExpmReference{skew}, DomainError);
}

TEST(Apriori, HomogeneousRunsHoldForAllNorms) {
    const auto a = model_operator(Grid2D::unit_square(8));
    const GridFunction u0 = random_vector(a.rows(), 5);
    for (double s : {0.5, 0.75, 1.0}) {
        const auto traj = weighted_trajectory(a, u0, s, 0.05, 60);
        for (NormKind d : {NormKind::Identity, NormKind::A, NormKind::AInverse}) {
            const auto check = apriori_check_thm1(traj, u0, {}, 0.05, d, a);
            EXPECT_TRUE(check.holds);
            EXPECT_GE(check.worst_margin, -1e-10 * weighted_norm_squared(u0, d, a));
        }
    }
}

TEST(Apriori, ZeroDataGivesZeroSides) {
    const auto a = model_operator(Grid2D::unit_square(4));
    const GridFunction z(a.rows());
    const auto traj = weighted_trajectory(a, z, 0.5, 0.01, 5);
    const auto check = apriori_check_thm1(traj, z, {}, 0.01, NormKind::A, a);
    EXPECT_TRUE(check.holds);
    EXPECT_EQ(check.lhs, 0.0);
    EXPECT_EQ(check.rhs, 0.0);
}

TEST(Apriori, ExplicitWitnessViolatesBound) {
    const auto a = model_operator(Grid2D::unit_square(3));
    const GridFunction u0 = random_vector(a.rows(), 6);
    const auto traj = weighted_trajectory(a, u0, 0.0, 4.0 / 54.0, 200);
    const auto check = apriori_check_thm1(traj, u0, {}, 4.0 / 54.0, NormKind::Identity, a);
    EXPECT_FALSE(check.holds);
    EXPECT_LT(check.worst_margin, 0.0);
}

TEST(Apriori, ForcedRunHoldsAndMarginsScaleQuadratically) {
    const Grid2D g = Grid2D::unit_square(7);
    const auto a = model_operator(g);
    const GridFunction u0 = random_vector(a.rows(), 7);
    const GridFunction shape = sample(g, [](double x, double y) { return x * (1 - x) * std::sin(3 * y); });
    const double tau = 0.02;
    const double s = 0.75;
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> dist(0.1, 10.0);
    for (int trial = 0; trial < 5; ++trial) {
        const double c = dist(gen);
        const Forcing f = [&](double t) { return (c * std::cos(5 * t)) * shape; };
        const Forcing f1 = [&](double t) { return std::cos(5 * t) * shape; };
        std::vector<GridFunction> fh;
        std::vector<GridFunction> fh1;
        for (std::size_t k = 0; k < 40; ++k) {
            const double t0 = static_cast<double>(k) * tau;
            fh.push_back(s * f(t0 + tau) + (1 - s) * f(t0));
            fh1.push_back(s * f1(t0 + tau) + (1 - s) * f1(t0));
        }
        const auto base = apriori_check_thm1(weighted_trajectory(a, u0, s, tau, 40, f1), u0, fh1, tau, NormKind::A, a);
        const GridFunction cu = c * u0;
        const auto scaled = apriori_check_thm1(weighted_trajectory(a, cu, s, tau, 40, f), cu, fh, tau, NormKind::A, a);
        EXPECT_TRUE(base.holds);
        EXPECT_TRUE(scaled.holds);
        EXPECT_NEAR(scaled.worst_margin, c * c * base.worst_margin, 1e-9 * c * c * std::abs(base.rhs));
        EXPECT_NEAR(scaled.rhs, c * c * base.rhs, 1e-12 * c * c * base.rhs);
        EXPECT_EQ(scaled.worst_step, base.worst_step);
    }
}

OrderProblem eigenmode_problem(const Grid2D& g, double t) {
    const auto a = model_operator(g);
    OrderProblem p;
    p.final_time = t;
    p.initial = eigenmode_shape(g, 1, 1);
    p.reference = eigenmode_reference(g, 1, 1, t);
    p.error_norm = [a](const GridFunction& e) { return weighted_norm(e, NormKind::A, a); };
    return p;
}

LevelRunner weighted_runner(const SparseOperator& a, const GridFunction& u0, double sigma) {
    return [=](double tau, std::size_t steps) {
        Integrator integ(weighted_setup(a, u0, sigma, tau));
        integ.advance(steps);
        return integ.solution();
    };
}

TEST(EstimateOrder, WeightedSlopes) {
    const Grid2D g = Grid2D::unit_square(17);
    const auto a = model_operator(g);
    const auto problem = eigenmode_problem(g, 0.2);
    const auto cn = estimate_order(weighted_runner(a, problem.initial, 0.5), 0.02, 4, problem);
    EXPECT_GE(cn.slope, 1.9);
    EXPECT_LE(cn.slope, 2.1);
    EXPECT_EQ(cn.taus.size(), 4u);
    EXPECT_EQ(cn.ratios.size(), 3u);
    EXPECT_DOUBLE_EQ(cn.taus[3], 0.0025);
    const auto be = estimate_order(weighted_runner(a, problem.initial, 1.0), 0.02, 4, problem);
    EXPECT_GE(be.slope, 0.9);
    EXPECT_LE(be.slope, 1.1);
    EXPECT_FALSE(be.saturated);
}

TEST(EstimateOrder, ExactRunnerIsSaturated) {
    const Grid2D g = Grid2D::unit_square(9);
    const auto problem = eigenmode_problem(g, 0.1);
    const LevelRunner exact = [&](double, std::size_t) { return problem.reference; };
    const auto est = estimate_order(exact, 0.02, 3, problem);
    EXPECT_TRUE(est.saturated);
    EXPECT_TRUE(std::isnan(est.slope));
    for (double e : est.errors) EXPECT_LE(e, 1e-11);
}

TEST(EstimateOrder, DivergenceNamesLevel) {
    const Grid2D g = Grid2D::unit_square(9);
    const auto a = model_operator(g);
    auto problem = eigenmode_problem(g, 2.0);
    problem.initial = random_vector(a.rows(), 9);
    try {
        (void)estimate_order(weighted_runner(a, problem.initial, 0.0), 0.02, 3, problem);
        FAIL() << "expected DivergenceError";
    } catch (const DivergenceError& e) {
        EXPECT_NE(std::string(e.what()).find("level 0"), std::string::npos) << e.what();
    }
    EXPECT_THROW((void)estimate_order(weighted_runner(a, problem.initial, 1.0), 0.02, 2, problem), DomainError);
}

TEST(FitLogSlope, ExactPowerLaw) {
    const std::vector<double> taus{0.1, 0.05, 0.025, 0.0125};
    std::vector<double> errs;
    for (double t : taus) errs.push_back(3.0 * t * t * t);
    EXPECT_NEAR(fit_log_slope(taus, errs), 3.0, 1e-12);
}

TEST(RecordRun, MonitorsDoNotChangeTrajectory) {
    const auto a = model_operator(Grid2D(1.0, 1.0, 9, 7));
    const GridFunction u0 = random_vector(a.rows(), 10);
    SchemeSetup s = weighted_setup(a, u0, 0.5, 0.01);
    s.config.kind = SchemeKind::Regularized;
    s.family = split_directional(Grid2D(1.0, 1.0, 9, 7), Coefficient::constant(1.0));
    s.config.sigma = 1.0;
    Integrator plain(s);
    plain.advance(25);
    Integrator watched(s);
    std::vector<RunRecord> records;
    const ExpmReference ref(a);
    std::size_t calls = 0;
    RecordOptions opts;
    opts.timing = true;
    record_run(watched, 25, [&](double t) { return ref.evolve(u0, t); }, opts, records,
               [&](const Integrator&) { ++calls; });
    EXPECT_EQ(plain.solution(), watched.solution());
    ASSERT_EQ(records.size(), 26u);
    EXPECT_EQ(calls, 26u);
    for (std::size_t n = 0; n < records.size(); ++n) {
        EXPECT_EQ(records[n].n, n);
        EXPECT_NEAR(records[n].t, 0.01 * static_cast<double>(n), 1e-15);
        if (n > 0) EXPECT_GT(records[n].t, records[n - 1].t);
    }
    EXPECT_LT(records[0].err_i, 1e-13);
    EXPECT_GT(records[25].err_a, 0.0);
}

TEST(RecordRun, DivergenceKeepsCompletedSteps) {
    const auto a = model_operator(Grid2D::unit_square(5));
    Integrator integ(weighted_setup(a, random_vector(a.rows(), 11), 0.0, 0.2));
    std::vector<RunRecord> records;
    EXPECT_THROW(record_run(integ, 500, {}, {}, records), DivergenceError);
    EXPECT_GT(records.size(), 1u);
    EXPECT_LT(records.size(), 501u);
    EXPECT_TRUE(std::isnan(records[0].err_i));
}

}  // namespace
}  // namespace splitkit
