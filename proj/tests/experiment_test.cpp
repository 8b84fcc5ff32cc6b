#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <json.hpp>
#include <sstream>

#include "splitkit/expression.hpp"
#include "splitkit/experiment.hpp"
#include "test_support.hpp"

namespace splitkit {
namespace {

namespace fs = std::filesystem;

const char* kMinimal = R"({
  "name": "minimal",
  "grid": {"N1": 17, "N2": 17},
  "scheme": {"kind": "WEIGHTED", "sigma": 0.5, "tau": 0.02, "steps": 10},
  "initial": {"type": "EIGENMODE", "m1": 1, "m2": 1},
  "reference": {"type": "EIGENMODE"}
})";

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("splitkit_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

RunOptions quiet_in(const fs::path& dir) {
    RunOptions o;
    o.out_dir = dir;
    o.quiet = true;
    return o;
}

std::string with(const std::string& base, const std::string& pointer, const nlohmann::json& value) {
    auto j = nlohmann::json::parse(base);
    j[nlohmann::json::json_pointer(pointer)] = value;
    return j.dump();
}

std::string config_error_field(const std::string& text) {
    try {
        (void)parse_experiment_config(text);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "<none>";
}

TEST(Expression, GrammarAndErrors) {
    const auto e = Expression::parse("sin(pi*x1) * exp(-t) + 2*x2/4 - -1");
    EXPECT_NEAR(e(0.5, 1.0, 0.0), 1.0 + 0.5 + 1.0, 1e-15);
    EXPECT_TRUE(e.depends_on_time());
    EXPECT_FALSE(Expression::parse("cos(x1) + 3").depends_on_time());
    EXPECT_DOUBLE_EQ(Expression::parse("(1+2)*3 - 4/2")(0, 0), 7.0);
    EXPECT_DOUBLE_EQ(Expression::parse("1.5e2")(0, 0), 150.0);
    EXPECT_THROW((void)Expression::parse("sin(x1"), ExpressionError);
    EXPECT_THROW((void)Expression::parse("x3"), ExpressionError);
    EXPECT_THROW((void)Expression::parse("1 +"), ExpressionError);
    try {
        (void)Expression::parse("x1 $ 2");
    } catch (const ExpressionError& err) {
        EXPECT_EQ(err.position(), 3u);
    }
}

TEST(Config, MinimalDefaults) {
    const auto c = parse_experiment_config(kMinimal);
    EXPECT_EQ(c.name, "minimal");
    EXPECT_EQ(c.grid.n1, 17);
    EXPECT_EQ(c.scheme.kind, SchemeKind::Weighted);
    EXPECT_EQ(c.scheme.steps, 10u);
    EXPECT_EQ(c.reference, ReferenceKind::Eigenmode);
    EXPECT_EQ(c.outputs.csv, "run.csv");
}

TEST(Config, ErrorsNameTheField) {
    EXPECT_EQ(config_error_field(with(kMinimal, "/scheme/bogus", 1)), "/scheme/bogus");
    EXPECT_EQ(config_error_field(with(kMinimal, "/extra", 1)), "/extra");
    EXPECT_EQ(config_error_field(with(kMinimal, "/scheme/tau", -0.1)), "/scheme/tau");
    EXPECT_EQ(config_error_field(with(kMinimal, "/scheme/tau", "fast")), "/scheme/tau");
    EXPECT_EQ(config_error_field(with(kMinimal, "/scheme/kind", "EULER")), "/scheme/kind");
    EXPECT_EQ(config_error_field(with(kMinimal, "/grid/N1", 1)), "/grid/N1");
    EXPECT_EQ(config_error_field(with(kMinimal, "/initial/m1", 17)), "/initial/m1");
    EXPECT_EQ(config_error_field(with(kMinimal, "/coefficient", nlohmann::json{{"type", "EXPRESSION"}, {"expr", "1+"}, {"kappa", 1}})),
              "/coefficient/expr");
    // Forcing is not defined for the subdomain schemes.
    auto sub = with(kMinimal, "/scheme/kind", "SUBDOMAIN_418");
    sub = with(sub, "/forcing", nlohmann::json{{"type", "EXPRESSION"}, {"expr", "x1"}});
    EXPECT_EQ(config_error_field(sub), "/forcing");
}

TEST(Config, SyntaxErrorsCarryLine) {
    try {
        (void)parse_experiment_config("{\n  \"name\": \"x\",\n  oops\n}");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        ASSERT_TRUE(e.line().has_value());
        EXPECT_EQ(*e.line(), 3u);
    }
}

TEST(Table, HeaderAndRoundTrip) {
    EXPECT_EQ(emit_table({}), "n,t,norm_I,norm_A,norm_cert,err_I,err_A,step_seconds\n");
    std::vector<RunRecord> recs(1);
    recs[0] = {3, 0.1 + 0.2, 1.0 / 3.0, std::sqrt(2.0), 1e-300, std::numeric_limits<double>::quiet_NaN(), 5e-17, 0.0};
    const std::string csv = emit_table(recs);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
    EXPECT_EQ(csv.find('\r'), std::string::npos);
    const auto back = parse_table(csv);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].n, 3u);
    EXPECT_EQ(back[0].t, recs[0].t);
    EXPECT_EQ(back[0].norm_i, recs[0].norm_i);
    EXPECT_EQ(back[0].norm_a, recs[0].norm_a);
    EXPECT_EQ(back[0].norm_cert, recs[0].norm_cert);
    EXPECT_TRUE(std::isnan(back[0].err_i));
    EXPECT_EQ(back[0].err_a, recs[0].err_a);
    EXPECT_EQ(format_real(0.1), "0.1");
}

TEST(Table, RandomRoundTrip) {
    std::mt19937_64 gen(1);
    std::vector<RunRecord> recs;
    for (std::size_t n = 0; n < 200; ++n) {
        const auto r = [&] { return std::ldexp(static_cast<double>(gen() >> 11), -53 + static_cast<int>(gen() % 80) - 40); };
        recs.push_back({n, r(), r(), r(), r(), r(), r(), r()});
    }
    const auto back = parse_table(emit_table(recs));
    ASSERT_EQ(back.size(), recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        EXPECT_EQ(back[i].t, recs[i].t);
        EXPECT_EQ(back[i].norm_a, recs[i].norm_a);
        EXPECT_EQ(back[i].err_a, recs[i].err_a);
        EXPECT_EQ(back[i].step_seconds, recs[i].step_seconds);
    }
}

TEST(RandomGridFunction, DocumentedAlgorithm) {
    const auto x = random_grid_function(5, 42);
    std::mt19937_64 gen(42);
    for (std::size_t i = 0; i < 5; ++i) {
        const double want = 2.0 * std::ldexp(static_cast<double>(gen() >> 11), -53) - 1.0;
        EXPECT_EQ(x[i], want);
        EXPECT_GE(x[i], -1.0);
        EXPECT_LT(x[i], 1.0);
    }
}

TEST(Run, MinimalWritesElevenRows) {
    const auto dir = scratch("minimal");
    EXPECT_EQ(run_experiment(parse_experiment_config(kMinimal), quiet_in(dir)), kExitOk);
    const auto rows = parse_table(slurp(dir / "run.csv"));
    ASSERT_EQ(rows.size(), 11u);
    EXPECT_EQ(rows.back().n, 10u);
    EXPECT_EQ(rows.back().step_seconds, 0.0);
    const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
    EXPECT_EQ(summary["status"], "ok");
    EXPECT_EQ(summary["steps"], 10);
    EXPECT_TRUE(summary["apriori_holds"].get<bool>());
    EXPECT_TRUE(summary["certified_norm_monotone"].get<bool>());
    // Eigenmode oracle: Crank-Nicolson factor per step against exp(-lambda t).
    const Grid2D g = Grid2D::unit_square(17);
    const double lambda = eigenmode_eigenvalue(g, 1, 1);
    const double r = (1 - 0.01 * lambda) / (1 + 0.01 * lambda);
    const double err = std::abs(std::pow(r, 10) - std::exp(-0.2 * lambda)) *
                       weighted_norm(eigenmode_shape(g, 1, 1), NormKind::A, testing::model_operator(g));
    EXPECT_NEAR(summary["terminal"]["err_A"].get<double>(), err, 1e-9 * err);
}

TEST(Run, DeterministicBytes) {
    auto text = with(kMinimal, "/initial", nlohmann::json{{"type", "RANDOM"}, {"seed", 7}});
    text = with(text, "/scheme/kind", "ADDITIVE_AVERAGED");
    text = with(text, "/decomposition", nlohmann::json{{"kind", "CHI_A"}, {"parts", 3}, {"overlap", 2}, {"profile", "LINEAR"}});
    text = with(text, "/reference/type", "EXPM");
    const auto cfg = parse_experiment_config(text);
    const auto d1 = scratch("det1");
    const auto d2 = scratch("det2");
    ASSERT_EQ(run_experiment(cfg, quiet_in(d1)), kExitOk);
    ASSERT_EQ(run_experiment(cfg, quiet_in(d2)), kExitOk);
    EXPECT_EQ(slurp(d1 / "run.csv"), slurp(d2 / "run.csv"));
    EXPECT_EQ(slurp(d1 / "summary.json"), slurp(d2 / "summary.json"));
    // A seed override changes the data.
    auto opts = quiet_in(scratch("det3"));
    opts.seed = 8;
    ASSERT_EQ(run_experiment(cfg, opts), kExitOk);
    EXPECT_NE(slurp(d1 / "run.csv"), slurp(opts.out_dir / "run.csv"));
}

TEST(Run, DivergenceExitsThreeWithPartialCsv) {
    auto text = with(kMinimal, "/scheme/sigma", 0.0);
    text = with(text, "/scheme/steps", 400);
    text = with(text, "/initial", nlohmann::json{{"type", "RANDOM"}, {"seed", 1}});
    text = with(text, "/reference/type", "NONE");
    const auto dir = scratch("diverge");
    EXPECT_EQ(run_experiment(parse_experiment_config(text), quiet_in(dir)), kExitDivergence);
    const auto rows = parse_table(slurp(dir / "run.csv"));
    EXPECT_GT(rows.size(), 1u);
    EXPECT_LT(rows.size(), 401u);
    EXPECT_EQ(nlohmann::json::parse(slurp(dir / "summary.json"))["status"], "diverged");
}

TEST(Run, SolverFailureExitsFour) {
    auto text = with(kMinimal, "/scheme/solver_max_iter", 1);
    text = with(text, "/initial", nlohmann::json{{"type", "RANDOM"}, {"seed", 1}});
    text = with(text, "/reference/type", "NONE");
    EXPECT_EQ(run_experiment(parse_experiment_config(text), quiet_in(scratch("solver"))), kExitSolver);
}

TEST(Orders, SlopeMatchesEstimateOrder) {
    auto text = with(kMinimal, "/scheme/steps", 5);
    const auto cfg = parse_experiment_config(text);
    const auto dir = scratch("orders");
    ASSERT_EQ(run_orders(cfg, quiet_in(dir)), kExitOk);
    const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
    const double reported = summary["order"]["slope"].get<double>();

    const Grid2D g = Grid2D::unit_square(17);
    const auto a = testing::model_operator(g);
    OrderProblem p;
    p.final_time = 0.1;
    p.initial = eigenmode_shape(g, 1, 1);
    p.reference = eigenmode_reference(g, 1, 1, 0.1);
    p.error_norm = [a](const GridFunction& e) { return weighted_norm(e, NormKind::A, a); };
    const LevelRunner run = [&](double tau, std::size_t steps) {
        GridFunction y = p.initial;
        for (std::size_t n = 0; n < steps; ++n) y = weighted_step(a, y, StepConfig{0.5, tau, {1e-13, 20000}});
        return y;
    };
    const auto est = estimate_order(run, 0.02, 4, p);
    EXPECT_NEAR(reported, est.slope, 1e-6);
    EXPECT_GE(reported, 1.9);
}

TEST(Suite, RunsDirectoryAndReportsWorstExit) {
    const auto in = scratch("suite_in");
    const auto out = scratch("suite_out");
    std::ofstream(in / "a.json") << kMinimal;
    std::ofstream(in / "b.json") << with(kMinimal, "/scheme/bogus", 1);
    EXPECT_EQ(run_suite(in, quiet_in(out), 2), kExitConfig);
    EXPECT_TRUE(fs::exists(out / "a" / "run.csv"));
    fs::remove(in / "b.json");
    EXPECT_EQ(run_suite(in, quiet_in(out), 2), kExitOk);
}

TEST(Build, EveryKindAssembles) {
    for (int k = 0; k <= static_cast<int>(SchemeKind::SystemColumnSplit); ++k) {
        const auto kind = static_cast<SchemeKind>(k);
        auto text = with(kMinimal, "/scheme/kind", std::string(scheme_name(kind)));
        text = with(text, "/grid", nlohmann::json{{"N1", 6}, {"N2", 5}});
        text = with(text, "/reference/type", "EXPM");
        if (kind == SchemeKind::Factorized) {
            text = with(text, "/decomposition", nlohmann::json{{"kind", "DIRECTIONAL"}, {"parts", 2}});
        } else if (kind != SchemeKind::Weighted && kind != SchemeKind::SystemRowSplit &&
                   kind != SchemeKind::SystemColumnSplit) {
            text = with(text, "/decomposition", nlohmann::json{{"kind", "R_A"}, {"parts", 2}, {"overlap", 1}, {"profile", "LINEAR"}});
        }
        if (kind == SchemeKind::Regularized || kind == SchemeKind::VectorAdditive || kind == SchemeKind::Subdomain418 ||
            kind == SchemeKind::ComponentSpace57) {
            text = with(text, "/scheme/sigma", 1.0);
        }
        const auto dir = scratch("kind" + std::to_string(k));
        EXPECT_EQ(run_experiment(parse_experiment_config(text), quiet_in(dir)), kExitOk) << scheme_name(kind);
        EXPECT_EQ(parse_table(slurp(dir / "run.csv")).size(), 11u) << scheme_name(kind);
    }
}

TEST(Threads, EnvironmentCap) {
    setenv("SPLITKIT_THREADS", "3", 1);
    EXPECT_EQ(batch_threads_from_env(), 3u);
    setenv("SPLITKIT_THREADS", "zero", 1);
    EXPECT_GE(batch_threads_from_env(), 1u);
    unsetenv("SPLITKIT_THREADS");
}

}  // namespace
}  // namespace splitkit
