#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splitkit/analysis.hpp"
#include "splitkit/decomposition.hpp"
#include "splitkit/integrator.hpp"
#include "splitkit/schemes.hpp"

namespace splitkit {

/// Invalid experiment configuration. `field` is a JSON pointer such as
/// /scheme/sigma; `line` is set for syntax errors.
class ConfigError : public Error {
public:
    ConfigError(const std::string& what, std::string field, std::optional<std::size_t> line = std::nullopt)
        : Error(what), field_(std::move(field)), line_(line) {}
    const std::string& field() const noexcept { return field_; }
    std::optional<std::size_t> line() const noexcept { return line_; }

private:
    std::string field_;
    std::optional<std::size_t> line_;
};

/// Process exit codes of the command line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 2,
    kExitDivergence = 3,
    kExitSolver = 4,
};

struct GridSpec {
    double l1 = 1.0;
    double l2 = 1.0;
    int n1 = 0;
    int n2 = 0;
};

struct CoefficientSpec {
    enum class Type { Constant, Checkerboard, Expression };
    Type type = Type::Constant;
    double value = 1.0;
    double hi = 1.0;
    double lo = 1.0;
    int tiles = 2;
    std::string expr;
    double kappa = 0.0;
};

enum class DecompositionKind { Trivial, Directional, ChiA, AChi, RA, AR, DRD, DRDDirectional };

struct DecompositionSpec {
    DecompositionKind kind = DecompositionKind::Trivial;
    std::size_t parts = 1;
    std::size_t overlap = 0;
    StripProfile profile = StripProfile::Hard;
};

struct SchemeSpec {
    SchemeKind kind = SchemeKind::Weighted;
    double sigma = 0.5;
    double tau = 0.0;
    std::size_t steps = 0;
    SweepOrdering ordering = SweepOrdering::Forward;
    double solver_tol = 1e-13;
    std::size_t solver_max_iter = 20000;
};

struct InitialSpec {
    enum class Type { Eigenmode, Random, Constant, Zero };
    Type type = Type::Eigenmode;
    int m1 = 1;
    int m2 = 1;
    std::uint64_t seed = 0;
    double value = 0.0;
};

struct ForcingSpec {
    bool zero = true;
    std::string expr;
};

enum class ReferenceKind { None, Eigenmode, Expm };

struct OutputSpec {
    std::string csv = "run.csv";
    std::string summary = "summary.json";
    bool norm_i = true;
    bool norm_a = true;
    bool norm_cert = true;
    bool timing = false;
};

/// Block system used by the SYSTEM_* schemes: A11 = A, A22 = a22_scale A,
/// A12 = A21 = coupling times the x1 part of A.
struct SystemSpec {
    double a22_scale = 2.0;
    double coupling = 0.5;
};

struct ExperimentConfig {
    std::string name = "experiment";
    GridSpec grid;
    CoefficientSpec coefficient;
    DecompositionSpec decomposition;
    SchemeSpec scheme;
    InitialSpec initial;
    std::optional<InitialSpec> initial_velocity;
    ForcingSpec forcing;
    ReferenceKind reference = ReferenceKind::None;
    OutputSpec outputs;
    std::size_t order_levels = 4;
    SystemSpec system;
};

/// Strict parse: unknown keys, wrong types and out-of-range values throw
/// ConfigError before anything is allocated for the run.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Operators, families and reference assembled from a validated config.
struct Experiment {
    ExperimentConfig config;
    SchemeSetup setup;
    ReferenceFn reference;
    double final_time = 0.0;
};

Experiment build_experiment(const ExperimentConfig& config);

struct RunOptions {
    std::filesystem::path out_dir = ".";
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

/// Header n,t,norm_I,norm_A,norm_cert,err_I,err_A,step_seconds; shortest
/// round-trip decimals; LF line endings.
std::string emit_table(std::span<const RunRecord> records);
std::vector<RunRecord> parse_table(const std::string& csv);

/// Shortest decimal that parses back to the same double.
std::string format_real(double value);

/// Uniform values in [-1, 1] from mt19937_64: 2 (bits >> 11) 2^-53 - 1.
GridFunction random_grid_function(std::size_t size, std::uint64_t seed);

int run_experiment(const ExperimentConfig& config, const RunOptions& options);
/// Runs the tau-halving ladder starting at scheme.tau over steps * tau.
int run_orders(const ExperimentConfig& config, const RunOptions& options);
/// Every *.json in `dir` (sorted by name), each into out_dir/<stem>; at most
/// `threads` at once. Returns the largest exit code.
int run_suite(const std::filesystem::path& dir, const RunOptions& options, std::size_t threads);

/// SPLITKIT_THREADS if set to a positive integer, otherwise the hardware count.
std::size_t batch_threads_from_env();

}  // namespace splitkit
