#include "splitkit/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "splitkit/expression.hpp"
#include "splitkit/model.hpp"

namespace splitkit {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string join(const std::string& path, const std::string& key) { return path + "/" + key; }

[[noreturn]] void bad(const std::string& field, const std::string& what) {
    throw ConfigError(field + ": " + what, field);
}

void check_object(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) bad(path.empty() ? "/" : path, "expected an object");
    const std::set<std::string> keys(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items()) {
        if (!keys.contains(key)) bad(join(path, key), "unknown key");
    }
}

const json* find(const json& j, const char* key) {
    const auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

const json& require(const json& j, const std::string& path, const char* key) {
    const json* v = find(j, key);
    if (v == nullptr) bad(join(path, key), "missing required key");
    return *v;
}

double as_real(const json& v, const std::string& field) {
    if (!v.is_number()) bad(field, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) bad(field, "expected a finite number");
    return x;
}

std::int64_t as_int(const json& v, const std::string& field) {
    if (v.is_number_unsigned()) {
        const auto u = v.get<std::uint64_t>();
        if (u > static_cast<std::uint64_t>(INT64_MAX)) bad(field, "integer out of range");
        return static_cast<std::int64_t>(u);
    }
    if (!v.is_number_integer()) bad(field, "expected an integer");
    return v.get<std::int64_t>();
}

std::uint64_t as_u64(const json& v, const std::string& field) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    bad(field, "expected a non-negative integer");
}

std::string as_string(const json& v, const std::string& field) {
    if (!v.is_string()) bad(field, "expected a string");
    return v.get<std::string>();
}

bool as_bool(const json& v, const std::string& field) {
    if (!v.is_boolean()) bad(field, "expected true or false");
    return v.get<bool>();
}

double real_or(const json& j, const std::string& path, const char* key, double fallback) {
    const json* v = find(j, key);
    return v == nullptr ? fallback : as_real(*v, join(path, key));
}

std::int64_t int_or(const json& j, const std::string& path, const char* key, std::int64_t fallback) {
    const json* v = find(j, key);
    return v == nullptr ? fallback : as_int(*v, join(path, key));
}

template <class Enum, std::size_t N>
Enum choice(const json& v, const std::string& field, const std::pair<const char*, Enum> (&options)[N]) {
    const std::string s = as_string(v, field);
    for (const auto& [name, value] : options) {
        if (s == name) return value;
    }
    std::string list;
    for (const auto& [name, value] : options) list += (list.empty() ? "" : ", ") + std::string(name);
    bad(field, "'" + s + "' is not one of " + list);
}

GridSpec parse_grid(const json& j, const std::string& path) {
    check_object(j, path, {"l1", "l2", "N1", "N2"});
    GridSpec g;
    g.l1 = real_or(j, path, "l1", 1.0);
    g.l2 = real_or(j, path, "l2", 1.0);
    const auto n1 = as_int(require(j, path, "N1"), join(path, "N1"));
    const auto n2 = as_int(require(j, path, "N2"), join(path, "N2"));
    if (!(g.l1 > 0.0)) bad(join(path, "l1"), "must be positive");
    if (!(g.l2 > 0.0)) bad(join(path, "l2"), "must be positive");
    if (n1 < 2 || n1 > 4096) bad(join(path, "N1"), "must be in [2, 4096]");
    if (n2 < 2 || n2 > 4096) bad(join(path, "N2"), "must be in [2, 4096]");
    g.n1 = static_cast<int>(n1);
    g.n2 = static_cast<int>(n2);
    return g;
}

CoefficientSpec parse_coefficient(const json& j, const std::string& path) {
    check_object(j, path, {"type", "value", "hi", "lo", "tiles", "expr", "kappa"});
    static constexpr std::pair<const char*, CoefficientSpec::Type> kinds[] = {
        {"CONSTANT", CoefficientSpec::Type::Constant},
        {"CHECKERBOARD", CoefficientSpec::Type::Checkerboard},
        {"EXPRESSION", CoefficientSpec::Type::Expression},
    };
    CoefficientSpec c;
    c.type = choice(require(j, path, "type"), join(path, "type"), kinds);
    const auto allow_only = [&](std::initializer_list<const char*> keys) {
        const std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& [key, value] : j.items()) {
            if (key != "type" && !ok.contains(key)) bad(join(path, key), "not used by this coefficient type");
        }
    };
    switch (c.type) {
        case CoefficientSpec::Type::Constant:
            allow_only({"value"});
            c.value = real_or(j, path, "value", 1.0);
            if (!(c.value > 0.0)) bad(join(path, "value"), "must be positive");
            c.kappa = c.value;
            break;
        case CoefficientSpec::Type::Checkerboard:
            allow_only({"hi", "lo", "tiles"});
            c.hi = as_real(require(j, path, "hi"), join(path, "hi"));
            c.lo = as_real(require(j, path, "lo"), join(path, "lo"));
            if (!(c.hi > 0.0)) bad(join(path, "hi"), "must be positive");
            if (!(c.lo > 0.0)) bad(join(path, "lo"), "must be positive");
            {
                const auto tiles = int_or(j, path, "tiles", 2);
                if (tiles < 1 || tiles > 1024) bad(join(path, "tiles"), "must be in [1, 1024]");
                c.tiles = static_cast<int>(tiles);
            }
            c.kappa = std::min(c.hi, c.lo);
            break;
        case CoefficientSpec::Type::Expression:
            allow_only({"expr", "kappa"});
            c.expr = as_string(require(j, path, "expr"), join(path, "expr"));
            c.kappa = as_real(require(j, path, "kappa"), join(path, "kappa"));
            if (!(c.kappa > 0.0)) bad(join(path, "kappa"), "must be positive");
            try {
                const Expression e = Expression::parse(c.expr);
                if (e.depends_on_time()) bad(join(path, "expr"), "coefficient must not depend on t");
            } catch (const ExpressionError& err) {
                bad(join(path, "expr"), err.what());
            }
            break;
    }
    return c;
}

DecompositionSpec parse_decomposition(const json& j, const std::string& path) {
    check_object(j, path, {"kind", "parts", "overlap", "profile"});
    static constexpr std::pair<const char*, DecompositionKind> kinds[] = {
        {"TRIVIAL", DecompositionKind::Trivial}, {"DIRECTIONAL", DecompositionKind::Directional},
        {"CHI_A", DecompositionKind::ChiA},      {"A_CHI", DecompositionKind::AChi},
        {"R_A", DecompositionKind::RA},          {"A_R", DecompositionKind::AR},
        {"DRD", DecompositionKind::DRD},         {"DRD_DIRECTIONAL", DecompositionKind::DRDDirectional},
    };
    static constexpr std::pair<const char*, StripProfile> profiles[] = {
        {"HARD", StripProfile::Hard},
        {"LINEAR", StripProfile::Linear},
    };
    DecompositionSpec d;
    d.kind = choice(require(j, path, "kind"), join(path, "kind"), kinds);
    const bool fixed_parts = d.kind == DecompositionKind::Trivial || d.kind == DecompositionKind::Directional ||
                             d.kind == DecompositionKind::DRDDirectional;
    const std::int64_t default_parts = d.kind == DecompositionKind::Trivial ? 1 : 2;
    const auto parts = int_or(j, path, "parts", default_parts);
    if (fixed_parts && parts != default_parts) {
        bad(join(path, "parts"), "this decomposition has exactly " + std::to_string(default_parts) + " part(s)");
    }
    if (parts < 1 || parts > 64) bad(join(path, "parts"), "must be in [1, 64]");
    d.parts = static_cast<std::size_t>(parts);
    const auto overlap = int_or(j, path, "overlap", 0);
    if (overlap < 0 || overlap > 1024) bad(join(path, "overlap"), "must be in [0, 1024]");
    d.overlap = static_cast<std::size_t>(overlap);
    if (const json* p = find(j, "profile")) d.profile = choice(*p, join(path, "profile"), profiles);
    return d;
}

SchemeSpec parse_scheme(const json& j, const std::string& path) {
    check_object(j, path, {"kind", "sigma", "tau", "steps", "ordering", "solver_tol", "solver_max_iter"});
    SchemeSpec s;
    const std::string name = as_string(require(j, path, "kind"), join(path, "kind"));
    const auto kind = parse_scheme_kind(name);
    if (!kind) bad(join(path, "kind"), "unknown scheme '" + name + "'");
    s.kind = *kind;
    s.sigma = real_or(j, path, "sigma", 0.5);
    s.tau = as_real(require(j, path, "tau"), join(path, "tau"));
    if (!(s.tau > 0.0)) bad(join(path, "tau"), "must be positive");
    const auto steps = as_int(require(j, path, "steps"), join(path, "steps"));
    if (steps < 0 || steps > 10000000) bad(join(path, "steps"), "must be in [0, 1e7]");
    s.steps = static_cast<std::size_t>(steps);
    static constexpr std::pair<const char*, SweepOrdering> orderings[] = {
        {"FORWARD", SweepOrdering::Forward},
        {"STRANG", SweepOrdering::Strang},
    };
    if (const json* o = find(j, "ordering")) s.ordering = choice(*o, join(path, "ordering"), orderings);
    s.solver_tol = real_or(j, path, "solver_tol", 1e-13);
    if (!(s.solver_tol > 0.0) || s.solver_tol >= 1.0) bad(join(path, "solver_tol"), "must be in (0, 1)");
    const auto iters = int_or(j, path, "solver_max_iter", 20000);
    if (iters < 1 || iters > 100000000) bad(join(path, "solver_max_iter"), "must be in [1, 1e8]");
    s.solver_max_iter = static_cast<std::size_t>(iters);
    return s;
}

InitialSpec parse_initial(const json& j, const std::string& path) {
    check_object(j, path, {"type", "m1", "m2", "seed", "generator", "value"});
    static constexpr std::pair<const char*, InitialSpec::Type> kinds[] = {
        {"EIGENMODE", InitialSpec::Type::Eigenmode},
        {"RANDOM", InitialSpec::Type::Random},
        {"CONSTANT", InitialSpec::Type::Constant},
        {"ZERO", InitialSpec::Type::Zero},
    };
    InitialSpec s;
    s.type = choice(require(j, path, "type"), join(path, "type"), kinds);
    const auto allow_only = [&](std::initializer_list<const char*> keys) {
        const std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& [key, value] : j.items()) {
            if (key != "type" && !ok.contains(key)) bad(join(path, key), "not used by this initial data type");
        }
    };
    switch (s.type) {
        case InitialSpec::Type::Eigenmode:
            allow_only({"m1", "m2"});
            s.m1 = static_cast<int>(std::clamp<std::int64_t>(int_or(j, path, "m1", 1), -1, 1 << 20));
            s.m2 = static_cast<int>(std::clamp<std::int64_t>(int_or(j, path, "m2", 1), -1, 1 << 20));
            if (s.m1 < 1) bad(join(path, "m1"), "must be at least 1");
            if (s.m2 < 1) bad(join(path, "m2"), "must be at least 1");
            break;
        case InitialSpec::Type::Random:
            allow_only({"seed", "generator"});
            s.seed = as_u64(require(j, path, "seed"), join(path, "seed"));
            if (const json* g = find(j, "generator")) {
                if (as_string(*g, join(path, "generator")) != "mt19937_64") {
                    bad(join(path, "generator"), "only mt19937_64 is available");
                }
            }
            break;
        case InitialSpec::Type::Constant:
            allow_only({"value"});
            s.value = as_real(require(j, path, "value"), join(path, "value"));
            break;
        case InitialSpec::Type::Zero:
            allow_only({});
            break;
    }
    return s;
}

ForcingSpec parse_forcing(const json& j, const std::string& path) {
    check_object(j, path, {"type", "expr"});
    const std::string type = as_string(require(j, path, "type"), join(path, "type"));
    ForcingSpec f;
    if (type == "ZERO") {
        if (find(j, "expr") != nullptr) bad(join(path, "expr"), "not used by ZERO forcing");
        return f;
    }
    if (type != "EXPRESSION") bad(join(path, "type"), "'" + type + "' is not one of ZERO, EXPRESSION");
    f.zero = false;
    f.expr = as_string(require(j, path, "expr"), join(path, "expr"));
    try {
        (void)Expression::parse(f.expr);
    } catch (const ExpressionError& err) {
        bad(join(path, "expr"), err.what());
    }
    return f;
}

OutputSpec parse_outputs(const json& j, const std::string& path) {
    check_object(j, path, {"csv", "summary", "norms", "timing"});
    OutputSpec o;
    if (const json* v = find(j, "csv")) o.csv = as_string(*v, join(path, "csv"));
    if (const json* v = find(j, "summary")) o.summary = as_string(*v, join(path, "summary"));
    for (const auto* name : {&o.csv, &o.summary}) {
        const std::filesystem::path p(*name);
        if (name->empty() || p.is_absolute() || p.has_parent_path()) {
            bad(join(path, name == &o.csv ? "csv" : "summary"), "must be a plain file name");
        }
    }
    if (o.csv == o.summary) bad(join(path, "summary"), "must differ from the CSV file name");
    if (const json* v = find(j, "norms")) {
        if (!v->is_array()) bad(join(path, "norms"), "expected an array of I, A, CERT");
        o.norm_i = o.norm_a = o.norm_cert = false;
        for (std::size_t k = 0; k < v->size(); ++k) {
            const std::string field = join(path, "norms") + "/" + std::to_string(k);
            const std::string n = as_string((*v)[k], field);
            if (n == "I") {
                o.norm_i = true;
            } else if (n == "A") {
                o.norm_a = true;
            } else if (n == "CERT") {
                o.norm_cert = true;
            } else {
                bad(field, "'" + n + "' is not one of I, A, CERT");
            }
        }
    }
    if (const json* v = find(j, "timing")) o.timing = as_bool(*v, join(path, "timing"));
    return o;
}

std::size_t line_of(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

bool needs_partition(SchemeKind kind) {
    switch (kind) {
        case SchemeKind::Subdomain418:
        case SchemeKind::Subdomain422:
        case SchemeKind::ComponentSpace57:
        case SchemeKind::ComponentSpace3Level:
            return true;
        default:
            return false;
    }
}

void cross_validate(const ExperimentConfig& c) {
    const SchemeKind kind = c.scheme.kind;
    const bool system = kind == SchemeKind::SystemRowSplit || kind == SchemeKind::SystemColumnSplit;
    if (needs_partition(kind) && (c.decomposition.kind == DecompositionKind::Directional ||
                                  c.decomposition.kind == DecompositionKind::DRDDirectional)) {
        bad("/decomposition/kind", std::string(scheme_name(kind)) + " needs a nodal partition");
    }
    if (kind == SchemeKind::Factorized && c.decomposition.parts != 2) {
        bad("/decomposition/parts", "FACTORIZED needs a two-part decomposition");
    }
    if ((needs_partition(kind) || system) && !c.forcing.zero) {
        bad("/forcing", std::string(scheme_name(kind)) + " is implemented for f = 0 only");
    }
    if (c.reference != ReferenceKind::None && !c.forcing.zero) {
        bad("/reference", "references are available for f = 0 only");
    }
    if (c.initial_velocity && kind != SchemeKind::SecondOrderRegularized) {
        bad("/initial_velocity", "only used by SECOND_ORDER_REGULARIZED");
    }
    if (c.reference == ReferenceKind::Eigenmode) {
        if (c.initial.type != InitialSpec::Type::Eigenmode) bad("/reference", "EIGENMODE needs eigenmode initial data");
        if (c.coefficient.type != CoefficientSpec::Type::Constant) {
            bad("/reference", "EIGENMODE needs a constant coefficient");
        }
        if (system) bad("/reference", "EIGENMODE is not available for systems; use EXPM");
        if (c.initial_velocity && c.initial_velocity->type != InitialSpec::Type::Zero) {
            bad("/reference", "EIGENMODE needs zero initial velocity");
        }
    }
    if (c.initial.type == InitialSpec::Type::Eigenmode) {
        if (c.initial.m1 >= c.grid.n1) bad("/initial/m1", "mode number must be below N1");
        if (c.initial.m2 >= c.grid.n2) bad("/initial/m2", "mode number must be below N2");
    }
    const std::size_t nodes = static_cast<std::size_t>(c.grid.n1 - 1) * static_cast<std::size_t>(c.grid.n2 - 1);
    const std::size_t dense = system ? 2 * nodes : nodes;
    if (c.reference == ReferenceKind::Expm && dense > kDenseReferenceLimit) {
        bad("/reference", "EXPM is limited to " + std::to_string(kDenseReferenceLimit) + " unknowns");
    }
    const auto& d = c.decomposition;
    if (d.kind != DecompositionKind::Trivial && d.kind != DecompositionKind::Directional &&
        d.kind != DecompositionKind::DRDDirectional) {
        const std::size_t width = static_cast<std::size_t>(c.grid.n1 - 1) / d.parts;
        if (width < std::max<std::size_t>(d.overlap, 1)) {
            bad("/decomposition", "strips narrower than max(overlap, 1) columns");
        }
    }
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& err) {
        const std::size_t line = line_of(json_text, err.byte == 0 ? 0 : err.byte - 1);
        throw ConfigError("line " + std::to_string(line) + ": " + err.what(), "/", line);
    }
    check_object(root, "", {"name", "grid", "coefficient", "decomposition", "scheme", "initial", "initial_velocity",
                            "forcing", "reference", "outputs", "orders", "system"});
    ExperimentConfig c;
    if (const json* v = find(root, "name")) c.name = as_string(*v, "/name");
    c.grid = parse_grid(require(root, "", "grid"), "/grid");
    if (const json* v = find(root, "coefficient")) c.coefficient = parse_coefficient(*v, "/coefficient");
    if (const json* v = find(root, "decomposition")) c.decomposition = parse_decomposition(*v, "/decomposition");
    c.scheme = parse_scheme(require(root, "", "scheme"), "/scheme");
    if (const json* v = find(root, "initial")) c.initial = parse_initial(*v, "/initial");
    if (const json* v = find(root, "initial_velocity")) c.initial_velocity = parse_initial(*v, "/initial_velocity");
    if (const json* v = find(root, "forcing")) c.forcing = parse_forcing(*v, "/forcing");
    if (const json* v = find(root, "reference")) {
        check_object(*v, "/reference", {"type"});
        static constexpr std::pair<const char*, ReferenceKind> kinds[] = {
            {"NONE", ReferenceKind::None},
            {"EIGENMODE", ReferenceKind::Eigenmode},
            {"EXPM", ReferenceKind::Expm},
        };
        c.reference = choice(require(*v, "/reference", "type"), "/reference/type", kinds);
    }
    if (const json* v = find(root, "outputs")) c.outputs = parse_outputs(*v, "/outputs");
    if (const json* v = find(root, "orders")) {
        check_object(*v, "/orders", {"levels"});
        const auto levels = int_or(*v, "/orders", "levels", 4);
        if (levels < 3 || levels > 12) bad("/orders/levels", "must be in [3, 12]");
        c.order_levels = static_cast<std::size_t>(levels);
    }
    if (const json* v = find(root, "system")) {
        check_object(*v, "/system", {"a22_scale", "coupling"});
        c.system.a22_scale = real_or(*v, "/system", "a22_scale", 2.0);
        c.system.coupling = real_or(*v, "/system", "coupling", 0.5);
        if (!(c.system.a22_scale > 0.0)) bad("/system/a22_scale", "must be positive");
    }
    cross_validate(c);
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string(), "/");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_experiment_config(text.str());
}

GridFunction random_grid_function(std::size_t size, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    GridFunction out(size);
    for (std::size_t i = 0; i < size; ++i) {
        const double unit = static_cast<double>(gen() >> 11) * 0x1.0p-53;
        out[i] = 2.0 * unit - 1.0;
    }
    return out;
}

namespace {

Coefficient make_coefficient(const CoefficientSpec& c, const GridSpec& g) {
    switch (c.type) {
        case CoefficientSpec::Type::Constant:
            return Coefficient::constant(c.value);
        case CoefficientSpec::Type::Checkerboard: {
            const double hi = c.hi;
            const double lo = c.lo;
            const double tiles = c.tiles;
            const double l1 = g.l1;
            const double l2 = g.l2;
            return {[=](double x1, double x2) {
                        const auto a = static_cast<long>(std::floor(tiles * x1 / l1));
                        const auto b = static_cast<long>(std::floor(tiles * x2 / l2));
                        return (a + b) % 2 == 0 ? hi : lo;
                    },
                    c.kappa};
        }
        case CoefficientSpec::Type::Expression: {
            const Expression e = Expression::parse(c.expr);
            return {[e](double x1, double x2) { return e(x1, x2); }, c.kappa};
        }
    }
    return Coefficient::constant(1.0);
}

GridFunction make_initial(const InitialSpec& s, const Grid2D& grid) {
    switch (s.type) {
        case InitialSpec::Type::Eigenmode:
            return eigenmode_shape(grid, s.m1, s.m2);
        case InitialSpec::Type::Random:
            return random_grid_function(grid.node_count(), s.seed);
        case InitialSpec::Type::Constant:
            return GridFunction(grid.node_count(), s.value);
        case InitialSpec::Type::Zero:
            return GridFunction(grid.node_count());
    }
    return GridFunction(grid.node_count());
}

}  // namespace

Experiment build_experiment(const ExperimentConfig& config) {
    Experiment ex;
    ex.config = config;
    const GridSpec& gs = config.grid;
    const Grid2D grid(gs.l1, gs.l2, gs.n1, gs.n2);
    const Coefficient coef = make_coefficient(config.coefficient, gs);
    const SparseOperator a = assemble_diffusion_operator(grid, coef);
    const SchemeKind kind = config.scheme.kind;
    const bool system = kind == SchemeKind::SystemRowSplit || kind == SchemeKind::SystemColumnSplit;

    SchemeSetup& setup = ex.setup;
    setup.config.kind = kind;
    setup.config.sigma = config.scheme.sigma;
    setup.config.tau = config.scheme.tau;
    setup.config.steps = config.scheme.steps;
    setup.config.solver = CgOptions{config.scheme.solver_tol, config.scheme.solver_max_iter};
    setup.ordering = config.scheme.ordering;
    setup.op = a;
    ex.final_time = static_cast<double>(config.scheme.steps) * config.scheme.tau;

    const auto& d = config.decomposition;
    std::optional<PartitionOfUnity> pou;
    switch (d.kind) {
        case DecompositionKind::Trivial:
            break;
        case DecompositionKind::Directional:
            setup.family = split_directional(grid, coef);
            break;
        case DecompositionKind::DRDDirectional: {
            const FactorizedForm form = factorize_diffusion_operator(grid, coef);
            setup.family = decompose_DRD(form, direction_restrictions(form));
            break;
        }
        default: {
            pou = build_strip_partition(grid, d.parts, d.overlap, d.profile);
            if (d.kind == DecompositionKind::ChiA) setup.family = decompose_chiA(a, *pou, Side::Left);
            if (d.kind == DecompositionKind::AChi) setup.family = decompose_chiA(a, *pou, Side::Right);
            if (d.kind == DecompositionKind::RA) {
                setup.family = decompose_restricted(a, RestrictionFamily::from_partition(*pou), Side::Left);
            }
            if (d.kind == DecompositionKind::AR) {
                setup.family = decompose_restricted(a, RestrictionFamily::from_partition(*pou), Side::Right);
            }
            if (d.kind == DecompositionKind::DRD) {
                const FactorizedForm form = factorize_diffusion_operator(grid, coef);
                setup.family = decompose_DRD(form, replicate_partition(form, *pou));
            }
            setup.forcing_partition = pou;
            setup.restrictions = RestrictionFamily::from_partition(*pou);
            setup.spaces = SpaceRestrictionFamily(*pou);
            break;
        }
    }

    const GridFunction u0 = make_initial(config.initial, grid);
    if (config.initial_velocity) setup.initial_velocity = make_initial(*config.initial_velocity, grid);

    if (!config.forcing.zero) {
        const Expression f = Expression::parse(config.forcing.expr);
        setup.forcing = [f, grid](double t) {
            return sample(grid, [&](double x1, double x2) { return f(x1, x2, t); });
        };
    }

    if (system) {
        SystemOperator sys;
        sys.a11 = a;
        sys.a22 = a.shifted(0.0, config.system.a22_scale);
        const SparseOperator coupling =
            assemble_directional_operator(grid, coef, Axis::X1).shifted(0.0, config.system.coupling);
        sys.a12 = coupling;
        sys.a21 = coupling;
        setup.system = sys;
        setup.initial = SystemState{u0, u0}.stacked();
    } else {
        setup.initial = u0;
    }

    if (config.reference == ReferenceKind::Eigenmode) {
        const double lambda = config.coefficient.value * eigenmode_eigenvalue(grid, config.initial.m1, config.initial.m2);
        const GridFunction shape = u0;
        if (kind == SchemeKind::SecondOrderRegularized) {
            ex.reference = [shape, lambda](double t) { return std::cos(std::sqrt(lambda) * t) * shape; };
        } else {
            ex.reference = [shape, lambda](double t) { return std::exp(-lambda * t) * shape; };
        }
    } else if (config.reference == ReferenceKind::Expm) {
        const auto ref = std::make_shared<ExpmReference>(system ? setup.system->assembled() : a);
        const GridFunction start = setup.initial;
        if (kind == SchemeKind::SecondOrderRegularized) {
            const GridFunction v0 = setup.initial_velocity.empty() ? GridFunction(start.size()) : setup.initial_velocity;
            ex.reference = [ref, start, v0](double t) { return ref->oscillate(start, v0, t); };
        } else {
            ex.reference = [ref, start](double t) { return ref->evolve(start, t); };
        }
    }
    return ex;
}

std::string format_real(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    (void)ec;
    return std::string(buf, ptr);
}

std::string emit_table(std::span<const RunRecord> records) {
    std::string out = "n,t,norm_I,norm_A,norm_cert,err_I,err_A,step_seconds\n";
    for (const auto& r : records) {
        out += std::to_string(r.n);
        for (const double v : {r.t, r.norm_i, r.norm_a, r.norm_cert, r.err_i, r.err_a, r.step_seconds}) {
            out += ',';
            out += format_real(v);
        }
        out += '\n';
    }
    return out;
}

std::vector<RunRecord> parse_table(const std::string& csv) {
    std::vector<RunRecord> out;
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line != "n,t,norm_I,norm_A,norm_cert,err_I,err_A,step_seconds") {
        throw DomainError("parse_table: unexpected header");
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (;;) {
            const std::size_t comma = line.find(',', start);
            cells.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (cells.size() != 8) throw DomainError("parse_table: expected 8 columns");
        const auto real = [](const std::string& s) {
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || ptr != s.data() + s.size()) throw DomainError("parse_table: bad number '" + s + "'");
            return v;
        };
        RunRecord r;
        r.n = static_cast<std::size_t>(std::stoull(cells[0]));
        r.t = real(cells[1]);
        r.norm_i = real(cells[2]);
        r.norm_a = real(cells[3]);
        r.norm_cert = real(cells[4]);
        r.err_i = real(cells[5]);
        r.err_a = real(cells[6]);
        r.step_seconds = real(cells[7]);
        out.push_back(r);
    }
    return out;
}

namespace {

ordered_json real_json(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << bytes;
}

ExperimentConfig with_seed(ExperimentConfig c, const RunOptions& options) {
    if (options.seed) {
        if (c.initial.type == InitialSpec::Type::Random) c.initial.seed = *options.seed;
        if (c.initial_velocity && c.initial_velocity->type == InitialSpec::Type::Random) {
            c.initial_velocity->seed = *options.seed;
        }
    }
    return c;
}

ordered_json summary_head(const ExperimentConfig& c, const Integrator& integ) {
    ordered_json s;
    s["name"] = c.name;
    s["scheme"] = std::string(scheme_name(c.scheme.kind));
    s["sigma"] = c.scheme.sigma;
    s["tau"] = c.scheme.tau;
    s["steps"] = c.scheme.steps;
    s["parts"] = integ.parts();
    const auto threshold = stability_threshold(c.scheme.kind, integ.parts());
    s["stability_threshold"] = threshold ? ordered_json(*threshold) : ordered_json(nullptr);
    if (c.initial.type == InitialSpec::Type::Random) {
        s["initial_generator"] = "mt19937_64";
        s["initial_seed"] = c.initial.seed;
    }
    return s;
}

void say(const RunOptions& options, const std::string& line) {
    if (!options.quiet) std::cout << line << '\n';
}

int classify(const std::exception_ptr& error, std::string& status, std::string& message) {
    try {
        std::rethrow_exception(error);
    } catch (const DivergenceError& e) {
        status = "diverged";
        message = e.what();
        return kExitDivergence;
    } catch (const SolverError& e) {
        status = "solver_failure";
        message = e.what();
        return kExitSolver;
    }
}

}  // namespace

int run_experiment(const ExperimentConfig& raw, const RunOptions& options) {
    const ExperimentConfig config = with_seed(raw, options);
    std::optional<Experiment> ex;
    std::optional<Integrator> integ;
    try {
        ex = build_experiment(config);
        integ.emplace(ex->setup);
    } catch (const SolverError& e) {
        std::cerr << config.name << ": " << e.what() << '\n';
        return kExitSolver;
    } catch (const Error& e) {
        std::cerr << config.name << ": configuration rejected: " << e.what() << '\n';
        return kExitConfig;
    }
    std::filesystem::create_directories(options.out_dir);

    RecordOptions rec;
    rec.timing = config.outputs.timing;
    rec.norm_i = config.outputs.norm_i;
    rec.norm_a = config.outputs.norm_a;
    rec.norm_cert = config.outputs.norm_cert;

    const bool weighted = config.scheme.kind == SchemeKind::Weighted;
    std::vector<GridFunction> trajectory;
    std::vector<RunRecord> records;
    int code = kExitOk;
    std::string status = "ok";
    std::string message;
    try {
        StepObserver keep;
        if (weighted) keep = [&trajectory](const Integrator& i) { trajectory.push_back(i.solution()); };
        record_run(*integ, config.scheme.steps, ex->reference, rec, records, keep);
    } catch (...) {
        code = classify(std::current_exception(), status, message);
    }

    write_file(options.out_dir / config.outputs.csv, emit_table(records));

    ordered_json s = summary_head(config, *integ);
    s["status"] = status;
    if (!message.empty()) s["message"] = message;
    s["records"] = records.size();
    if (!records.empty()) {
        const RunRecord& last = records.back();
        ordered_json term;
        term["n"] = last.n;
        term["t"] = last.t;
        term["norm_I"] = real_json(last.norm_i);
        term["norm_A"] = real_json(last.norm_a);
        term["norm_cert"] = real_json(last.norm_cert);
        term["err_I"] = real_json(last.err_i);
        term["err_A"] = real_json(last.err_a);
        s["terminal"] = term;
    }
    if (rec.norm_cert && records.size() > 1) {
        double worst = std::numeric_limits<double>::infinity();
        bool monotone = true;
        for (std::size_t k = 1; k < records.size(); ++k) {
            const double margin = records[k - 1].norm_cert - records[k].norm_cert;
            worst = std::min(worst, margin);
            monotone = monotone && margin >= -1e-10 * std::abs(records[k - 1].norm_cert);
        }
        s["stability_margin"] = real_json(worst);
        s["certified_norm_monotone"] = monotone;
    }
    if (weighted && trajectory.size() > 1 && code == kExitOk) {
        std::vector<GridFunction> fh;
        if (ex->setup.forcing) {
            const double sg = config.scheme.sigma;
            for (std::size_t k = 0; k + 1 < trajectory.size(); ++k) {
                const GridFunction f0 = ex->setup.forcing(static_cast<double>(k) * config.scheme.tau);
                const GridFunction f1 = ex->setup.forcing(static_cast<double>(k + 1) * config.scheme.tau);
                fh.push_back(sg * f1 + (1.0 - sg) * f0);
            }
        }
        const AprioriCheck chk = apriori_check_thm1(trajectory, trajectory.front(), fh, config.scheme.tau,
                                                    NormKind::A, ex->setup.op);
        s["apriori_margin"] = real_json(chk.worst_margin);
        s["apriori_holds"] = chk.holds;
    }
    write_file(options.out_dir / config.outputs.summary, s.dump(2) + "\n");
    if (code == kExitOk) {
        say(options, config.name + ": " + std::to_string(records.size() - 1) + " steps, status ok");
    } else {
        std::cerr << config.name << ": " << message << '\n';
    }
    return code;
}

int run_orders(const ExperimentConfig& raw, const RunOptions& options) {
    const ExperimentConfig config = with_seed(raw, options);
    std::optional<Experiment> ex;
    try {
        if (config.reference == ReferenceKind::None) bad("/reference", "the order ladder needs a reference");
        if (config.scheme.steps == 0) bad("/scheme/steps", "the order ladder needs at least one step");
        ex = build_experiment(config);
        Integrator probe(ex->setup);
    } catch (const SolverError& e) {
        std::cerr << config.name << ": " << e.what() << '\n';
        return kExitSolver;
    } catch (const Error& e) {
        std::cerr << config.name << ": configuration rejected: " << e.what() << '\n';
        return kExitConfig;
    }
    std::filesystem::create_directories(options.out_dir);

    const SparseOperator norm_op =
        ex->setup.system ? ex->setup.system->assembled() : ex->setup.op;
    OrderProblem problem;
    problem.final_time = ex->final_time;
    problem.reference = ex->reference(ex->final_time);
    problem.initial = ex->setup.initial;
    problem.error_norm = [&norm_op](const GridFunction& e) { return weighted_norm(e, NormKind::A, norm_op); };
    const LevelRunner runner = [&ex](double tau, std::size_t steps) {
        SchemeSetup s = ex->setup;
        s.config.tau = tau;
        s.config.steps = steps;
        Integrator integ(std::move(s));
        integ.advance(steps);
        return integ.solution();
    };

    Integrator head(ex->setup);
    ordered_json s = summary_head(config, head);
    int code = kExitOk;
    std::string status = "ok";
    std::string message;
    OrderEstimate est;
    try {
        est = estimate_order(runner, config.scheme.tau, config.order_levels, problem);
    } catch (...) {
        code = classify(std::current_exception(), status, message);
    }
    s["status"] = status;
    if (!message.empty()) s["message"] = message;
    s["final_time"] = ex->final_time;
    if (code == kExitOk) {
        ordered_json order;
        order["taus"] = est.taus;
        ordered_json errors = ordered_json::array();
        for (const double e : est.errors) errors.push_back(real_json(e));
        order["errors"] = errors;
        ordered_json ratios = ordered_json::array();
        for (const double r : est.ratios) ratios.push_back(real_json(r));
        order["ratios"] = ratios;
        order["slope"] = real_json(est.slope);
        order["saturated"] = est.saturated;
        s["order"] = order;

        std::string csv = "tau,error\n";
        for (std::size_t k = 0; k < est.taus.size(); ++k) {
            csv += format_real(est.taus[k]) + "," + format_real(est.errors[k]) + "\n";
        }
        write_file(options.out_dir / config.outputs.csv, csv);
        say(options, config.name + ": slope " + format_real(est.slope));
    } else {
        std::cerr << config.name << ": " << message << '\n';
    }
    write_file(options.out_dir / config.outputs.summary, s.dump(2) + "\n");
    return code;
}

std::size_t batch_threads_from_env() {
    const std::size_t hardware = std::max(1u, std::thread::hardware_concurrency());
    const char* env = std::getenv("SPLITKIT_THREADS");
    if (env == nullptr) return hardware;
    std::size_t value = 0;
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() || value == 0) return hardware;
    return value;
}

int run_suite(const std::filesystem::path& dir, const RunOptions& options, std::size_t threads) {
    if (!std::filesystem::is_directory(dir)) {
        std::cerr << dir.string() << ": not a directory\n";
        return kExitConfig;
    }
    std::vector<std::filesystem::path> configs;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") configs.push_back(entry.path());
    }
    std::sort(configs.begin(), configs.end());
    std::vector<int> codes(configs.size(), kExitOk);
    std::atomic<std::size_t> next{0};
    std::mutex log;
    const auto worker = [&]() {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= configs.size()) return;
            RunOptions o = options;
            o.out_dir = options.out_dir / configs[k].stem();
            try {
                const ExperimentConfig c = load_experiment_config(configs[k]);
                codes[k] = run_experiment(c, o);
            } catch (const ConfigError& e) {
                const std::lock_guard<std::mutex> lock(log);
                std::cerr << configs[k].string() << ": " << e.what() << '\n';
                codes[k] = kExitConfig;
            }
        }
    };
    const std::size_t count = std::max<std::size_t>(1, std::min(threads, configs.size()));
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    pool.clear();
    int worst = kExitOk;
    for (const int c : codes) worst = std::max(worst, c);
    return worst;
}

}  // namespace splitkit
