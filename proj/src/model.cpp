#include "splitkit/model.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace splitkit {

Grid2D::Grid2D(double l1, double l2, int n1, int n2) : l1_(l1), l2_(l2), n1_(n1), n2_(n2) {
    if (!(l1 > 0.0) || !(l2 > 0.0) || !std::isfinite(l1) || !std::isfinite(l2)) {
        throw DomainError("Grid2D: side lengths must be positive and finite");
    }
    if (n1 < 2 || n2 < 2) throw DomainError("Grid2D: at least two subdivisions per direction");
}

std::size_t Grid2D::index(int i1, int i2) const {
    if (i1 < 1 || i1 > interior1() || i2 < 1 || i2 > interior2()) {
        std::ostringstream msg;
        msg << "Grid2D::index: (" << i1 << ", " << i2 << ") is not an interior node";
        throw DimensionError(msg.str());
    }
    return static_cast<std::size_t>(i2 - 1) * static_cast<std::size_t>(interior1()) +
           static_cast<std::size_t>(i1 - 1);
}

GridNode Grid2D::node(std::size_t index) const {
    if (index >= node_count()) throw DimensionError("Grid2D::node: index out of range");
    const auto row = static_cast<std::size_t>(interior1());
    return {static_cast<int>(index % row) + 1, static_cast<int>(index / row) + 1};
}

Coefficient Coefficient::constant(double value) {
    if (!(value > 0.0)) throw DomainError("Coefficient::constant: value must be positive");
    return {[value](double, double) { return value; }, value};
}

GridFunction sample(const Grid2D& grid, const std::function<double(double, double)>& fn) {
    GridFunction out(grid.node_count());
    for (int i2 = 1; i2 <= grid.interior2(); ++i2) {
        for (int i1 = 1; i1 <= grid.interior1(); ++i1) {
            out[grid.index(i1, i2)] = fn(grid.x1(i1), grid.x2(i2));
        }
    }
    return out;
}

namespace {

double sample_midpoint(const Coefficient& c, double x1, double x2) {
    const double value = c.k(x1, x2);
    if (!std::isfinite(value) || !(value > 0.0) || value < c.kappa) {
        std::ostringstream msg;
        msg << "coefficient k(" << x1 << ", " << x2 << ") = " << value
            << " violates k >= kappa = " << c.kappa << " > 0";
        throw DomainError(msg.str());
    }
    return value;
}

void append_direction(const Grid2D& grid, const Coefficient& c, Axis axis, std::vector<Triplet>& t) {
    const double h = axis == Axis::X1 ? grid.h1() : grid.h2();
    const double inv_h2 = 1.0 / (h * h);
    for (int i2 = 1; i2 <= grid.interior2(); ++i2) {
        for (int i1 = 1; i1 <= grid.interior1(); ++i1) {
            const std::size_t row = grid.index(i1, i2);
            double k_plus = 0.0;
            double k_minus = 0.0;
            // Midpoints written as (i +- 0.5) h so neighbouring rows see
            // bitwise-identical abscissae.
            if (axis == Axis::X1) {
                k_plus = sample_midpoint(c, (i1 + 0.5) * grid.h1(), grid.x2(i2));
                k_minus = sample_midpoint(c, (i1 - 0.5) * grid.h1(), grid.x2(i2));
            } else {
                k_plus = sample_midpoint(c, grid.x1(i1), (i2 + 0.5) * grid.h2());
                k_minus = sample_midpoint(c, grid.x1(i1), (i2 - 0.5) * grid.h2());
            }
            t.push_back({row, row, (k_plus + k_minus) * inv_h2});
            const int last = axis == Axis::X1 ? grid.interior1() : grid.interior2();
            const int pos = axis == Axis::X1 ? i1 : i2;
            if (pos < last) {
                const std::size_t next = axis == Axis::X1 ? grid.index(i1 + 1, i2) : grid.index(i1, i2 + 1);
                t.push_back({row, next, -k_plus * inv_h2});
            }
            if (pos > 1) {
                const std::size_t prev = axis == Axis::X1 ? grid.index(i1 - 1, i2) : grid.index(i1, i2 - 1);
                t.push_back({row, prev, -k_minus * inv_h2});
            }
        }
    }
}

}  // namespace

SparseOperator assemble_diffusion_operator(const Grid2D& grid, const Coefficient& coefficient) {
    std::vector<Triplet> t;
    t.reserve(grid.node_count() * 6);
    append_direction(grid, coefficient, Axis::X1, t);
    append_direction(grid, coefficient, Axis::X2, t);
    const std::size_t n = grid.node_count();
    return SparseOperator::from_triplets(n, n, std::move(t), true);
}

SparseOperator assemble_directional_operator(const Grid2D& grid, const Coefficient& coefficient, Axis axis) {
    std::vector<Triplet> t;
    t.reserve(grid.node_count() * 3);
    append_direction(grid, coefficient, axis, t);
    const std::size_t n = grid.node_count();
    return SparseOperator::from_triplets(n, n, std::move(t), true);
}

double directional_eigenvalue(const Grid2D& grid, Axis axis, int m) {
    const double h = axis == Axis::X1 ? grid.h1() : grid.h2();
    const double l = axis == Axis::X1 ? grid.l1() : grid.l2();
    const double s = std::sin(m * std::numbers::pi * h / (2.0 * l));
    return 4.0 / (h * h) * s * s;
}

double spectral_lower_bound(const Grid2D& grid, double kappa) {
    if (!(kappa > 0.0)) throw DomainError("spectral_lower_bound: kappa must be positive");
    return kappa * (directional_eigenvalue(grid, Axis::X1, 1) + directional_eigenvalue(grid, Axis::X2, 1));
}

double laplacian_max_eigenvalue(const Grid2D& grid) {
    auto part = [](double h, double l) {
        const double c = std::cos(std::numbers::pi * h / (2.0 * l));
        return 4.0 / (h * h) * c * c;
    };
    return part(grid.h1(), grid.l1()) + part(grid.h2(), grid.l2());
}

double eigenmode_eigenvalue(const Grid2D& grid, int m1, int m2) {
    return directional_eigenvalue(grid, Axis::X1, m1) + directional_eigenvalue(grid, Axis::X2, m2);
}

GridFunction eigenmode_shape(const Grid2D& grid, int m1, int m2) {
    if (m1 < 1 || m1 > grid.interior1() || m2 < 1 || m2 > grid.interior2()) {
        std::ostringstream msg;
        msg << "eigenmode (" << m1 << ", " << m2 << ") outside [1, " << grid.interior1() << "] x [1, "
            << grid.interior2() << "]";
        throw DomainError(msg.str());
    }
    GridFunction v(grid.node_count());
    for (int i2 = 1; i2 <= grid.interior2(); ++i2) {
        for (int i1 = 1; i1 <= grid.interior1(); ++i1) {
            v[grid.index(i1, i2)] = std::sin(m1 * std::numbers::pi * i1 / grid.n1()) *
                                    std::sin(m2 * std::numbers::pi * i2 / grid.n2());
        }
    }
    return v;
}

GridFunction eigenmode_reference(const Grid2D& grid, int m1, int m2, double t) {
    GridFunction v = eigenmode_shape(grid, m1, m2);
    v *= std::exp(-eigenmode_eigenvalue(grid, m1, m2) * t);
    return v;
}

}  // namespace splitkit
