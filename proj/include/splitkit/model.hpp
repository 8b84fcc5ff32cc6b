#pragma once

#include <cstddef>
#include <functional>

#include "splitkit/linalg.hpp"

namespace splitkit {

/// Interior node of the grid, 1-based as in (i1, i2) with 1 <= i_a <= N_a - 1.
struct GridNode {
    int i1;
    int i2;
    friend bool operator==(const GridNode&, const GridNode&) = default;
};

/// Uniform rectangular grid on (0, l1) x (0, l2) with N1 x N2 cells.
///
/// Unknowns live on interior nodes only (homogeneous Dirichlet boundary).
/// Ordering is row-major: i2 outer, i1 inner, so index = (i2-1)(N1-1) + (i1-1).
class Grid2D {
public:
    Grid2D(double l1, double l2, int n1, int n2);
    static Grid2D unit_square(int n) { return Grid2D(1.0, 1.0, n, n); }

    double l1() const noexcept { return l1_; }
    double l2() const noexcept { return l2_; }
    int n1() const noexcept { return n1_; }
    int n2() const noexcept { return n2_; }
    double h1() const noexcept { return l1_ / n1_; }
    double h2() const noexcept { return l2_ / n2_; }

    /// Interior nodes per row / per column.
    int interior1() const noexcept { return n1_ - 1; }
    int interior2() const noexcept { return n2_ - 1; }
    std::size_t node_count() const noexcept {
        return static_cast<std::size_t>(interior1()) * static_cast<std::size_t>(interior2());
    }

    std::size_t index(int i1, int i2) const;
    GridNode node(std::size_t index) const;
    double x1(int i1) const noexcept { return i1 * h1(); }
    double x2(int i2) const noexcept { return i2 * h2(); }

private:
    double l1_;
    double l2_;
    int n1_;
    int n2_;
};

/// Diffusion coefficient k(x1, x2) with a claimed lower bound kappa > 0.
struct Coefficient {
    std::function<double(double, double)> k;
    double kappa;

    static Coefficient constant(double value);
};

/// Source term f(t), already sampled on interior nodes.
using Forcing = std::function<GridFunction(double)>;

/// Samples a function of (x1, x2) on interior nodes.
GridFunction sample(const Grid2D& grid, const std::function<double(double, double)>& fn);

enum class Axis { X1, X2 };

/// Five-point flux-form operator with k taken at the staggered midpoints.
/// Throws DomainError naming the midpoint if k <= 0 or k < kappa there.
SparseOperator assemble_diffusion_operator(const Grid2D& grid, const Coefficient& coefficient);

/// Only the x1 (or x2) difference terms of the five-point operator.
SparseOperator assemble_directional_operator(const Grid2D& grid, const Coefficient& coefficient, Axis axis);

/// kappa * (delta_1 + delta_2), delta_a = 4/h_a^2 sin^2(pi h_a / (2 l_a)).
double spectral_lower_bound(const Grid2D& grid, double kappa);

/// Largest eigenvalue of the k = 1 operator, sum of 4/h_a^2 cos^2(pi h_a / (2 l_a)).
double laplacian_max_eigenvalue(const Grid2D& grid);

/// Eigenvalue of the k = 1 operator for the sine mode (m1, m2).
double eigenmode_eigenvalue(const Grid2D& grid, int m1, int m2);

/// Per-direction eigenvalue 4/h_a^2 sin^2(m pi h_a / (2 l_a)).
double directional_eigenvalue(const Grid2D& grid, Axis axis, int m);

/// Sine product sin(m1 pi x1 / l1) sin(m2 pi x2 / l2) at interior nodes.
GridFunction eigenmode_shape(const Grid2D& grid, int m1, int m2);

/// exp(-lambda t) times the sine mode: the exact semi-discrete solution for k = 1.
GridFunction eigenmode_reference(const Grid2D& grid, int m1, int m2, double t);

}  // namespace splitkit
