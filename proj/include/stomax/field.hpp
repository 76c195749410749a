#pragma once

// Staggered grids, field states, medium coefficients and the weighted
// energy inner product.
//
// Layouts:
//   1D  (E = Ez, H = Hy):  E on the cells_x + 1 cell edges x_i = i h (both
//       boundary nodes included), H on the cells_x cell centres x_{i+1/2}.
//   2D TM (Ez, Hx, Hy):    Ez on the (nx+1)(ny+1) vertices, Hx on the
//       vertical edge midpoints (i, j+1/2), Hy on the horizontal edge
//       midpoints (i+1/2, j).  The H vector stores all Hx values first,
//       then all Hy values.
//
// Quadrature weights are the cell volume times 1/2 for every axis along
// which a node sits on the boundary.  Boundary E values are part of the
// storage but carry the PEC condition n x E = 0; operators zero them.

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace stomax {

struct Point {
    double x{0.0};
    double y{0.0};
};

class Grid {
public:
    static Grid line(double length, int cells);
    static Grid rectangle(double length_x, double length_y, int cells_x, int cells_y);

    [[nodiscard]] int dimension() const noexcept { return dimension_; }
    [[nodiscard]] double length(int axis) const { return lengths_.at(static_cast<std::size_t>(axis)); }
    [[nodiscard]] int cells(int axis) const { return cells_.at(static_cast<std::size_t>(axis)); }
    [[nodiscard]] double spacing(int axis) const { return length(axis) / cells(axis); }
    [[nodiscard]] double cell_volume() const noexcept;
    [[nodiscard]] double domain_volume() const noexcept;

    [[nodiscard]] std::size_t num_e_nodes() const noexcept;
    [[nodiscard]] std::size_t num_h_nodes() const noexcept;
    /// 2D only: number of Hx entries at the front of the H vector.
    [[nodiscard]] std::size_t num_hx_nodes() const noexcept;

    [[nodiscard]] Point e_position(std::size_t k) const;
    [[nodiscard]] Point h_position(std::size_t k) const;
    [[nodiscard]] double e_weight(std::size_t k) const { return e_weights_.at(k); }
    [[nodiscard]] double h_weight(std::size_t k) const { return h_weights_.at(k); }
    [[nodiscard]] std::span<const double> e_weights() const noexcept { return e_weights_; }
    [[nodiscard]] std::span<const double> h_weights() const noexcept { return h_weights_; }
    [[nodiscard]] bool is_boundary_e(std::size_t k) const;

    /// Row-major vertex index (i along x, j along y).
    [[nodiscard]] std::size_t vertex(int i, int j) const noexcept {
        return static_cast<std::size_t>(j) * static_cast<std::size_t>(cells_[0] + 1) +
               static_cast<std::size_t>(i);
    }

    [[nodiscard]] std::string staggering() const;
    [[nodiscard]] std::string describe() const;

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    Grid(int dimension, std::array<double, 2> lengths, std::array<int, 2> cells);

    int dimension_;
    std::array<double, 2> lengths_;
    std::array<int, 2> cells_;
    std::vector<double> e_weights_;
    std::vector<double> h_weights_;
};

using GridPtr = std::shared_ptr<const Grid>;

/// Uniform partition of [0, horizon] with tau = horizon / num_steps.
class TimeGrid {
public:
    TimeGrid(double horizon, std::size_t num_steps);

    [[nodiscard]] double horizon() const noexcept { return horizon_; }
    [[nodiscard]] std::size_t num_steps() const noexcept { return num_steps_; }
    [[nodiscard]] double tau() const noexcept { return tau_; }
    [[nodiscard]] double time(std::size_t n) const noexcept;

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

private:
    double horizon_;
    std::size_t num_steps_;
    double tau_;
};

class MediumCoefficients {
public:
    MediumCoefficients(GridPtr grid, std::vector<double> epsilon, std::vector<double> mu, double delta);
    /// delta defaults to min(epsilon, mu).
    static MediumCoefficients uniform(GridPtr grid, double epsilon, double mu);
    /// Whitespace separated values, `#` comments: all epsilon (E nodes) then all mu (H nodes).
    static MediumCoefficients from_file(GridPtr grid, const std::string& path);

    [[nodiscard]] const GridPtr& grid() const noexcept { return grid_; }
    [[nodiscard]] std::span<const double> epsilon() const noexcept { return epsilon_; }
    [[nodiscard]] std::span<const double> mu() const noexcept { return mu_; }
    [[nodiscard]] double delta() const noexcept { return delta_; }
    [[nodiscard]] double max_coefficient() const noexcept;

private:
    GridPtr grid_;
    std::vector<double> epsilon_;
    std::vector<double> mu_;
    double delta_;
};

/// u = (E, H) on a staggered grid.  Immutable; every entry finite.
class FieldState {
public:
    FieldState(GridPtr grid, std::vector<double> e, std::vector<double> h);
    static FieldState zeros(GridPtr grid);

    [[nodiscard]] const GridPtr& grid() const noexcept { return grid_; }
    [[nodiscard]] std::span<const double> e() const noexcept { return e_; }
    [[nodiscard]] std::span<const double> h() const noexcept { return h_; }
    [[nodiscard]] std::size_t size() const noexcept { return e_.size() + h_.size(); }

    /// Concatenated [E..., H...].
    [[nodiscard]] std::vector<double> packed() const;
    static FieldState from_packed(GridPtr grid, std::span<const double> values);

    [[nodiscard]] FieldState scaled(double factor) const;
    /// a * this + b * other
    [[nodiscard]] FieldState combined(double a, const FieldState& other, double b) const;
    [[nodiscard]] bool has_boundary_violation() const;

    friend bool operator==(const FieldState& a, const FieldState& b);

private:
    GridPtr grid_;
    std::vector<double> e_;
    std::vector<double> h_;
};

FieldState operator+(const FieldState& a, const FieldState& b);
FieldState operator-(const FieldState& a, const FieldState& b);

[[nodiscard]] bool same_grid(const Grid& a, const Grid& b) noexcept;
void require_same_grid(const Grid& a, const Grid& b, const char* where);

/// Weighted inner product sum(eps E_u E_v w_E) + sum(mu H_u H_v w_H).
double inner_product(const FieldState& u, const FieldState& v, const MediumCoefficients& med);
double energy(const FieldState& u, const MediumCoefficients& med);
double h_norm(const FieldState& u, const MediumCoefficients& med);
/// Unweighted quadrature sum(E^2 w_E) + sum(H^2 w_H).
double l2_squared(const FieldState& u);

}  // namespace stomax
