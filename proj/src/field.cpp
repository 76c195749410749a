#include "stomax/field.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "stomax/error.hpp"

namespace stomax {

namespace {

double edge_factor(int index, int cells) { return (index == 0 || index == cells) ? 0.5 : 1.0; }

void require_finite(std::span<const double> values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NumericalError(std::string("non-finite entry in ") + what);
        }
    }
}

}  // namespace

Grid::Grid(int dimension, std::array<double, 2> lengths, std::array<int, 2> cells)
    : dimension_(dimension), lengths_(lengths), cells_(cells) {
    for (int axis = 0; axis < dimension_; ++axis) {
        const auto a = static_cast<std::size_t>(axis);
        if (!(lengths_[a] > 0.0) || !std::isfinite(lengths_[a])) {
            throw StructuralError("grid: domain length must be positive and finite");
        }
        if (cells_[a] < 2) {
            throw StructuralError("grid: at least 2 cells per axis are required");
        }
    }
    const double vol = cell_volume();
    e_weights_.resize(num_e_nodes());
    h_weights_.resize(num_h_nodes());
    if (dimension_ == 1) {
        const int n = cells_[0];
        for (int i = 0; i <= n; ++i) e_weights_[static_cast<std::size_t>(i)] = vol * edge_factor(i, n);
        std::fill(h_weights_.begin(), h_weights_.end(), vol);
        return;
    }
    const int nx = cells_[0];
    const int ny = cells_[1];
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) {
            e_weights_[vertex(i, j)] = vol * edge_factor(i, nx) * edge_factor(j, ny);
        }
    }
    std::size_t k = 0;
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i <= nx; ++i) h_weights_[k++] = vol * edge_factor(i, nx);
    }
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i < nx; ++i) h_weights_[k++] = vol * edge_factor(j, ny);
    }
}

Grid Grid::line(double length, int cells) { return Grid(1, {length, 0.0}, {cells, 0}); }

Grid Grid::rectangle(double length_x, double length_y, int cells_x, int cells_y) {
    return Grid(2, {length_x, length_y}, {cells_x, cells_y});
}

double Grid::cell_volume() const noexcept {
    double v = lengths_[0] / cells_[0];
    if (dimension_ == 2) v *= lengths_[1] / cells_[1];
    return v;
}

double Grid::domain_volume() const noexcept {
    return dimension_ == 1 ? lengths_[0] : lengths_[0] * lengths_[1];
}

std::size_t Grid::num_e_nodes() const noexcept {
    const auto nx = static_cast<std::size_t>(cells_[0]);
    if (dimension_ == 1) return nx + 1;
    return (nx + 1) * (static_cast<std::size_t>(cells_[1]) + 1);
}

std::size_t Grid::num_hx_nodes() const noexcept {
    if (dimension_ == 1) return 0;
    return (static_cast<std::size_t>(cells_[0]) + 1) * static_cast<std::size_t>(cells_[1]);
}

std::size_t Grid::num_h_nodes() const noexcept {
    const auto nx = static_cast<std::size_t>(cells_[0]);
    if (dimension_ == 1) return nx;
    const auto ny = static_cast<std::size_t>(cells_[1]);
    return (nx + 1) * ny + nx * (ny + 1);
}

Point Grid::e_position(std::size_t k) const {
    if (k >= num_e_nodes()) throw StructuralError("grid: E node index out of range");
    const double hx = spacing(0);
    if (dimension_ == 1) return {static_cast<double>(k) * hx, 0.0};
    const auto row = static_cast<std::size_t>(cells_[0] + 1);
    return {static_cast<double>(k % row) * hx, static_cast<double>(k / row) * spacing(1)};
}

Point Grid::h_position(std::size_t k) const {
    if (k >= num_h_nodes()) throw StructuralError("grid: H node index out of range");
    const double hx = spacing(0);
    if (dimension_ == 1) return {(static_cast<double>(k) + 0.5) * hx, 0.0};
    const double hy = spacing(1);
    const std::size_t nhx = num_hx_nodes();
    if (k < nhx) {
        const auto row = static_cast<std::size_t>(cells_[0] + 1);
        return {static_cast<double>(k % row) * hx, (static_cast<double>(k / row) + 0.5) * hy};
    }
    const std::size_t m = k - nhx;
    const auto row = static_cast<std::size_t>(cells_[0]);
    return {(static_cast<double>(m % row) + 0.5) * hx, static_cast<double>(m / row) * hy};
}

bool Grid::is_boundary_e(std::size_t k) const {
    if (k >= num_e_nodes()) throw StructuralError("grid: E node index out of range");
    if (dimension_ == 1) return k == 0 || k == static_cast<std::size_t>(cells_[0]);
    const auto row = static_cast<std::size_t>(cells_[0] + 1);
    const std::size_t i = k % row;
    const std::size_t j = k / row;
    return i == 0 || j == 0 || i == static_cast<std::size_t>(cells_[0]) ||
           j == static_cast<std::size_t>(cells_[1]);
}

std::string Grid::staggering() const {
    if (dimension_ == 1) return "1d: E at cell edges (incl. boundary), H at cell centres";
    return "2d-tm: Ez at vertices, Hx at (i,j+1/2), Hy at (i+1/2,j)";
}

std::string Grid::describe() const {
    std::ostringstream os;
    os.precision(17);
    if (dimension_ == 1) {
        os << "1d L=" << lengths_[0] << " cells=" << cells_[0];
    } else {
        os << "2d Lx=" << lengths_[0] << " Ly=" << lengths_[1] << " cells=" << cells_[0] << "x" << cells_[1];
    }
    return os.str();
}

TimeGrid::TimeGrid(double horizon, std::size_t num_steps)
    : horizon_(horizon), num_steps_(num_steps), tau_(0.0) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw StructuralError("time grid: horizon must be positive");
    if (num_steps == 0) throw StructuralError("time grid: at least one step is required");
    tau_ = horizon_ / static_cast<double>(num_steps_);
}

double TimeGrid::time(std::size_t n) const noexcept {
    if (n == num_steps_) return horizon_;
    return static_cast<double>(n) * tau_;
}

MediumCoefficients::MediumCoefficients(GridPtr grid, std::vector<double> epsilon, std::vector<double> mu,
                                       double delta)
    : grid_(std::move(grid)), epsilon_(std::move(epsilon)), mu_(std::move(mu)), delta_(delta) {
    if (!grid_) throw StructuralError("medium: null grid");
    if (epsilon_.size() != grid_->num_e_nodes() || mu_.size() != grid_->num_h_nodes()) {
        throw StructuralError("medium: coefficient counts do not match the grid");
    }
    if (!(delta_ > 0.0)) throw StructuralError("medium: delta must be positive");
    require_finite(epsilon_, "epsilon");
    require_finite(mu_, "mu");
    const double lo = std::min(*std::min_element(epsilon_.begin(), epsilon_.end()),
                               *std::min_element(mu_.begin(), mu_.end()));
    if (lo < delta_) throw StructuralError("medium: coefficient below the lower bound delta");
}

MediumCoefficients MediumCoefficients::uniform(GridPtr grid, double epsilon, double mu) {
    if (!grid) throw StructuralError("medium: null grid");
    std::vector<double> eps(grid->num_e_nodes(), epsilon);
    std::vector<double> m(grid->num_h_nodes(), mu);
    return MediumCoefficients(std::move(grid), std::move(eps), std::move(m), std::min(epsilon, mu));
}

MediumCoefficients MediumCoefficients::from_file(GridPtr grid, const std::string& path) {
    if (!grid) throw StructuralError("medium: null grid");
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("medium: cannot open " + path);
    std::vector<double> values;
    std::string line;
    while (std::getline(in, line)) {
        if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
        std::istringstream ls(line);
        std::string token;
        while (ls >> token) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(token, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != token.size()) throw StructuralError("medium: bad number '" + token + "' in " + path);
            values.push_back(v);
        }
    }
    const std::size_t ne = grid->num_e_nodes();
    const std::size_t nh = grid->num_h_nodes();
    if (values.size() != ne + nh) {
        throw StructuralError("medium: " + path + " holds " + std::to_string(values.size()) +
                              " values, grid needs " + std::to_string(ne + nh));
    }
    std::vector<double> eps(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(ne));
    std::vector<double> m(values.begin() + static_cast<std::ptrdiff_t>(ne), values.end());
    const double lo = std::min(*std::min_element(eps.begin(), eps.end()), *std::min_element(m.begin(), m.end()));
    return MediumCoefficients(std::move(grid), std::move(eps), std::move(m), lo);
}

double MediumCoefficients::max_coefficient() const noexcept {
    return std::max(*std::max_element(epsilon_.begin(), epsilon_.end()), *std::max_element(mu_.begin(), mu_.end()));
}

FieldState::FieldState(GridPtr grid, std::vector<double> e, std::vector<double> h)
    : grid_(std::move(grid)), e_(std::move(e)), h_(std::move(h)) {
    if (!grid_) throw StructuralError("field: null grid");
    if (e_.size() != grid_->num_e_nodes() || h_.size() != grid_->num_h_nodes()) {
        throw StructuralError("field: value counts do not match the grid");
    }
    require_finite(e_, "E field");
    require_finite(h_, "H field");
}

FieldState FieldState::zeros(GridPtr grid) {
    if (!grid) throw StructuralError("field: null grid");
    std::vector<double> e(grid->num_e_nodes(), 0.0);
    std::vector<double> h(grid->num_h_nodes(), 0.0);
    return FieldState(std::move(grid), std::move(e), std::move(h));
}

std::vector<double> FieldState::packed() const {
    std::vector<double> out;
    out.reserve(size());
    out.insert(out.end(), e_.begin(), e_.end());
    out.insert(out.end(), h_.begin(), h_.end());
    return out;
}

FieldState FieldState::from_packed(GridPtr grid, std::span<const double> values) {
    if (!grid) throw StructuralError("field: null grid");
    const std::size_t ne = grid->num_e_nodes();
    if (values.size() != ne + grid->num_h_nodes()) throw StructuralError("field: packed size mismatch");
    std::vector<double> e(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(ne));
    std::vector<double> h(values.begin() + static_cast<std::ptrdiff_t>(ne), values.end());
    return FieldState(std::move(grid), std::move(e), std::move(h));
}

FieldState FieldState::scaled(double factor) const { return combined(factor, *this, 0.0); }

FieldState FieldState::combined(double a, const FieldState& other, double b) const {
    require_same_grid(*grid_, *other.grid_, "field combination");
    std::vector<double> e(e_.size());
    std::vector<double> h(h_.size());
    for (std::size_t k = 0; k < e.size(); ++k) e[k] = a * e_[k] + b * other.e_[k];
    for (std::size_t k = 0; k < h.size(); ++k) h[k] = a * h_[k] + b * other.h_[k];
    return FieldState(grid_, std::move(e), std::move(h));
}

bool FieldState::has_boundary_violation() const {
    for (std::size_t k = 0; k < e_.size(); ++k) {
        if (e_[k] != 0.0 && grid_->is_boundary_e(k)) return true;
    }
    return false;
}

bool operator==(const FieldState& a, const FieldState& b) {
    return same_grid(*a.grid_, *b.grid_) && a.e_ == b.e_ && a.h_ == b.h_;
}

FieldState operator+(const FieldState& a, const FieldState& b) { return a.combined(1.0, b, 1.0); }
FieldState operator-(const FieldState& a, const FieldState& b) { return a.combined(1.0, b, -1.0); }

bool same_grid(const Grid& a, const Grid& b) noexcept { return &a == &b || a == b; }

void require_same_grid(const Grid& a, const Grid& b, const char* where) {
    if (!same_grid(a, b)) throw StructuralError(std::string(where) + ": grid mismatch");
}

double inner_product(const FieldState& u, const FieldState& v, const MediumCoefficients& med) {
    require_same_grid(*u.grid(), *v.grid(), "inner_product");
    require_same_grid(*u.grid(), *med.grid(), "inner_product (medium)");
    const Grid& g = *u.grid();
    const auto we = g.e_weights();
    const auto wh = g.h_weights();
    const auto eps = med.epsilon();
    const auto mu = med.mu();
    const auto ue = u.e();
    const auto ve = v.e();
    const auto uh = u.h();
    const auto vh = v.h();
    double sum = 0.0;
    for (std::size_t k = 0; k < ue.size(); ++k) sum += eps[k] * ue[k] * ve[k] * we[k];
    for (std::size_t k = 0; k < uh.size(); ++k) sum += mu[k] * uh[k] * vh[k] * wh[k];
    return sum;
}

double energy(const FieldState& u, const MediumCoefficients& med) { return inner_product(u, u, med); }

double h_norm(const FieldState& u, const MediumCoefficients& med) { return std::sqrt(energy(u, med)); }

double l2_squared(const FieldState& u) {
    const Grid& g = *u.grid();
    double sum = 0.0;
    for (std::size_t k = 0; k < u.e().size(); ++k) sum += u.e()[k] * u.e()[k] * g.e_weight(k);
    for (std::size_t k = 0; k < u.h().size(); ++k) sum += u.h()[k] * u.h()[k] * g.h_weight(k);
    return sum;
}

}  // namespace stomax
