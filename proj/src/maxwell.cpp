#include "stomax/maxwell.hpp"

#include <Eigen/SparseLU>
#include <cmath>
#include <unsupported/Eigen/MatrixFunctions>

#include "stomax/error.hpp"

namespace stomax {

namespace {

using Triplet = Eigen::Triplet<double>;

void assemble_1d(const Grid& g, const MediumCoefficients& med, std::vector<Triplet>& t) {
    const int n = g.cells(0);
    const double h = g.spacing(0);
    const auto ne = g.num_e_nodes();
    const auto eps = med.epsilon();
    const auto mu = med.mu();
    for (int i = 1; i < n; ++i) {
        const auto row = static_cast<std::size_t>(i);
        const double c = 1.0 / (eps[row] * h);
        t.emplace_back(i, static_cast<int>(ne) + i, c);
        t.emplace_back(i, static_cast<int>(ne) + i - 1, -c);
    }
    for (int k = 0; k < n; ++k) {
        const double c = 1.0 / (mu[static_cast<std::size_t>(k)] * h);
        const int row = static_cast<int>(ne) + k;
        t.emplace_back(row, k + 1, c);
        t.emplace_back(row, k, -c);
    }
}

void assemble_2d(const Grid& g, const MediumCoefficients& med, std::vector<Triplet>& t) {
    const int nx = g.cells(0);
    const int ny = g.cells(1);
    const double hx = g.spacing(0);
    const double hy = g.spacing(1);
    const auto ne = static_cast<int>(g.num_e_nodes());
    const auto nhx = static_cast<int>(g.num_hx_nodes());
    const auto eps = med.epsilon();
    const auto mu = med.mu();
    auto hx_index = [&](int i, int jh) { return ne + jh * (nx + 1) + i; };
    auto hy_index = [&](int ih, int j) { return ne + nhx + j * nx + ih; };
    auto ez = [&](int i, int j) { return static_cast<int>(g.vertex(i, j)); };

    // eps dEz/dt = dHy/dx - dHx/dy
    for (int j = 1; j < ny; ++j) {
        for (int i = 1; i < nx; ++i) {
            const int row = ez(i, j);
            const double inv = 1.0 / eps[static_cast<std::size_t>(row)];
            t.emplace_back(row, hy_index(i, j), inv / hx);
            t.emplace_back(row, hy_index(i - 1, j), -inv / hx);
            t.emplace_back(row, hx_index(i, j), -inv / hy);
            t.emplace_back(row, hx_index(i, j - 1), inv / hy);
        }
    }
    // mu dHx/dt = -dEz/dy
    for (int jh = 0; jh < ny; ++jh) {
        for (int i = 0; i <= nx; ++i) {
            const int row = hx_index(i, jh);
            const double inv = 1.0 / mu[static_cast<std::size_t>(row - ne)];
            t.emplace_back(row, ez(i, jh + 1), -inv / hy);
            t.emplace_back(row, ez(i, jh), inv / hy);
        }
    }
    // mu dHy/dt = dEz/dx
    for (int j = 0; j <= ny; ++j) {
        for (int ih = 0; ih < nx; ++ih) {
            const int row = hy_index(ih, j);
            const double inv = 1.0 / mu[static_cast<std::size_t>(row - ne)];
            t.emplace_back(row, ez(ih + 1, j), inv / hx);
            t.emplace_back(row, ez(ih, j), -inv / hx);
        }
    }
}

// ||r||_H restricted to the packed entries listed in `active`.
double active_norm(const MediumCoefficients& med, std::span<const std::size_t> active, std::span<const double> r) {
    const Grid& g = *med.grid();
    const std::size_t ne = g.num_e_nodes();
    double sum = 0.0;
    for (std::size_t idx : active) {
        const double v = r[idx];
        if (idx < ne) {
            sum += med.epsilon()[idx] * g.e_weight(idx) * v * v;
        } else {
            sum += med.mu()[idx - ne] * g.h_weight(idx - ne) * v * v;
        }
    }
    return std::sqrt(sum);
}

}  // namespace

MaxwellOperator::MaxwellOperator(std::shared_ptr<const MediumCoefficients> med)
    : med_(std::move(med)), grid_(med_ ? med_->grid() : nullptr),
      variant_(MaxwellVariant::reduced_1d) {
    if (!med_) throw StructuralError("maxwell operator: null medium");
    const Grid& g = *grid_;
    variant_ = g.dimension() == 1 ? MaxwellVariant::reduced_1d : MaxwellVariant::tm_2d;
    const auto n = static_cast<Eigen::Index>(g.num_e_nodes() + g.num_h_nodes());
    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(n) * 4);
    if (variant_ == MaxwellVariant::reduced_1d) {
        assemble_1d(g, *med_, triplets);
    } else {
        assemble_2d(g, *med_, triplets);
    }
    matrix_.resize(n, n);
    matrix_.setFromTriplets(triplets.begin(), triplets.end());
    matrix_.makeCompressed();

    const std::size_t ne = g.num_e_nodes();
    for (std::size_t k = 0; k < ne; ++k) {
        if (!g.is_boundary_e(k)) active_.push_back(k);
    }
    for (std::size_t k = 0; k < g.num_h_nodes(); ++k) active_.push_back(ne + k);
}

void MaxwellOperator::apply_packed(std::span<const double> in, std::span<double> out) const {
    const auto n = static_cast<std::size_t>(matrix_.rows());
    if (in.size() != n || out.size() != n) throw StructuralError("apply_M: packed size mismatch");
    const int* outer = matrix_.outerIndexPtr();
    const int* inner = matrix_.innerIndexPtr();
    const double* values = matrix_.valuePtr();
    for (std::size_t row = 0; row < n; ++row) {
        double sum = 0.0;
        for (int p = outer[row]; p < outer[row + 1]; ++p) sum += values[p] * in[static_cast<std::size_t>(inner[p])];
        out[row] = sum;
    }
}

FieldState MaxwellOperator::apply(const FieldState& u) const {
    require_same_grid(*u.grid(), *grid_, "apply_M");
    const auto in = u.packed();
    std::vector<double> out(in.size());
    apply_packed(in, out);
    return FieldState::from_packed(grid_, out);
}

Eigen::SparseMatrix<double> MaxwellOperator::sparse_reduced() const {
    std::vector<int> position(static_cast<std::size_t>(matrix_.rows()), -1);
    for (std::size_t a = 0; a < active_.size(); ++a) position[active_[a]] = static_cast<int>(a);
    std::vector<Triplet> triplets;
    for (std::size_t a = 0; a < active_.size(); ++a) {
        const auto row = static_cast<Eigen::Index>(active_[a]);
        for (SparseRows::InnerIterator it(matrix_, row); it; ++it) {
            const int col = position[static_cast<std::size_t>(it.col())];
            if (col >= 0) triplets.emplace_back(static_cast<int>(a), col, it.value());
        }
    }
    const auto m = static_cast<Eigen::Index>(active_.size());
    Eigen::SparseMatrix<double> out(m, m);
    out.setFromTriplets(triplets.begin(), triplets.end());
    return out;
}

Eigen::MatrixXd MaxwellOperator::dense_reduced() const { return Eigen::MatrixXd(sparse_reduced()); }

FieldState apply_M(const MaxwellOperator& op, const FieldState& u) { return op.apply(u); }

double adjoint_defect(const MaxwellOperator& op, const FieldState& u, const FieldState& v) {
    require_same_grid(*u.grid(), *v.grid(), "adjoint_defect");
    const auto& med = op.medium();
    return inner_product(op.apply(u), v, med) + inner_product(u, op.apply(v), med);
}

double graph_norm(const MaxwellOperator& op, const FieldState& u, int k) {
    if (k < 0 || k > 2) throw StructuralError("graph_norm: k must be 0, 1 or 2");
    require_same_grid(*u.grid(), *op.grid(), "graph_norm");
    const auto& med = op.medium();
    if (k == 0) return h_norm(u, med);
    FieldState power = op.apply(u);
    if (k == 2) power = op.apply(power);
    return std::sqrt(energy(u, med) + energy(power, med));
}

// Tridiagonal factor of I - alpha M in the interleaved 1D ordering
// H_0, E_1, H_1, E_2, ..., E_{n-1}, H_{n-1}.  The off-diagonal products are
// negative, so the pivots satisfy d_p >= 1 and no pivoting is needed.
struct ShiftedSolver::Banded {
    std::vector<std::size_t> packed_index;  // ordering position -> packed index
    std::vector<double> lower_multiplier;   // m_p = l_p / d_{p-1}
    std::vector<double> upper;              // u_p
    std::vector<double> pivot;              // d_p
};

struct ShiftedSolver::SparseDirect {
    std::vector<std::size_t> active;
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
};

ShiftedSolver::ShiftedSolver(std::shared_ptr<const MaxwellOperator> op, double alpha, double tolerance)
    : op_(std::move(op)), alpha_(alpha), tolerance_(tolerance) {
    if (!op_) throw StructuralError("shifted solver: null operator");
    if (!std::isfinite(alpha_)) throw NumericalError("shifted solver: non-finite alpha");
    if (!(tolerance_ > 0.0)) throw StructuralError("shifted solver: tolerance must be positive");
    const Grid& g = *op_->grid();
    const auto& m = op_->matrix();

    if (op_->variant() == MaxwellVariant::reduced_1d) {
        auto b = std::make_shared<Banded>();
        const auto n = static_cast<std::size_t>(g.cells(0));
        const std::size_t ne = g.num_e_nodes();
        const std::size_t size = 2 * n - 1;
        b->packed_index.resize(size);
        for (std::size_t p = 0; p < size; ++p) {
            b->packed_index[p] = (p % 2 == 0) ? ne + p / 2 : (p + 1) / 2;
        }
        std::vector<double> lower(size, 0.0);
        b->upper.assign(size, 0.0);
        for (std::size_t p = 0; p < size; ++p) {
            const auto row = static_cast<Eigen::Index>(b->packed_index[p]);
            for (MaxwellOperator::SparseRows::InnerIterator it(m, row); it; ++it) {
                const auto col = static_cast<std::size_t>(it.col());
                if (p > 0 && col == b->packed_index[p - 1]) lower[p] = -alpha_ * it.value();
                if (p + 1 < size && col == b->packed_index[p + 1]) b->upper[p] = -alpha_ * it.value();
            }
        }
        b->pivot.assign(size, 1.0);
        b->lower_multiplier.assign(size, 0.0);
        for (std::size_t p = 1; p < size; ++p) {
            b->lower_multiplier[p] = lower[p] / b->pivot[p - 1];
            b->pivot[p] = 1.0 - b->lower_multiplier[p] * b->upper[p - 1];
            if (!(std::abs(b->pivot[p]) > 1e-300) || !std::isfinite(b->pivot[p])) {
                throw NumericalError("shifted solver: singular tridiagonal factor");
            }
        }
        banded_ = std::move(b);
        return;
    }

    auto s = std::make_shared<SparseDirect>();
    s->active.assign(op_->active().begin(), op_->active().end());
    Eigen::SparseMatrix<double> a = op_->sparse_reduced();
    a *= -alpha_;
    Eigen::SparseMatrix<double> id(a.rows(), a.cols());
    id.setIdentity();
    a += id;
    a.makeCompressed();
    s->lu.compute(a);
    if (s->lu.info() != Eigen::Success) throw NumericalError("shifted solver: sparse LU factorization failed");
    sparse_ = std::move(s);
}

void ShiftedSolver::solve_packed(std::span<const double> rhs, std::span<double> out) const {
    const auto n = static_cast<std::size_t>(op_->matrix().rows());
    if (rhs.size() != n || out.size() != n) throw StructuralError("solve_shifted: packed size mismatch");
    std::fill(out.begin(), out.end(), 0.0);
    if (banded_) {
        const Banded& b = *banded_;
        const std::size_t size = b.packed_index.size();
        std::vector<double> y(size);
        y[0] = rhs[b.packed_index[0]];
        for (std::size_t p = 1; p < size; ++p) y[p] = rhs[b.packed_index[p]] - b.lower_multiplier[p] * y[p - 1];
        double next = y[size - 1] / b.pivot[size - 1];
        out[b.packed_index[size - 1]] = next;
        for (std::size_t p = size - 1; p-- > 0;) {
            next = (y[p] - b.upper[p] * next) / b.pivot[p];
            out[b.packed_index[p]] = next;
        }
        return;
    }
    const SparseDirect& s = *sparse_;
    Eigen::VectorXd r(static_cast<Eigen::Index>(s.active.size()));
    for (std::size_t a = 0; a < s.active.size(); ++a) r[static_cast<Eigen::Index>(a)] = rhs[s.active[a]];
    const Eigen::VectorXd x = s.lu.solve(r);
    for (std::size_t a = 0; a < s.active.size(); ++a) out[s.active[a]] = x[static_cast<Eigen::Index>(a)];
}

double ShiftedSolver::relative_residual(const FieldState& u, const FieldState& rhs) const {
    require_same_grid(*u.grid(), *rhs.grid(), "solve_shifted residual");
    const auto x = u.packed();
    const auto b = rhs.packed();
    std::vector<double> mx(x.size());
    op_->apply_packed(x, mx);
    std::vector<double> r(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) r[k] = x[k] - alpha_ * mx[k] - b[k];
    const double denom = active_norm(op_->medium(), op_->active(), b);
    const double num = active_norm(op_->medium(), op_->active(), r);
    if (denom == 0.0) return num;
    return num / denom;
}

FieldState solve_shifted(const ShiftedSolver& solver, const FieldState& rhs) {
    require_same_grid(*rhs.grid(), *solver.op().grid(), "solve_shifted");
    const auto b = rhs.packed();
    std::vector<double> x(b.size());
    solver.solve_packed(b, x);
    FieldState u = FieldState::from_packed(solver.op().grid(), x);
    const double res = solver.relative_residual(u, rhs);
    if (!(res <= solver.tolerance())) {
        throw NumericalError("solve_shifted: relative residual " + std::to_string(res) + " exceeds tolerance");
    }
    return u;
}

Semigroup::Semigroup(const MaxwellOperator& op)
    : grid_(op.grid()), active_(op.active().begin(), op.active().end()) {
    if (active_.size() > kMaxDenseUnknowns) {
        throw CapabilityError("semigroup: " + std::to_string(active_.size()) + " unknowns exceed the dense limit of " +
                              std::to_string(kMaxDenseUnknowns));
    }
    generator_ = op.dense_reduced();
}

FieldState Semigroup::apply(const FieldState& u, double t) const {
    require_same_grid(*u.grid(), *grid_, "semigroup_apply");
    const auto x = u.packed();
    Eigen::VectorXd v(static_cast<Eigen::Index>(active_.size()));
    for (std::size_t a = 0; a < active_.size(); ++a) v[static_cast<Eigen::Index>(a)] = x[active_[a]];
    Eigen::VectorXd y = v;
    if (t != 0.0) {
        const Eigen::MatrixXd propagator = (generator_ * t).exp();
        y = propagator * v;
    }
    std::vector<double> out(x.size(), 0.0);
    for (std::size_t a = 0; a < active_.size(); ++a) out[active_[a]] = y[static_cast<Eigen::Index>(a)];
    return FieldState::from_packed(grid_, out);
}

FieldState semigroup_apply(const MaxwellOperator& op, const FieldState& u, double t) {
    return Semigroup(op).apply(u, t);
}

}  // namespace stomax
