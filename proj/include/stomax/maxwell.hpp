#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <span>
#include <vector>

#include "stomax/field.hpp"

namespace stomax {

enum class MaxwellVariant { reduced_1d, tm_2d };

/// Staggered-difference Maxwell operator M(E, H) = (eps^-1 curl H, -mu^-1 curl E).
///
/// Acts on packed [E..., H...] vectors.  Rows of boundary E nodes are empty
/// (PEC), columns are kept so that a state violating n x E = 0 shows up in
/// the adjoint defect.  In 1D the reduced field pair is (Ez, Hy), so the E
/// row reads eps^-1 dH/dx and the H row mu^-1 dE/dx.
class MaxwellOperator {
public:
    using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

    explicit MaxwellOperator(std::shared_ptr<const MediumCoefficients> med);

    [[nodiscard]] const GridPtr& grid() const noexcept { return grid_; }
    [[nodiscard]] const MediumCoefficients& medium() const noexcept { return *med_; }
    [[nodiscard]] const std::shared_ptr<const MediumCoefficients>& medium_ptr() const noexcept { return med_; }
    [[nodiscard]] MaxwellVariant variant() const noexcept { return variant_; }
    [[nodiscard]] const SparseRows& matrix() const noexcept { return matrix_; }

    /// Packed indices of the unknowns: interior E nodes and every H node.
    [[nodiscard]] std::span<const std::size_t> active() const noexcept { return active_; }
    [[nodiscard]] std::size_t num_unknowns() const noexcept { return active_.size(); }

    [[nodiscard]] FieldState apply(const FieldState& u) const;
    void apply_packed(std::span<const double> in, std::span<double> out) const;

    /// M restricted to the active unknowns.
    [[nodiscard]] Eigen::MatrixXd dense_reduced() const;
    [[nodiscard]] Eigen::SparseMatrix<double> sparse_reduced() const;

private:
    std::shared_ptr<const MediumCoefficients> med_;
    GridPtr grid_;
    MaxwellVariant variant_;
    SparseRows matrix_;
    std::vector<std::size_t> active_;
};

FieldState apply_M(const MaxwellOperator& op, const FieldState& u);

/// <Mu, v>_H + <u, Mv>_H
double adjoint_defect(const MaxwellOperator& op, const FieldState& u, const FieldState& v);

/// (||u||^2 + ||M^k u||^2)^{1/2} for k in {1, 2}; ||u||_H for k = 0.
double graph_norm(const MaxwellOperator& op, const FieldState& u, int k);

/// Factorized (I - alpha M) on the active unknowns, reusable across steps and
/// threads.  Boundary E entries of the right-hand side are discarded and the
/// returned state has zero boundary E.
class ShiftedSolver {
public:
    ShiftedSolver(std::shared_ptr<const MaxwellOperator> op, double alpha, double tolerance = 1e-12);

    [[nodiscard]] double alpha() const noexcept { return alpha_; }
    [[nodiscard]] double tolerance() const noexcept { return tolerance_; }
    [[nodiscard]] const MaxwellOperator& op() const noexcept { return *op_; }

    /// Unchecked solve on packed vectors (hot path).
    void solve_packed(std::span<const double> rhs, std::span<double> out) const;

    /// ||(I - alpha M)u - rhs||_H / ||rhs||_H over the active rows.
    [[nodiscard]] double relative_residual(const FieldState& u, const FieldState& rhs) const;

private:
    struct Banded;
    struct SparseDirect;

    std::shared_ptr<const MaxwellOperator> op_;
    double alpha_;
    double tolerance_;
    std::shared_ptr<const Banded> banded_;
    std::shared_ptr<const SparseDirect> sparse_;
};

/// Solves (I - alpha M)u = rhs and verifies the residual against the
/// solver tolerance.
FieldState solve_shifted(const ShiftedSolver& solver, const FieldState& rhs);

inline constexpr std::size_t kMaxDenseUnknowns = 2000;

/// e^{tM} by dense scaling-and-squaring; oracle for small grids only.
class Semigroup {
public:
    explicit Semigroup(const MaxwellOperator& op);

    [[nodiscard]] FieldState apply(const FieldState& u, double t) const;

private:
    GridPtr grid_;
    std::vector<std::size_t> active_;
    Eigen::MatrixXd generator_;
};

FieldState semigroup_apply(const MaxwellOperator& op, const FieldState& u, double t);

}  // namespace stomax
