#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "stomax/field.hpp"
#include "stomax/maxwell.hpp"
#include "stomax/models.hpp"
#include "stomax/noise.hpp"

namespace stomax {

struct SchemeConfig {
    /// 1 is the semi-implicit Euler scheme, 1/2 the midpoint variant.
    double theta{1.0};
    double picard_tol{1e-10};
    int picard_max_iters{50};

    void validate() const;
};

/// Supplies Delta W^{n+1} as a field at E and H nodes.
class IncrementSource {
public:
    virtual ~IncrementSource() = default;
    [[nodiscard]] virtual std::size_t num_steps() const = 0;
    /// Time grid the increments were drawn on, if known.
    [[nodiscard]] virtual const TimeGrid* time_grid() const { return nullptr; }
    /// Packed [E..., H...] increment field for step n (t_n -> t_{n+1}).
    virtual void field_packed(std::size_t n, std::span<double> out) const = 0;
};

class PathIncrements final : public IncrementSource {
public:
    explicit PathIncrements(const WienerPath& path) : path_(path) {}
    [[nodiscard]] std::size_t num_steps() const override { return path_.num_steps(); }
    [[nodiscard]] const TimeGrid* time_grid() const override { return &path_.time_grid(); }
    void field_packed(std::size_t n, std::span<double> out) const override;

private:
    const WienerPath& path_;
};

/// Zero increments (deterministic runs).
class NoIncrements final : public IncrementSource {
public:
    explicit NoIncrements(std::size_t num_steps) : steps_(num_steps) {}
    [[nodiscard]] std::size_t num_steps() const override { return steps_; }
    void field_packed(std::size_t, std::span<double> out) const override;

private:
    std::size_t steps_;
};

struct StepInfo {
    int iterations{0};
    double residual{0.0};
};

/// One fixed-tau theta step
///   u+ = u + tau[theta M u+ + (1-theta) M u] + tau[theta F(t+tau, u+) + (1-theta) F(t, u)] + B(t, u) dW
/// with the shifted operator (I - theta tau M) factored once.  The implicit
/// drift is resolved by Picard iteration started from u; diffusion is always
/// evaluated at (t, u).
class Stepper {
public:
    Stepper(std::shared_ptr<const MaxwellOperator> op, std::shared_ptr<const NemytskijDrift> drift,
            std::shared_ptr<const NemytskijDiffusion> diff, SchemeConfig cfg, double tau);

    [[nodiscard]] double tau() const noexcept { return tau_; }
    [[nodiscard]] const SchemeConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] const MaxwellOperator& op() const noexcept { return *op_; }
    [[nodiscard]] const ShiftedSolver& solver() const noexcept { return solver_; }
    /// tau theta C_F; Picard contracts when this is below 1.
    [[nodiscard]] double contraction_number() const noexcept { return contraction_; }

    struct Workspace {
        std::vector<double> rhs, mu, fu, bdw, v, w, tmp;
    };

    /// Throws StepError (with step index 0; callers re-annotate) on Picard failure.
    StepInfo step_packed(std::span<const double> u, double t, std::span<const double> dw, std::span<double> out,
                         Workspace& ws) const;

    [[nodiscard]] FieldState step(const FieldState& u, double t, const FieldState& dw, StepInfo* info = nullptr) const;

    /// ||x||_H on packed vectors.
    [[nodiscard]] double norm_packed(std::span<const double> x) const noexcept;

private:
    std::shared_ptr<const MaxwellOperator> op_;
    std::shared_ptr<const NemytskijDrift> drift_;
    std::shared_ptr<const NemytskijDiffusion> diff_;
    SchemeConfig cfg_;
    double tau_;
    ShiftedSolver solver_;
    std::vector<double> weights_;
    double contraction_;
};

FieldState step(const FieldState& u_n, double t_n, double tau, const SchemeConfig& cfg,
                std::shared_ptr<const MaxwellOperator> op, std::shared_ptr<const NemytskijDrift> drift,
                std::shared_ptr<const NemytskijDiffusion> diff, const FieldState& dw);

struct Trajectory {
    TimeGrid time_grid;
    std::vector<std::size_t> stored_steps;
    std::vector<FieldState> states;
    std::vector<int> picard_iterations;
    std::vector<double> picard_residuals;

    [[nodiscard]] const FieldState& initial() const { return states.front(); }
    [[nodiscard]] const FieldState& final_state() const { return states.back(); }
};

inline constexpr std::size_t kFullStorageBudget = 10'000'000;

/// Called before step n is computed.
using StepObserver = std::function<void(std::size_t n)>;

/// Runs `time_grid.num_steps()` steps.  States at multiples of the stride and
/// the final state are stored; the stride is raised when N * unknowns would
/// exceed the storage budget.
Trajectory integrate(const FieldState& u0, const TimeGrid& time_grid, const Stepper& stepper,
                     const IncrementSource& increments, std::size_t store_stride = 1,
                     const StepObserver& observer = {});

/// Final state only, no storage.
FieldState integrate_final(const FieldState& u0, const TimeGrid& time_grid, const Stepper& stepper,
                           const IncrementSource& increments);

/// Streams every state u^0..u^N (packed) to `visit(n, state)`.
void integrate_visit(const FieldState& u0, const TimeGrid& time_grid, const Stepper& stepper,
                     const IncrementSource& increments,
                     const std::function<void(std::size_t, std::span<const double>)>& visit);

/// Both sides of the identity obtained by testing one theta step with u^{n+1}:
///   1/2(|u+|^2 - |u|^2) + 1/2 |u+ - u|^2
///     = tau theta <F(t+tau,u+), u+> + (1-theta) tau <M u + F(t,u), u+> + <B(t,u) dW, u+>
struct EnergyLedger {
    double lhs{0.0};
    double rhs{0.0};
    double defect{0.0};
    /// max(|u|^2, |u+|^2), for relative comparisons.
    double scale{0.0};
};

EnergyLedger discrete_energy_identity_probe(const FieldState& u_n, const FieldState& u_np1, double t_n,
                                            const Stepper& stepper, const NemytskijDrift& drift,
                                            const NemytskijDiffusion& diff, const FieldState& dw);

}  // namespace stomax
