#include "stomax/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>

#include "stomax/error.hpp"

namespace stomax {

namespace {

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double weighted_dot(std::span<const double> w, std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * a[k] * b[k];
    return s;
}

}  // namespace

void SchemeConfig::validate() const {
    if (!(theta >= 0.0 && theta <= 1.0)) {
        throw ConfigError("scheme.theta = " + std::to_string(theta) + " outside [0, 1]");
    }
    if (!(picard_tol > 0.0)) throw ConfigError("scheme.picard_tol must be > 0");
    if (picard_max_iters < 1) throw ConfigError("scheme.picard_max_iters must be >= 1");
}

void PathIncrements::field_packed(std::size_t n, std::span<double> out) const {
    const NoiseSpec& spec = *path_.spec();
    const Grid& grid = *spec.grid();
    const std::size_t ne = grid.num_e_nodes();
    const std::size_t nh = grid.num_h_nodes();
    if (out.size() != ne + nh) throw StructuralError("increment field: packed size mismatch");
    std::fill(out.begin(), out.end(), 0.0);
    const auto q = spec.eigenvalues();
    for (int j = 0; j < spec.num_modes(); ++j) {
        const double c = std::sqrt(q[static_cast<std::size_t>(j)]) * path_.increment(n, static_cast<std::size_t>(j));
        if (c == 0.0) continue;
        const auto ev = spec.e_values(j);
        const auto hv = spec.h_values(j);
        for (std::size_t k = 0; k < ne; ++k) out[k] += c * ev[k];
        for (std::size_t k = 0; k < nh; ++k) out[ne + k] += c * hv[k];
    }
}

void NoIncrements::field_packed(std::size_t, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
}

Stepper::Stepper(std::shared_ptr<const MaxwellOperator> op, std::shared_ptr<const NemytskijDrift> drift,
                 std::shared_ptr<const NemytskijDiffusion> diff, SchemeConfig cfg, double tau)
    : op_(std::move(op)),
      drift_(std::move(drift)),
      diff_(std::move(diff)),
      cfg_(cfg),
      tau_(tau),
      solver_((cfg.validate(), op_), cfg.theta * tau) {
    if (!drift_ || !diff_) throw StructuralError("stepper: drift and diffusion are required");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw StructuralError("stepper: tau must be positive");
    const Grid& grid = *op_->grid();
    if (!same_grid(grid, *drift_->medium().grid()) || !same_grid(grid, *diff_->medium().grid())) {
        throw StructuralError("stepper: operator, drift and diffusion live on different grids");
    }
    const MediumCoefficients& med = op_->medium();
    weights_.resize(grid.num_e_nodes() + grid.num_h_nodes());
    for (std::size_t k = 0; k < grid.num_e_nodes(); ++k) weights_[k] = med.epsilon()[k] * grid.e_weight(k);
    for (std::size_t k = 0; k < grid.num_h_nodes(); ++k) {
        weights_[grid.num_e_nodes() + k] = med.mu()[k] * grid.h_weight(k);
    }
    contraction_ = drift_->model().zero_drift ? 0.0
                                              : tau * cfg.theta * drift_lipschitz_constant(drift_->model(), med);
    if (contraction_ >= 1.0) {
        std::clog << "warning: tau*theta*C_F = " << contraction_
                  << " >= 1; Picard contraction is not guaranteed\n";
    }
}

double Stepper::norm_packed(std::span<const double> x) const noexcept {
    return std::sqrt(weighted_dot(weights_, x, x));
}

StepInfo Stepper::step_packed(std::span<const double> u, double t, std::span<const double> dw, std::span<double> out,
                              Workspace& ws) const {
    const std::size_t n = weights_.size();
    if (u.size() != n || dw.size() != n || out.size() != n) throw StructuralError("step: packed size mismatch");
    ws.rhs.resize(n);
    ws.mu.resize(n);
    ws.fu.resize(n);
    ws.bdw.resize(n);
    ws.v.resize(n);
    ws.w.resize(n);
    ws.tmp.resize(n);

    const double theta = cfg_.theta;
    const bool has_drift = !drift_->model().zero_drift;

    diff_->apply_packed(t, u, dw, ws.bdw);
    for (std::size_t k = 0; k < n; ++k) ws.rhs[k] = u[k] + ws.bdw[k];
    if (theta < 1.0) {
        op_->apply_packed(u, ws.mu);
        if (has_drift) {
            drift_->eval_packed(t, u, ws.fu);
        } else {
            std::fill(ws.fu.begin(), ws.fu.end(), 0.0);
        }
        const double c = (1.0 - theta) * tau_;
        for (std::size_t k = 0; k < n; ++k) ws.rhs[k] += c * (ws.mu[k] + ws.fu[k]);
    }
    if (!all_finite(ws.rhs)) throw NumericalError("step: non-finite right-hand side");

    StepInfo info;
    if (!has_drift || theta == 0.0) {
        solver_.solve_packed(ws.rhs, out);
        info.iterations = 1;
        if (!all_finite(out)) throw NumericalError("step: non-finite solve result");
        return info;
    }

    const double t_next = t + tau_;
    const double c = theta * tau_;
    std::copy(u.begin(), u.end(), ws.v.begin());
    double residual = 0.0;
    for (int m = 1; m <= cfg_.picard_max_iters; ++m) {
        drift_->eval_packed(t_next, ws.v, ws.fu);
        for (std::size_t k = 0; k < n; ++k) ws.tmp[k] = ws.rhs[k] + c * ws.fu[k];
        solver_.solve_packed(ws.tmp, ws.w);
        if (!all_finite(ws.w)) throw NumericalError("step: non-finite Picard iterate");
        for (std::size_t k = 0; k < n; ++k) ws.tmp[k] = ws.w[k] - ws.v[k];
        const double change = norm_packed(ws.tmp);
        const double scale = std::max(1.0, norm_packed(ws.v));
        residual = change / scale;
        std::swap(ws.v, ws.w);
        if (change <= cfg_.picard_tol * scale) {
            std::copy(ws.v.begin(), ws.v.end(), out.begin());
            info.iterations = m;
            info.residual = residual;
            return info;
        }
    }
    throw StepError("step: Picard iteration did not converge in " + std::to_string(cfg_.picard_max_iters) +
                        " iterations (residual " + std::to_string(residual) + ")",
                    0, residual);
}

FieldState Stepper::step(const FieldState& u, double t, const FieldState& dw, StepInfo* info) const {
    require_same_grid(*u.grid(), *op_->grid(), "step");
    require_same_grid(*dw.grid(), *op_->grid(), "step increment");
    const auto up = u.packed();
    const auto dp = dw.packed();
    std::vector<double> out(up.size());
    Workspace ws;
    const StepInfo i = step_packed(up, t, dp, out, ws);
    if (info) *info = i;
    return FieldState::from_packed(op_->grid(), out);
}

FieldState step(const FieldState& u_n, double t_n, double tau, const SchemeConfig& cfg,
                std::shared_ptr<const MaxwellOperator> op, std::shared_ptr<const NemytskijDrift> drift,
                std::shared_ptr<const NemytskijDiffusion> diff, const FieldState& dw) {
    const Stepper stepper(std::move(op), std::move(drift), std::move(diff), cfg, tau);
    return stepper.step(u_n, t_n, dw);
}

namespace {

void check_run(const FieldState& u0, const TimeGrid& tg, const Stepper& stepper, const IncrementSource& inc) {
    require_same_grid(*u0.grid(), *stepper.op().grid(), "integrate");
    if (u0.has_boundary_violation()) {
        throw StructuralError("integrate: initial state has nonzero tangential E on the boundary");
    }
    if (inc.num_steps() != tg.num_steps()) {
        throw StructuralError("integrate: increment source has " + std::to_string(inc.num_steps()) +
                              " steps, time grid has " + std::to_string(tg.num_steps()));
    }
    if (const TimeGrid* pg = inc.time_grid(); pg && !(*pg == tg)) {
        throw StructuralError("integrate: noise path time grid differs from the integration grid");
    }
    if (std::abs(stepper.tau() - tg.tau()) > 1e-14 * tg.tau()) {
        throw StructuralError("integrate: stepper tau differs from the time grid step");
    }
}

template <class Visit>
void run_steps(const FieldState& u0, const TimeGrid& tg, const Stepper& stepper, const IncrementSource& inc,
               const StepObserver* observer, Visit&& visit) {
    check_run(u0, tg, stepper, inc);
    std::vector<double> u = u0.packed();
    std::vector<double> next(u.size());
    std::vector<double> dw(u.size());
    Stepper::Workspace ws;
    for (std::size_t n = 0; n < tg.num_steps(); ++n) {
        if (observer && *observer) (*observer)(n);
        inc.field_packed(n, dw);
        StepInfo info;
        try {
            info = stepper.step_packed(u, tg.time(n), dw, next, ws);
        } catch (const StepError& e) {
            throw StepError(std::string(e.what()) + " at step " + std::to_string(n), n, e.residual());
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " at step " + std::to_string(n));
        }
        u.swap(next);
        visit(n + 1, u, info);
    }
}

}  // namespace

Trajectory integrate(const FieldState& u0, const TimeGrid& time_grid, const Stepper& stepper,
                     const IncrementSource& increments, std::size_t store_stride, const StepObserver& observer) {
    if (store_stride == 0) throw StructuralError("integrate: store_stride must be >= 1");
    const std::size_t steps = time_grid.num_steps();
    const std::size_t budget_stride = ((steps + 1) * u0.size() + kFullStorageBudget - 1) / kFullStorageBudget;
    const std::size_t stride = std::max(store_stride, budget_stride);

    Trajectory traj{time_grid, {0}, {u0}, {}, {}};
    traj.picard_iterations.reserve(steps);
    traj.picard_residuals.reserve(steps);
    run_steps(u0, time_grid, stepper, increments, &observer,
              [&](std::size_t n, const std::vector<double>& u, const StepInfo& info) {
                  traj.picard_iterations.push_back(info.iterations);
                  traj.picard_residuals.push_back(info.residual);
                  if (n % stride == 0 || n == steps) {
                      traj.stored_steps.push_back(n);
                      traj.states.push_back(FieldState::from_packed(u0.grid(), u));
                  }
              });
    return traj;
}

FieldState integrate_final(const FieldState& u0, const TimeGrid& time_grid, const Stepper& stepper,
                           const IncrementSource& increments) {
    std::vector<double> last;
    bool any = false;
    run_steps(u0, time_grid, stepper, increments, nullptr,
              [&](std::size_t n, const std::vector<double>& u, const StepInfo&) {
                  if (n == time_grid.num_steps()) {
                      last = u;
                      any = true;
                  }
              });
    if (!any) return u0;
    return FieldState::from_packed(u0.grid(), last);
}

void integrate_visit(const FieldState& u0, const TimeGrid& time_grid, const Stepper& stepper,
                     const IncrementSource& increments,
                     const std::function<void(std::size_t, std::span<const double>)>& visit) {
    const std::vector<double> start = u0.packed();
    check_run(u0, time_grid, stepper, increments);
    visit(0, start);
    run_steps(u0, time_grid, stepper, increments, nullptr,
              [&](std::size_t n, const std::vector<double>& u, const StepInfo&) { visit(n, u); });
}

EnergyLedger discrete_energy_identity_probe(const FieldState& u_n, const FieldState& u_np1, double t_n,
                                            const Stepper& stepper, const NemytskijDrift& drift,
                                            const NemytskijDiffusion& diff, const FieldState& dw) {
    const Grid& grid = *stepper.op().grid();
    require_same_grid(*u_n.grid(), grid, "energy identity");
    require_same_grid(*u_np1.grid(), grid, "energy identity");
    require_same_grid(*dw.grid(), grid, "energy identity increment");
    const MediumCoefficients& med = stepper.op().medium();
    const double tau = stepper.tau();
    const double theta = stepper.config().theta;

    const double e0 = energy(u_n, med);
    const double e1 = energy(u_np1, med);
    const FieldState jump = u_np1 - u_n;
    EnergyLedger out;
    out.lhs = 0.5 * (e1 - e0) + 0.5 * energy(jump, med);

    const FieldState f1 = eval_F(t_n + tau, u_np1, drift);
    double rhs = tau * theta * inner_product(f1, u_np1, med);
    if (theta < 1.0) {
        const FieldState explicit_part = apply_M(stepper.op(), u_n) + eval_F(t_n, u_n, drift);
        rhs += (1.0 - theta) * tau * inner_product(explicit_part, u_np1, med);
    }
    rhs += inner_product(eval_B_apply(t_n, u_n, diff, dw), u_np1, med);
    out.rhs = rhs;
    out.defect = std::abs(out.lhs - out.rhs);
    out.scale = std::max(e0, e1);
    return out;
}

}  // namespace stomax
