#include "stomax/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>
#include <optional>
#include <thread>

#include "stomax/error.hpp"

namespace stomax {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Squared H-norm on packed vectors.
class PackedEnergy {
public:
    explicit PackedEnergy(const MediumCoefficients& med) {
        const Grid& g = *med.grid();
        w_.resize(g.num_e_nodes() + g.num_h_nodes());
        for (std::size_t k = 0; k < g.num_e_nodes(); ++k) w_[k] = med.epsilon()[k] * g.e_weight(k);
        for (std::size_t k = 0; k < g.num_h_nodes(); ++k) w_[g.num_e_nodes() + k] = med.mu()[k] * g.h_weight(k);
    }
    [[nodiscard]] double operator()(std::span<const double> x) const noexcept {
        double s = 0.0;
        for (std::size_t k = 0; k < w_.size(); ++k) s += w_[k] * x[k] * x[k];
        return s;
    }

private:
    std::vector<double> w_;
};

struct MeanSe {
    double mean{0.0};
    double se{0.0};
    double sd{0.0};
};

MeanSe mean_se(const std::vector<double>& x) {
    MeanSe r;
    const double n = static_cast<double>(x.size());
    if (x.empty()) return r;
    for (double v : x) r.mean += v;
    r.mean /= n;
    if (x.size() < 2) return r;
    double ss = 0.0;
    for (double v : x) ss += (v - r.mean) * (v - r.mean);
    r.sd = std::sqrt(ss / (n - 1.0));
    r.se = r.sd / std::sqrt(n);
    return r;
}

bool all_positive(const std::vector<double>& y) {
    return !y.empty() && std::all_of(y.begin(), y.end(), [](double v) { return v > 0.0 && std::isfinite(v); });
}

double slope_or_nan(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() < 2 || !all_positive(y)) return kNaN;
    return fit_loglog(x, y).slope;
}

std::string describe_failure(const std::exception& e) { return e.what(); }

}  // namespace

FieldState make_initial_state(const GridPtr& grid, const InitialCondition& ic) {
    if (ic.kind == "zero") return FieldState::zeros(grid);
    if (ic.kind != "mode") throw ConfigError("initial.kind: unknown kind '" + ic.kind + "' (zero, mode)");
    if (ic.mode < 1) throw ConfigError("initial.mode must be >= 1");
    std::vector<double> e(grid->num_e_nodes(), 0.0);
    for (std::size_t k = 0; k < e.size(); ++k) {
        if (grid->is_boundary_e(k)) continue;
        const Point p = grid->e_position(k);
        double v = ic.amplitude * std::sin(ic.mode * std::numbers::pi * p.x / grid->length(0));
        if (grid->dimension() == 2) v *= std::sin(ic.mode * std::numbers::pi * p.y / grid->length(1));
        e[k] = v;
    }
    return FieldState(grid, std::move(e), std::vector<double>(grid->num_h_nodes(), 0.0));
}

Problem make_problem(std::shared_ptr<const MediumCoefficients> medium, CurrentModel model,
                     std::shared_ptr<const NoiseSpec> noise, FieldState u0) {
    if (!medium || !noise) throw StructuralError("problem: medium and noise are required");
    require_same_grid(*medium->grid(), *noise->grid(), "problem noise");
    require_same_grid(*medium->grid(), *u0.grid(), "problem initial state");
    if (u0.has_boundary_violation()) throw StructuralError("problem: initial state violates n x E = 0");
    auto m = std::make_shared<const CurrentModel>(std::move(model));
    return Problem{medium->grid(),
                   medium,
                   m,
                   std::make_shared<const MaxwellOperator>(medium),
                   std::make_shared<const NemytskijDrift>(m, medium),
                   std::make_shared<const NemytskijDiffusion>(m, medium),
                   std::move(noise),
                   std::move(u0)};
}

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body) {
    if (count == 0) return;
    unsigned n = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
    n = static_cast<unsigned>(std::min<std::size_t>(n, count));
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::mutex mtx;
    std::size_t failed_index = count;
    std::exception_ptr failure;
    auto worker = [&] {
        for (;;) {
            if (stop.load(std::memory_order_relaxed)) return;
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(mtx);
                if (i < failed_index) {
                    failed_index = i;
                    failure = std::current_exception();
                }
                stop = true;
            }
        }
    };
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n);
        for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
}

LineFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw StructuralError("fit_loglog: need at least two matching points");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += std::log(x[i]);
        sy += std::log(y[i]);
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(y[i]) - my);
    }
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    return f;
}

double jackknife_rms_error(const std::vector<double>& squares) {
    const std::size_t n = squares.size();
    if (n < 2) return 0.0;
    double total = 0.0;
    for (double v : squares) total += v;
    std::vector<double> loo(n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        loo[i] = std::sqrt(std::max(0.0, (total - squares[i]) / static_cast<double>(n - 1)));
        mean += loo[i];
    }
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : loo) ss += (v - mean) * (v - mean);
    return std::sqrt(static_cast<double>(n - 1) / static_cast<double>(n) * ss);
}

MsError ms_error_at_T(const SampleSet& reference, const SampleSet& coarse, const MediumCoefficients& med) {
    if (reference.seed != coarse.seed) throw StructuralError("ms_error_at_T: master seeds differ");
    if (reference.samples != coarse.samples) throw StructuralError("ms_error_at_T: sample indices differ");
    if (reference.states.size() != reference.samples.size() || coarse.states.size() != coarse.samples.size()) {
        throw StructuralError("ms_error_at_T: one state per sample index is required");
    }
    if (reference.states.empty()) throw StructuralError("ms_error_at_T: empty sample set");
    std::vector<double> sq(reference.states.size());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = energy(reference.states[i] - coarse.states[i], med);
    double mean = 0.0;
    for (double v : sq) mean += v;
    mean /= static_cast<double>(sq.size());
    return {std::sqrt(mean), jackknife_rms_error(sq)};
}

ConvergenceReport convergence_study(const Problem& problem, const RunSettings& run, const ConvergenceConfig& cfg) {
    run.scheme.validate();
    if (run.num_samples < 2) throw ConfigError("convergence: at least two samples are required");
    if (cfg.factors.empty()) throw ConfigError("convergence: empty ladder");
    std::vector<std::size_t> factors = cfg.factors;
    std::sort(factors.begin(), factors.end(), std::greater<>());
    for (std::size_t f : factors) {
        if (f < 2 || cfg.finest_steps % f != 0) {
            throw ConfigError("convergence: ladder factor " + std::to_string(f) + " does not divide finest N = " +
                              std::to_string(cfg.finest_steps) + " (or is < 2)");
        }
    }
    const TimeGrid fine_grid(run.horizon, cfg.finest_steps);
    const Stepper fine(problem.op, problem.drift, problem.diffusion, run.scheme, fine_grid.tau());
    std::vector<Stepper> coarse;
    coarse.reserve(factors.size());
    for (std::size_t f : factors) {
        coarse.emplace_back(problem.op, problem.drift, problem.diffusion, run.scheme,
                            TimeGrid(run.horizon, cfg.finest_steps / f).tau());
    }

    const std::size_t ns = run.num_samples;
    SampleSet ref{run.seed, {}, {}};
    ref.samples.resize(ns);
    std::iota(ref.samples.begin(), ref.samples.end(), 0u);
    std::vector<SampleSet> levels(factors.size(), SampleSet{run.seed, ref.samples, {}});
    std::vector<std::optional<FieldState>> ref_states(ns);
    std::vector<std::vector<std::optional<FieldState>>> level_states(factors.size(),
                                                                     std::vector<std::optional<FieldState>>(ns));

    parallel_for(ns, run.threads, [&](std::size_t s) {
        const auto path = sample_path(problem.noise, fine_grid, run.seed, static_cast<std::uint32_t>(s));
        std::size_t level = factors.size();
        try {
            ref_states[s] = integrate_final(problem.u0, fine_grid, fine, PathIncrements(path));
            for (level = 0; level < factors.size(); ++level) {
                const auto cp = coarsen_path(path, factors[level]);
                level_states[level][s] = integrate_final(problem.u0, cp.time_grid(), coarse[level], PathIncrements(cp));
            }
        } catch (const NumericalError& e) {
            const double tau = level < factors.size() ? fine_grid.tau() * static_cast<double>(factors[level])
                                                      : fine_grid.tau();
            throw NumericalError("convergence study failed at sample " + std::to_string(s) + ", tau " +
                                 std::to_string(tau) + ": " + describe_failure(e));
        }
    });

    for (auto& st : ref_states) ref.states.push_back(std::move(*st));
    ConvergenceReport rep;
    rep.factors = factors;
    rep.num_samples = ns;
    rep.seed = run.seed;
    double ref_sq = 0.0;
    for (const auto& st : ref.states) ref_sq += energy(st, *problem.medium);
    rep.reference_rms = std::sqrt(ref_sq / static_cast<double>(ns));

    std::vector<std::vector<double>> sq(factors.size(), std::vector<double>(ns));
    for (std::size_t l = 0; l < factors.size(); ++l) {
        for (auto& st : level_states[l]) levels[l].states.push_back(std::move(*st));
        const MsError err = ms_error_at_T(ref, levels[l], *problem.medium);
        rep.tau_ladder.push_back(fine_grid.tau() * static_cast<double>(factors[l]));
        rep.ms_errors.push_back(err.error);
        rep.std_errs.push_back(err.std_err);
        for (std::size_t s = 0; s < ns; ++s) sq[l][s] = energy(ref.states[s] - levels[l].states[s], *problem.medium);
    }
    for (std::size_t l = 1; l < factors.size(); ++l) {
        if (rep.ms_errors[l] > rep.ms_errors[l - 1] + 2.0 * std::max(rep.std_errs[l], rep.std_errs[l - 1])) {
            rep.monotone = false;
        }
    }

    std::size_t fit_n = factors.size();
    if (cfg.exclude_finest_from_fit && fit_n >= 3) --fit_n;
    rep.fit_points = fit_n;
    const std::vector<double> fx(rep.tau_ladder.begin(), rep.tau_ladder.begin() + static_cast<long>(fit_n));
    const std::vector<double> fy(rep.ms_errors.begin(), rep.ms_errors.begin() + static_cast<long>(fit_n));
    const double floor = 1e-13 * std::max(1.0, rep.reference_rms);
    rep.degenerate = fit_n < 2 || std::any_of(fy.begin(), fy.end(), [&](double v) { return !(v > floor); });
    if (rep.degenerate) {
        rep.fitted_order = kNaN;
        rep.fitted_constant = kNaN;
        rep.confidence_halfwidth = kNaN;
        return rep;
    }
    const LineFit fit = fit_loglog(fx, fy);
    rep.fitted_order = fit.slope;
    rep.fitted_constant = std::exp(fit.intercept);

    std::vector<double> totals(fit_n, 0.0);
    for (std::size_t l = 0; l < fit_n; ++l) {
        for (double v : sq[l]) totals[l] += v;
    }
    std::vector<double> loo(ns);
    std::vector<double> y(fit_n);
    for (std::size_t s = 0; s < ns; ++s) {
        for (std::size_t l = 0; l < fit_n; ++l) {
            y[l] = std::sqrt(std::max(0.0, (totals[l] - sq[l][s]) / static_cast<double>(ns - 1)));
        }
        loo[s] = all_positive(y) ? fit_loglog(fx, y).slope : kNaN;
    }
    const MeanSe m = mean_se(loo);
    const double n = static_cast<double>(ns);
    const double jk_se = m.sd * (n - 1.0) / std::sqrt(n);
    rep.confidence_halfwidth = 1.96 * jk_se;
    return rep;
}

EnergyTrace energy_trace(const Problem& problem, const RunSettings& run, const EnergyConfig& cfg) {
    run.scheme.validate();
    if (!problem.model->additive || !problem.model->zero_drift) {
        throw ConfigError("energy experiment requires a model with F = 0 and constant B (got '" +
                          problem.model->name + "')");
    }
    if (cfg.num_steps < 1 || cfg.store_stride < 1) throw ConfigError("energy: num_steps and store_stride must be >= 1");
    if (run.num_samples < 2) throw ConfigError("energy: at least two samples are required");
    const TimeGrid tg(run.horizon, cfg.num_steps);
    const Stepper stepper(problem.op, problem.drift, problem.diffusion, run.scheme, tg.tau());
    const PackedEnergy en(*problem.medium);

    std::vector<std::size_t> stored;
    for (std::size_t n = 0; n <= cfg.num_steps; ++n) {
        if (n % cfg.store_stride == 0 || n == cfg.num_steps) stored.push_back(n);
    }
    const std::size_t ns = run.num_samples;
    std::vector<std::vector<double>> values(ns);
    parallel_for(ns, run.threads, [&](std::size_t s) {
        const auto path = sample_path(problem.noise, tg, run.seed, static_cast<std::uint32_t>(s));
        auto& out = values[s];
        out.reserve(stored.size());
        std::size_t next = 0;
        integrate_visit(problem.u0, tg, stepper, PathIncrements(path), [&](std::size_t n, std::span<const double> u) {
            if (next < stored.size() && stored[next] == n) {
                out.push_back(en(u));
                ++next;
            }
        });
    });

    EnergyTrace tr;
    tr.model = problem.model->name;
    tr.num_samples = ns;
    tr.seed = run.seed;
    std::vector<double> column(ns);
    for (std::size_t i = 0; i < stored.size(); ++i) {
        for (std::size_t s = 0; s < ns; ++s) column[s] = values[s][i];
        const MeanSe m = mean_se(column);
        tr.times.push_back(tg.time(stored[i]));
        tr.mean_energy.push_back(m.mean);
        tr.sample_std.push_back(m.sd);
        tr.std_err.push_back(m.se);
    }
    tr.initial_energy = energy(problem.u0, *problem.medium);
    tr.predicted_rate = diffusion_hs_squared(*problem.diffusion, *problem.noise, 0.0, problem.u0);
    tr.oracle_at_T = tr.initial_energy + run.horizon * tr.predicted_rate;
    const double diff = tr.mean_energy.back() - tr.oracle_at_T;
    const double se = tr.std_err.back();
    tr.z_score_at_T = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff));

    const double n = static_cast<double>(tr.times.size());
    const double mt = std::accumulate(tr.times.begin(), tr.times.end(), 0.0) / n;
    const double me = std::accumulate(tr.mean_energy.begin(), tr.mean_energy.end(), 0.0) / n;
    double stt = 0.0, ste = 0.0;
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
        stt += (tr.times[i] - mt) * (tr.times[i] - mt);
        ste += (tr.times[i] - mt) * (tr.mean_energy[i] - me);
    }
    tr.fitted_slope = stt > 0.0 ? ste / stt : 0.0;
    return tr;
}

HolderReport holder_probe(const Problem& problem, const RunSettings& run, const HolderConfig& cfg) {
    run.scheme.validate();
    if (cfg.lags.empty()) throw ConfigError("holder: empty lag set");
    if (run.num_samples < 2) throw ConfigError("holder: at least two samples are required");
    for (std::size_t lag : cfg.lags) {
        if (lag > cfg.fine_steps) {
            throw StructuralError("holder: lag of " + std::to_string(lag) + " steps exceeds the horizon of " +
                                  std::to_string(cfg.fine_steps) + " steps");
        }
    }
    const TimeGrid tg(run.horizon, cfg.fine_steps);
    const Stepper stepper(problem.op, problem.drift, problem.diffusion, run.scheme, tg.tau());
    const PackedEnergy en(*problem.medium);
    const std::size_t dim = problem.u0.size();
    const std::size_t nl = cfg.lags.size();
    const std::size_t ns = run.num_samples;
    std::vector<std::vector<double>> per_h(nl, std::vector<double>(ns)), per_dm(nl, std::vector<double>(ns));

    parallel_for(ns, run.threads, [&](std::size_t s) {
        const auto path = sample_path(problem.noise, tg, run.seed, static_cast<std::uint32_t>(s));
        const std::size_t count = cfg.fine_steps + 1;
        std::vector<double> states(count * dim), images(count * dim);
        integrate_visit(problem.u0, tg, stepper, PathIncrements(path), [&](std::size_t n, std::span<const double> u) {
            std::copy(u.begin(), u.end(), states.begin() + static_cast<long>(n * dim));
            problem.op->apply_packed(u, std::span<double>(images).subspan(n * dim, dim));
        });
        std::vector<double> d(dim), md(dim);
        for (std::size_t l = 0; l < nl; ++l) {
            const std::size_t lag = cfg.lags[l];
            double acc_h = 0.0, acc_m = 0.0;
            const std::size_t starts = count - lag;
            for (std::size_t n = 0; n < starts; ++n) {
                for (std::size_t k = 0; k < dim; ++k) {
                    d[k] = states[(n + lag) * dim + k] - states[n * dim + k];
                    md[k] = images[(n + lag) * dim + k] - images[n * dim + k];
                }
                const double eh = en(d);
                acc_h += eh;
                acc_m += eh + en(md);
            }
            per_h[l][s] = acc_h / static_cast<double>(starts);
            per_dm[l][s] = acc_m / static_cast<double>(starts);
        }
    });

    HolderReport rep;
    rep.num_samples = ns;
    rep.seed = run.seed;
    std::vector<double> fx, fh, fm;
    for (std::size_t l = 0; l < nl; ++l) {
        const MeanSe h = mean_se(per_h[l]);
        const MeanSe m = mean_se(per_dm[l]);
        const double lag = tg.tau() * static_cast<double>(cfg.lags[l]);
        rep.lags.push_back(lag);
        rep.mean_sq_h.push_back(h.mean);
        rep.se_h.push_back(h.se);
        rep.mean_sq_dm.push_back(m.mean);
        rep.se_dm.push_back(m.se);
        if (cfg.lags[l] > 0) {
            fx.push_back(lag);
            fh.push_back(h.mean);
            fm.push_back(m.mean);
        }
    }
    rep.slope_h = slope_or_nan(fx, fh);
    rep.slope_dm = slope_or_nan(fx, fm);
    return rep;
}

TruncationReport truncation_probe(const Problem& problem, const RunSettings& run, const TruncationConfig& cfg) {
    run.scheme.validate();
    if (problem.op->num_unknowns() > kMaxDenseUnknowns) {
        throw CapabilityError("truncation: " + std::to_string(problem.op->num_unknowns()) +
                              " unknowns exceed the small-grid limit of " + std::to_string(kMaxDenseUnknowns));
    }
    if (problem.model->time_dependent) {
        throw CapabilityError("truncation: continuations restart the clock; time-dependent models are not supported");
    }
    if (cfg.factors.empty()) throw ConfigError("truncation: empty ladder");
    if (cfg.inner_samples < 2) throw ConfigError("truncation: at least two inner samples are required");
    if (run.num_samples < 2) throw ConfigError("truncation: at least two outer samples are required");
    std::vector<std::size_t> factors = cfg.factors;
    std::sort(factors.begin(), factors.end(), std::greater<>());
    if (factors.back() < 1) throw ConfigError("truncation: factors must be >= 1");
    const double tau_f = run.horizon / static_cast<double>(cfg.fine_steps);
    const auto freeze_steps = static_cast<std::size_t>(std::llround(cfg.freeze_time / tau_f));
    const std::size_t span_steps = factors.front();
    if (cfg.freeze_time < 0.0 || freeze_steps + span_steps > cfg.fine_steps) {
        throw ConfigError("truncation: freeze time plus the largest tau exceeds the horizon");
    }
    const Stepper fine(problem.op, problem.drift, problem.diffusion, run.scheme, tau_f);
    const PackedEnergy en(*problem.medium);
    const double theta = run.scheme.theta;
    const double t_freeze = tau_f * static_cast<double>(freeze_steps);
    const std::size_t dim = problem.u0.size();
    const std::size_t nl = factors.size();
    const std::size_t outer = run.num_samples;
    const std::size_t inner = cfg.inner_samples;
    const std::size_t modes = static_cast<std::size_t>(problem.noise->num_modes());
    const TimeGrid span_grid(tau_f * static_cast<double>(span_steps), span_steps);

    std::vector<std::vector<double>> ms(nl, std::vector<double>(outer)), naive(nl, std::vector<double>(outer)),
        unbiased(nl, std::vector<double>(outer));

    parallel_for(outer, run.threads, [&](std::size_t o) {
        FieldState ut = problem.u0;
        if (freeze_steps > 0) {
            const TimeGrid head(t_freeze, freeze_steps);
            const auto p = sample_path(problem.noise, head, run.seed, static_cast<std::uint32_t>(o), 0);
            ut = integrate_final(problem.u0, head, fine, PathIncrements(p));
        }
        const std::vector<double> u0p = ut.packed();
        std::vector<double> mu0(dim), fu0(dim);
        problem.op->apply_packed(u0p, mu0);
        problem.drift->eval_packed(t_freeze, u0p, fu0);

        std::vector<std::vector<double>> sums(nl, std::vector<double>(dim, 0.0));
        std::vector<double> sum_sq(nl, 0.0);
        std::vector<std::vector<double>> captured(nl, std::vector<double>(dim));
        std::vector<double> mu1(dim), fu1(dim), bdw(dim), delta(dim), beta(modes);
        for (std::size_t k = 0; k < inner; ++k) {
            const auto cont = sample_path(problem.noise, span_grid, run.seed, static_cast<std::uint32_t>(o),
                                          static_cast<std::uint32_t>(1 + k));
            integrate_visit(ut, span_grid, fine, PathIncrements(cont), [&](std::size_t n, std::span<const double> u) {
                for (std::size_t l = 0; l < nl; ++l) {
                    if (factors[l] == n) std::copy(u.begin(), u.end(), captured[l].begin());
                }
            });
            for (std::size_t l = 0; l < nl; ++l) {
                const std::size_t f = factors[l];
                const double tau = tau_f * static_cast<double>(f);
                std::fill(beta.begin(), beta.end(), 0.0);
                for (std::size_t n = 0; n < f; ++n) {
                    for (std::size_t j = 0; j < modes; ++j) beta[j] += cont.increment(n, j);
                }
                const auto dw = noise_field(*problem.noise, beta).packed();
                problem.diffusion->apply_packed(t_freeze, u0p, dw, bdw);
                const auto& u1 = captured[l];
                problem.op->apply_packed(u1, mu1);
                problem.drift->eval_packed(t_freeze + tau, u1, fu1);
                for (std::size_t i = 0; i < dim; ++i) {
                    delta[i] = u1[i] - u0p[i] - tau * (theta * mu1[i] + (1.0 - theta) * mu0[i]) -
                               tau * (theta * fu1[i] + (1.0 - theta) * fu0[i]) - bdw[i];
                    sums[l][i] += delta[i];
                }
                sum_sq[l] += en(delta);
            }
        }
        const double kk = static_cast<double>(inner);
        for (std::size_t l = 0; l < nl; ++l) {
            const double total = en(sums[l]);
            ms[l][o] = sum_sq[l] / kk;
            naive[l][o] = total / (kk * kk);
            unbiased[l][o] = (total - sum_sq[l]) / (kk * (kk - 1.0));
        }
    });

    TruncationReport rep;
    rep.outer_samples = outer;
    rep.inner_samples = inner;
    rep.seed = run.seed;
    for (std::size_t l = 0; l < nl; ++l) {
        rep.taus.push_back(tau_f * static_cast<double>(factors[l]));
        const MeanSe a = mean_se(ms[l]);
        const MeanSe b = mean_se(naive[l]);
        const MeanSe c = mean_se(unbiased[l]);
        rep.ms_delta.push_back(a.mean);
        rep.ms_delta_se.push_back(a.se);
        rep.cond_mean.push_back(b.mean);
        rep.cond_mean_se.push_back(b.se);
        rep.cond_mean_unbiased.push_back(c.mean);
        rep.cond_mean_unbiased_se.push_back(c.se);
    }
    rep.slope_ms = slope_or_nan(rep.taus, rep.ms_delta);
    rep.slope_cond_mean = slope_or_nan(rep.taus, rep.cond_mean);
    rep.slope_cond_mean_unbiased = slope_or_nan(rep.taus, rep.cond_mean_unbiased);
    return rep;
}

StabilityReport stability_sweep(const Problem& problem, const RunSettings& run, const StabilityConfig& cfg) {
    run.scheme.validate();
    if (cfg.powers.empty()) throw ConfigError("stability: no moment powers given");
    for (int p : cfg.powers) {
        if (p != 2 && p != 4) throw ConfigError("stability: power " + std::to_string(p) + " not in {2, 4}");
    }
    if (cfg.num_steps < 1 || cfg.store_stride < 1) throw ConfigError("stability: num_steps and store_stride must be >= 1");
    const TimeGrid tg(run.horizon, cfg.num_steps);
    const Stepper stepper(problem.op, problem.drift, problem.diffusion, run.scheme, tg.tau());
    const PackedEnergy en(*problem.medium);
    std::vector<std::size_t> stored;
    for (std::size_t n = 0; n <= cfg.num_steps; ++n) {
        if (n % cfg.store_stride == 0 || n == cfg.num_steps) stored.push_back(n);
    }
    const std::size_t ns = run.num_samples;
    const std::size_t dim = problem.u0.size();
    std::vector<std::vector<double>> g2(ns);
    parallel_for(ns, run.threads, [&](std::size_t s) {
        const auto path = sample_path(problem.noise, tg, run.seed, static_cast<std::uint32_t>(s));
        auto& out = g2[s];
        out.reserve(stored.size());
        std::vector<double> mu(dim);
        std::size_t next = 0;
        integrate_visit(problem.u0, tg, stepper, PathIncrements(path), [&](std::size_t n, std::span<const double> u) {
            if (next < stored.size() && stored[next] == n) {
                problem.op->apply_packed(u, mu);
                out.push_back(en(u) + en(mu));
                ++next;
            }
        });
    });

    StabilityReport rep;
    rep.powers = cfg.powers;
    rep.num_samples = ns;
    rep.seed = run.seed;
    for (std::size_t n : stored) rep.times.push_back(tg.time(n));
    for (int p : cfg.powers) {
        std::vector<double> trace(stored.size(), 0.0);
        for (std::size_t i = 0; i < stored.size(); ++i) {
            for (std::size_t s = 0; s < ns; ++s) trace[i] += std::pow(g2[s][i], 0.5 * p);
            trace[i] /= static_cast<double>(ns);
        }
        const double init = trace.front();
        const double mx = *std::max_element(trace.begin(), trace.end());
        rep.moments.push_back(std::move(trace));
        rep.initial.push_back(init);
        rep.maximum.push_back(mx);
        rep.bounded.push_back(mx <= 10.0 * (1.0 + init));
    }
    return rep;
}

}  // namespace stomax
