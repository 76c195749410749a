#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "stomax/field.hpp"
#include "stomax/integrator.hpp"
#include "stomax/maxwell.hpp"
#include "stomax/models.hpp"
#include "stomax/noise.hpp"

namespace stomax {

/// "zero", or "mode": E = amplitude sin(k pi x / L) (product of sines in 2D), H = 0.
struct InitialCondition {
    std::string kind{"zero"};
    double amplitude{1.0};
    int mode{1};
};

FieldState make_initial_state(const GridPtr& grid, const InitialCondition& ic);

/// Everything a sample needs; immutable and shared by all workers.
struct Problem {
    GridPtr grid;
    std::shared_ptr<const MediumCoefficients> medium;
    std::shared_ptr<const CurrentModel> model;
    std::shared_ptr<const MaxwellOperator> op;
    std::shared_ptr<const NemytskijDrift> drift;
    std::shared_ptr<const NemytskijDiffusion> diffusion;
    std::shared_ptr<const NoiseSpec> noise;
    FieldState u0;
};

Problem make_problem(std::shared_ptr<const MediumCoefficients> medium, CurrentModel model,
                     std::shared_ptr<const NoiseSpec> noise, FieldState u0);

struct RunSettings {
    SchemeConfig scheme{};
    double horizon{1.0};
    std::size_t num_samples{200};
    std::uint64_t seed{20240601};
    /// 0 = available parallelism.
    unsigned threads{0};
};

/// Runs body(i) for i in [0, count) on a bounded pool.  The first failure in
/// index order is rethrown after all workers stop.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body);

struct LineFit {
    double slope{0.0};
    double intercept{0.0};
};
/// Least squares on (log x, log y).
LineFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

/// Terminal states of one ensemble together with the addresses of their noise.
struct SampleSet {
    std::uint64_t seed{0};
    std::vector<std::uint32_t> samples;
    std::vector<FieldState> states;
};

struct MsError {
    double error{0.0};
    double std_err{0.0};
};

/// sqrt(mean ||ref - coarse||_H^2) with a jackknife standard error.
MsError ms_error_at_T(const SampleSet& reference, const SampleSet& coarse, const MediumCoefficients& med);

/// Jackknife standard error of sqrt(mean(x)).
double jackknife_rms_error(const std::vector<double>& squares);

struct ConvergenceConfig {
    std::size_t finest_steps{4096};
    /// Coarse N = finest_steps / factor.
    std::vector<std::size_t> factors{128, 64, 32, 16, 8, 4};
    bool exclude_finest_from_fit{true};
};

struct ConvergenceReport {
    std::vector<std::size_t> factors;
    std::vector<double> tau_ladder;
    std::vector<double> ms_errors;
    std::vector<double> std_errs;
    double fitted_order{0.0};
    double fitted_constant{0.0};
    /// 1.96 times the jackknife standard error of the fitted slope.
    double confidence_halfwidth{0.0};
    std::size_t fit_points{0};
    bool degenerate{false};
    bool monotone{true};
    double reference_rms{0.0};
    std::size_t num_samples{0};
    std::uint64_t seed{0};
};

ConvergenceReport convergence_study(const Problem& problem, const RunSettings& run, const ConvergenceConfig& cfg);

struct EnergyConfig {
    std::size_t num_steps{256};
    std::size_t store_stride{1};
};

struct EnergyTrace {
    std::string model;
    std::vector<double> times;
    std::vector<double> mean_energy;
    std::vector<double> sample_std;
    std::vector<double> std_err;
    /// sum_j ||B sqrt(q_j) e_j||_H^2
    double predicted_rate{0.0};
    double fitted_slope{0.0};
    double initial_energy{0.0};
    /// H(u_0) + T * predicted_rate
    double oracle_at_T{0.0};
    /// (mean energy at T - oracle) / standard error at T
    double z_score_at_T{0.0};
    std::size_t num_samples{0};
    std::uint64_t seed{0};
};

EnergyTrace energy_trace(const Problem& problem, const RunSettings& run, const EnergyConfig& cfg);

struct HolderConfig {
    std::size_t fine_steps{1024};
    /// Lags in fine steps.
    std::vector<std::size_t> lags{64, 32, 16, 8, 4};
};

struct HolderReport {
    std::vector<double> lags;
    /// E ||u(t+h) - u(t)||^2 in H and in D(M), averaged over start times.
    std::vector<double> mean_sq_h;
    std::vector<double> se_h;
    std::vector<double> mean_sq_dm;
    std::vector<double> se_dm;
    double slope_h{0.0};
    double slope_dm{0.0};
    std::size_t num_samples{0};
    std::uint64_t seed{0};
};

HolderReport holder_probe(const Problem& problem, const RunSettings& run, const HolderConfig& cfg);

struct TruncationConfig {
    std::size_t fine_steps{4096};
    double freeze_time{0.5};
    /// tau = factor * fine tau
    std::vector<std::size_t> factors{512, 256, 128, 64, 32};
    std::size_t inner_samples{64};
};

struct TruncationReport {
    std::vector<double> taus;
    /// E ||delta||^2
    std::vector<double> ms_delta;
    std::vector<double> ms_delta_se;
    /// E ||mean over the inner ensemble of delta||^2
    std::vector<double> cond_mean;
    std::vector<double> cond_mean_se;
    /// The same with the within-ensemble variance removed (U-statistic).
    std::vector<double> cond_mean_unbiased;
    std::vector<double> cond_mean_unbiased_se;
    double slope_ms{0.0};
    double slope_cond_mean{0.0};
    double slope_cond_mean_unbiased{0.0};
    std::size_t outer_samples{0};
    std::size_t inner_samples{0};
    std::uint64_t seed{0};
};

TruncationReport truncation_probe(const Problem& problem, const RunSettings& run, const TruncationConfig& cfg);

struct StabilityConfig {
    std::size_t num_steps{1024};
    std::size_t store_stride{8};
    std::vector<int> powers{2, 4};
};

struct StabilityReport {
    std::vector<int> powers;
    std::vector<double> times;
    /// moments[p][i] = E ||u(t_i)||^p_{D(M)}
    std::vector<std::vector<double>> moments;
    std::vector<double> initial;
    std::vector<double> maximum;
    std::vector<bool> bounded;
    std::size_t num_samples{0};
    std::uint64_t seed{0};
};

StabilityReport stability_sweep(const Problem& problem, const RunSettings& run, const StabilityConfig& cfg);

}  // namespace stomax
