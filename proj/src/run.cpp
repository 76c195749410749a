#include "stomax/run.hpp"

#include <Eigen/Core>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <ostream>
#include <thread>

#include "stomax/error.hpp"

namespace stomax {

namespace {

using Row = std::vector<std::string>;

std::string num(double v) { return format_number(v); }

std::string one_line(std::string s) {
    for (auto& c : s) {
        if (c == '\n' || c == '\r') c = ' ';
        if (c == '"') c = '\'';
    }
    return s;
}

class Artifacts {
public:
    explicit Artifacts(const ExperimentConfig& cfg) : cfg_(cfg), dir_(cfg.output_dir) {}

    /// Buffered until write_all so that compute failures leave no partial tables.
    void csv(const std::string& name, const Row& header, const std::vector<Row>& rows) {
        std::ostringstream out;
        out << "# seed = " << cfg_.seed << '\n';
        for (const auto& [k, v] : describe_config(cfg_)) out << "# " << k << " = " << v << '\n';
        write_row(out, header);
        for (const auto& r : rows) write_row(out, r);
        tables_.emplace_back(name, out.str());
    }

    void write_all() const {
        for (const auto& [name, text] : tables_) {
            std::ofstream out = open(name);
            out << text;
            finish(out, name);
        }
    }

    void meta(const std::vector<std::pair<std::string, std::string>>& results, double wall_seconds,
              unsigned threads) const {
        std::ofstream out = open("meta.txt");
        out << "seed = " << cfg_.seed << '\n';
        out << "kind = " << cfg_.kind << '\n';
        out << "stomax_version = " << kVersion << '\n';
        out << "eigen_version = " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION
            << '\n';
#ifdef __VERSION__
        out << "compiler = " << __VERSION__ << '\n';
#endif
        out << "threads = " << threads << '\n';
        out << "wall_time_s = " << num(wall_seconds) << '\n';
        out << "\n[config]\n";
        for (const auto& [k, v] : describe_config(cfg_)) out << k << " = " << v << '\n';
        out << "\n[results]\n";
        for (const auto& [k, v] : results) out << k << " = " << v << '\n';
        finish(out, "meta.txt");
    }

private:
    std::ofstream open(const std::string& name) const {
        std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
        if (!out) throw std::ios_base::failure("cannot open '" + (dir_ / name).string() + "' for writing");
        return out;
    }
    void finish(std::ofstream& out, const std::string& name) const {
        out.flush();
        if (!out) throw std::ios_base::failure("write to '" + (dir_ / name).string() + "' failed");
    }
    static void write_row(std::ostream& out, const Row& r) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
        out << '\n';
    }

    const ExperimentConfig& cfg_;
    std::filesystem::path dir_;
    std::vector<std::pair<std::string, std::string>> tables_;
};

using Results = std::vector<std::pair<std::string, std::string>>;

Results run_convergence(const ExperimentConfig& cfg, const Problem& p, Artifacts& out) {
    ConvergenceReport r = convergence_study(p, run_settings(cfg), cfg.convergence);
    std::vector<Row> ladder, report;
    for (std::size_t i = 0; i < r.tau_ladder.size(); ++i) {
        ladder.push_back({num(r.tau_ladder[i]), num(r.ms_errors[i]), num(r.std_errs[i])});
        const std::size_t steps = cfg.convergence.finest_steps / r.factors[i];
        const bool in_fit = i < r.fit_points;
        report.push_back({num(r.tau_ladder[i]), num(r.ms_errors[i]), num(r.std_errs[i]), std::to_string(r.factors[i]),
                          std::to_string(steps), in_fit ? "1" : "0"});
    }
    out.csv("ladder.csv", {"tau", "ms_error", "std_err"}, ladder);
    out.csv("report.csv", {"tau", "ms_error", "std_err", "factor", "num_steps", "in_fit"}, report);
    return {{"fitted_order", num(r.fitted_order)},
            {"fitted_constant", num(r.fitted_constant)},
            {"confidence_halfwidth", num(r.confidence_halfwidth)},
            {"fit_points", std::to_string(r.fit_points)},
            {"degenerate", r.degenerate ? "true" : "false"},
            {"monotone", r.monotone ? "true" : "false"},
            {"reference_rms", num(r.reference_rms)},
            {"num_samples", std::to_string(r.num_samples)}};
}

Results run_energy(const ExperimentConfig& cfg, const Problem& p, Artifacts& out) {
    const EnergyTrace r = energy_trace(p, run_settings(cfg), EnergyConfig{cfg.steps, cfg.store_stride});
    std::vector<Row> trace, report;
    for (std::size_t i = 0; i < r.times.size(); ++i) {
        trace.push_back({num(r.times[i]), num(r.mean_energy[i]), num(r.sample_std[i])});
        report.push_back({num(r.times[i]), num(r.mean_energy[i]), num(r.std_err[i]),
                          num(r.initial_energy + r.times[i] * r.predicted_rate)});
    }
    out.csv("energy_trace.csv", {"time", "mean_energy", "sample_std"}, trace);
    out.csv("report.csv", {"time", "mean_energy", "std_err", "predicted_mean"}, report);
    return {{"model", r.model},
            {"predicted_rate", num(r.predicted_rate)},
            {"fitted_slope", num(r.fitted_slope)},
            {"initial_energy", num(r.initial_energy)},
            {"oracle_at_T", num(r.oracle_at_T)},
            {"mean_energy_at_T", num(r.mean_energy.back())},
            {"z_score_at_T", num(r.z_score_at_T)},
            {"num_samples", std::to_string(r.num_samples)}};
}

Results run_holder(const ExperimentConfig& cfg, const Problem& p, Artifacts& out) {
    const HolderReport r = holder_probe(p, run_settings(cfg), cfg.holder);
    std::vector<Row> report;
    for (std::size_t i = 0; i < r.lags.size(); ++i) {
        report.push_back({num(r.lags[i]), num(r.mean_sq_h[i]), num(r.se_h[i]), num(r.mean_sq_dm[i]), num(r.se_dm[i])});
    }
    out.csv("report.csv", {"lag", "mean_sq_h", "se_h", "mean_sq_dm", "se_dm"}, report);
    return {{"slope_h", num(r.slope_h)}, {"slope_dm", num(r.slope_dm)}, {"num_samples", std::to_string(r.num_samples)}};
}

Results run_truncation(const ExperimentConfig& cfg, const Problem& p, Artifacts& out) {
    const TruncationReport r = truncation_probe(p, run_settings(cfg), cfg.truncation);
    std::vector<Row> report;
    for (std::size_t i = 0; i < r.taus.size(); ++i) {
        report.push_back({num(r.taus[i]), num(r.ms_delta[i]), num(r.ms_delta_se[i]), num(r.cond_mean[i]),
                          num(r.cond_mean_se[i]), num(r.cond_mean_unbiased[i]), num(r.cond_mean_unbiased_se[i])});
    }
    out.csv("report.csv",
            {"tau", "ms_delta", "ms_delta_se", "cond_mean", "cond_mean_se", "cond_mean_unbiased",
             "cond_mean_unbiased_se"},
            report);
    return {{"slope_ms", num(r.slope_ms)},
            {"slope_cond_mean", num(r.slope_cond_mean)},
            {"slope_cond_mean_unbiased", num(r.slope_cond_mean_unbiased)},
            {"outer_samples", std::to_string(r.outer_samples)},
            {"inner_samples", std::to_string(r.inner_samples)}};
}

Results run_stability(const ExperimentConfig& cfg, const Problem& p, Artifacts& out) {
    const StabilityReport r =
        stability_sweep(p, run_settings(cfg), StabilityConfig{cfg.steps, cfg.store_stride, cfg.stability_powers});
    Row header{"time"};
    for (const int q : r.powers) header.push_back("moment_p" + std::to_string(q));
    std::vector<Row> report;
    for (std::size_t i = 0; i < r.times.size(); ++i) {
        Row row{num(r.times[i])};
        for (std::size_t k = 0; k < r.powers.size(); ++k) row.push_back(num(r.moments[k][i]));
        report.push_back(std::move(row));
    }
    out.csv("report.csv", header, report);
    Results res;
    for (std::size_t k = 0; k < r.powers.size(); ++k) {
        const std::string s = "_p" + std::to_string(r.powers[k]);
        res.emplace_back("initial" + s, num(r.initial[k]));
        res.emplace_back("maximum" + s, num(r.maximum[k]));
        res.emplace_back("bounded" + s, r.bounded[k] ? "true" : "false");
    }
    res.emplace_back("num_samples", std::to_string(r.num_samples));
    return res;
}

Results run_single(const ExperimentConfig& cfg, const Problem& p, Artifacts& out) {
    const TimeGrid tg(cfg.horizon, cfg.steps);
    const Stepper stepper(p.op, p.drift, p.diffusion, cfg.scheme, tg.tau());
    const auto path = sample_path(p.noise, tg, cfg.seed, 0);
    const Trajectory traj = integrate(p.u0, tg, stepper, PathIncrements(path), cfg.store_stride);
    std::vector<Row> report;
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
        const std::size_t n = traj.stored_steps[i];
        const int iters = n == 0 ? 0 : traj.picard_iterations[n - 1];
        const double res = n == 0 ? 0.0 : traj.picard_residuals[n - 1];
        report.push_back({num(tg.time(n)), num(energy(traj.states[i], *p.medium)),
                          num(graph_norm(*p.op, traj.states[i], 1)), std::to_string(iters), num(res)});
    }
    out.csv("report.csv", {"time", "energy", "graph_norm", "picard_iterations", "picard_residual"}, report);
    int max_iters = 0;
    for (const int it : traj.picard_iterations) max_iters = std::max(max_iters, it);
    return {{"initial_energy", num(energy(traj.initial(), *p.medium))},
            {"final_energy", num(energy(traj.final_state(), *p.medium))},
            {"max_picard_iterations", std::to_string(max_iters)},
            {"contraction_number", num(stepper.contraction_number())}};
}

}  // namespace

RunResult classify_failure(const std::string& stage, std::exception_ptr error) {
    int code = kExitNumerical;
    std::string cls = "unknown";
    std::string message = "unknown failure";
    try {
        std::rethrow_exception(error);
    } catch (const ConfigError& e) {
        code = kExitConfig, cls = "ConfigError", message = e.what();
    } catch (const StructuralError& e) {
        code = kExitConfig, cls = "StructuralError", message = e.what();
    } catch (const CapabilityError& e) {
        code = kExitConfig, cls = "CapabilityError", message = e.what();
    } catch (const StepError& e) {
        code = kExitNumerical, cls = "StepError", message = e.what();
    } catch (const NumericalError& e) {
        code = kExitNumerical, cls = "NumericalError", message = e.what();
    } catch (const std::filesystem::filesystem_error& e) {
        code = kExitIo, cls = "IoError", message = e.what();
    } catch (const std::ios_base::failure& e) {
        code = kExitIo, cls = "IoError", message = e.what();
    } catch (const std::exception& e) {
        cls = "InternalError", message = e.what();
    } catch (...) {
    }
    RunResult r;
    r.exit_code = code;
    r.failure_tag = "stomax-failure stage=" + stage + " code=" + std::to_string(code) + " error=" + cls +
                    " message=\"" + one_line(message) + "\"";
    return r;
}

RunResult run(const ExperimentConfig& cfg, std::ostream& log) {
    std::string stage = "validate";
    try {
        validate_config(cfg);
        stage = "setup";
        const Problem problem = build_problem(cfg);
        Artifacts out(cfg);
        const unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
        log << "stomax: " << cfg.kind << " seed=" << cfg.seed << " samples=" << cfg.samples << " threads=" << threads
            << '\n';
        stage = cfg.kind;
        const auto start = std::chrono::steady_clock::now();
        Results results;
        if (cfg.kind == "convergence") {
            results = run_convergence(cfg, problem, out);
        } else if (cfg.kind == "energy") {
            results = run_energy(cfg, problem, out);
        } else if (cfg.kind == "holder") {
            results = run_holder(cfg, problem, out);
        } else if (cfg.kind == "truncation") {
            results = run_truncation(cfg, problem, out);
        } else if (cfg.kind == "stability") {
            results = run_stability(cfg, problem, out);
        } else {
            results = run_single(cfg, problem, out);
        }
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        stage = "write";
        std::filesystem::create_directories(cfg.output_dir);
        out.write_all();
        out.meta(results, wall, threads);
        for (const auto& [k, v] : results) log << "  " << k << " = " << v << '\n';
        return {};
    } catch (...) {
        RunResult r = classify_failure(stage, std::current_exception());
        log << r.failure_tag << '\n';
        return r;
    }
}

}  // namespace stomax
