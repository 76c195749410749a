#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "stomax/experiments.hpp"

namespace stomax {

/// Experiment kinds: convergence, energy, holder, truncation, stability, single-run.
struct ExperimentConfig {
    std::string kind{"single-run"};
    std::size_t samples{200};
    std::uint64_t seed{20240601};
    unsigned threads{0};

    int dimension{1};
    int cells_x{64};
    int cells_y{64};
    double length_x{1.0};
    double length_y{1.0};

    double epsilon{8.0};
    double mu{8.0};
    /// Per-node coefficients; overrides epsilon/mu when set.
    std::string medium_file;

    std::string model{"tanh-saturable"};
    ModelParameters model_params{{"drift", 1.0}, {"noise", 2.0}, {"offset", 1.0}};

    int noise_modes{16};
    double noise_decay{6.0};
    double noise_scale{1.0};

    SchemeConfig scheme{};

    double horizon{1.0};
    /// single-run, energy and stability step counts.
    std::size_t steps{1024};
    std::size_t store_stride{1};
    ConvergenceConfig convergence{};
    HolderConfig holder{};
    TruncationConfig truncation{};
    std::vector<int> stability_powers{2, 4};

    InitialCondition initial{"mode", 1.0, 1};

    std::string output_dir{"out"};
};

inline const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> kinds{"convergence", "energy", "holder", "truncation", "stability",
                                                "single-run"};
    return kinds;
}

/// Documented defaults; a few depend on the kind (see config/schema.md).
ExperimentConfig default_config(const std::string& kind);

/// Flat `[section]` / `key = value` format with `#` comments.  Every
/// violation is collected and reported in one ConfigError.  Relative file
/// paths are resolved against `base_dir`.
ExperimentConfig parse_config_text(const std::string& text, const std::string& base_dir = ".");
/// Throws std::ios_base::failure when the file cannot be read.
ExperimentConfig parse_config(const std::string& path);

/// Range checks that do not depend on the source text (also run after overrides).
void validate_config(const ExperimentConfig& cfg);

/// Canonical `section.key = value` echo of a fully resolved config.
std::vector<std::pair<std::string, std::string>> describe_config(const ExperimentConfig& cfg);

Problem build_problem(const ExperimentConfig& cfg);
RunSettings run_settings(const ExperimentConfig& cfg);

/// 17 significant digits, `.` decimal, locale independent.
std::string format_number(double value);

}  // namespace stomax
