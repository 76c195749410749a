#pragma once

#include <exception>
#include <iosfwd>
#include <string>

#include "stomax/config.hpp"

namespace stomax {

enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 2,
    kExitNumerical = 3,
    kExitIo = 4,
};

inline constexpr const char* kVersion = "0.1.0";

struct RunResult {
    int exit_code{kExitOk};
    /// Empty on success, otherwise one line:
    ///   stomax-failure stage=<stage> code=<n> error=<class> message="<text>"
    std::string failure_tag;
};

/// Maps an in-flight exception to its exit code and failure tag.
RunResult classify_failure(const std::string& stage, std::exception_ptr error);

/// Executes the experiment named by cfg.kind and writes report.csv, meta.txt
/// and the kind's extras (ladder.csv, energy_trace.csv) into cfg.output_dir.
/// Progress goes to `log`; the failure tag, if any, is also written there.
RunResult run(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace stomax
