#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stomax {

/// Inputs that do not belong together: different grids, wrong value counts.
class StructuralError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A request the implementation refuses to serve at this size or setting.
class CapabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// NaN/Inf values, singular factorizations, non-convergent iterations.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Picard iteration failed to reach its tolerance within the iteration budget.
class StepError : public NumericalError {
public:
    StepError(const std::string& what, std::size_t step_index, double residual)
        : NumericalError(what), step_index_(step_index), residual_(residual) {}

    [[nodiscard]] std::size_t step_index() const noexcept { return step_index_; }
    [[nodiscard]] double residual() const noexcept { return residual_; }

private:
    std::size_t step_index_;
    double residual_;
};

}  // namespace stomax
