#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mvfbm {

// Argument outside the mathematical domain of an operation (negative time,
// alpha out of range, non-divisible coarsening factor, ...).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Shapes or lengths of two inputs disagree.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Request outside a supported regime or size cap.
class UnsupportedError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class FactorizationError : public std::runtime_error {
public:
    FactorizationError(std::size_t pivot, double value)
        : std::runtime_error("covariance not positive definite at pivot " + std::to_string(pivot) +
                             " (value " + std::to_string(value) + ")"),
          pivot_(pivot) {}
    std::size_t pivot() const noexcept { return pivot_; }

private:
    std::size_t pivot_;
};

// Sampled function is not regular enough for the requested fractional order.
class RegularityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::size_t particle, std::size_t step)
        : std::runtime_error("non-finite state for particle " + std::to_string(particle) + " at step " +
                             std::to_string(step)),
          particle_(particle), step_(step) {}
    std::size_t particle() const noexcept { return particle_; }
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t particle_;
    std::size_t step_;
};

class ExperimentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mvfbm
