#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "mvfbm/errors.hpp"

namespace mvfbm {

// Hurst index of a fractional Brownian motion, 0 < h < 1.
class HurstParameter {
public:
    explicit HurstParameter(double h) : h_(h) {
        if (!(h > 0.0 && h < 1.0)) {
            throw DomainError("Hurst parameter must satisfy 0 < H < 1, got " + std::to_string(h));
        }
    }

    double value() const noexcept { return h_; }

    // Well-posedness regime of the mean-field theory: H > (sqrt(5) - 1) / 2.
    bool in_analysed_regime() const noexcept { return h_ > regime_threshold(); }

    static double regime_threshold() noexcept { return (std::sqrt(5.0) - 1.0) / 2.0; }

    friend bool operator==(const HurstParameter&, const HurstParameter&) = default;

private:
    double h_;
};

// Uniform grid s = t_0 < t_1 < ... < t_n = t_end.
class TimeGrid {
public:
    TimeGrid(double start, double end, std::size_t steps) : start_(start), end_(end), steps_(steps) {
        if (!(start < end) || !std::isfinite(start) || !std::isfinite(end)) {
            throw DomainError("time grid requires start < end");
        }
        if (steps == 0) {
            throw DomainError("time grid requires at least one step");
        }
    }

    double start() const noexcept { return start_; }
    double end() const noexcept { return end_; }
    std::size_t steps() const noexcept { return steps_; }
    std::size_t nodes() const noexcept { return steps_ + 1; }
    double dt() const noexcept { return (end_ - start_) / static_cast<double>(steps_); }
    double length() const noexcept { return end_ - start_; }

    double node(std::size_t k) const noexcept {
        if (k == steps_) return end_;
        return start_ + static_cast<double>(k) * dt();
    }

    // Same interval with `factor` times as many steps.
    TimeGrid refined(std::size_t factor) const {
        if (factor == 0) throw DomainError("refinement factor must be positive");
        return TimeGrid(start_, end_, steps_ * factor);
    }

    TimeGrid coarsened(std::size_t factor) const {
        if (factor == 0 || steps_ % factor != 0) {
            throw DomainError("grid with " + std::to_string(steps_) + " steps is not divisible by " +
                              std::to_string(factor));
        }
        return TimeGrid(start_, end_, steps_ / factor);
    }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

private:
    double start_;
    double end_;
    std::size_t steps_;
};

}  // namespace mvfbm
