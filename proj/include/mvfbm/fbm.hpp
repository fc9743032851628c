#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvfbm/errors.hpp"
#include "mvfbm/grid.hpp"
#include "mvfbm/quadrature.hpp"

namespace mvfbm::fbm {

// Values of one fractional Brownian path on a uniform grid, values[0] == 0.
class FbmPath {
public:
    FbmPath(TimeGrid grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
        if (values_.size() != grid_.nodes()) {
            throw DimensionError("fBm path has " + std::to_string(values_.size()) + " values for a grid of " +
                                 std::to_string(grid_.nodes()) + " nodes");
        }
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t k) const noexcept { return values_[k]; }
    double increment(std::size_t k) const noexcept { return values_[k + 1] - values_[k]; }

    friend bool operator==(const FbmPath&, const FbmPath&) = default;

private:
    TimeGrid grid_;
    std::vector<double> values_;
};

// R_H(t, s) = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2
inline double covariance(double t, double s, HurstParameter hurst) {
    if (t < 0.0 || s < 0.0) throw DomainError("fBm covariance needs non-negative times");
    const double two_h = 2.0 * hurst.value();
    return 0.5 * (std::pow(t, two_h) + std::pow(s, two_h) - std::pow(std::abs(t - s), two_h));
}

// Normalizing constant of the Volterra kernel, defined for H > 1/2.
inline double kernel_constant(HurstParameter hurst) {
    const double h = hurst.value();
    if (h <= 0.5) throw UnsupportedError("Volterra kernel constant requires H > 1/2");
    const double beta = std::tgamma(2.0 - 2.0 * h) * std::tgamma(h - 0.5) / std::tgamma(1.5 - h);
    return std::sqrt(h * (2.0 * h - 1.0) / beta);
}

// K_H(t, s) = C_H s^{1/2-H} int_s^t (u-s)^{H-3/2} u^{H-1/2} du, zero for t <= s.
//
// The substitution u = s + v^{1/(H-1/2)} turns the integrand into
// p (s + v^p)^{H-1/2} with p = 1/(H-1/2), which is smooth on the new range.
inline double kernel_kh(double t, double s, HurstParameter hurst, std::size_t quad_nodes = 64) {
    const double h = hurst.value();
    if (h <= 0.5) throw UnsupportedError("Volterra kernel requires H > 1/2");
    if (quad_nodes < 16) throw DomainError("kernel quadrature needs at least 16 nodes");
    if (t <= s) return 0.0;
    if (s <= 0.0) throw DomainError("kernel evaluation needs s > 0");

    const double p = 1.0 / (h - 0.5);
    const double upper = std::pow(t - s, h - 0.5);
    const auto rule = quadrature::gauss_legendre(quad_nodes);
    double integral = 0.0;
    for (std::size_t q = 0; q < rule.size(); ++q) {
        const double v = upper * rule.node[q];
        integral += rule.weight[q] * p * std::pow(s + std::pow(v, p), h - 0.5);
    }
    integral *= upper;
    return kernel_constant(hurst) * std::pow(s, 0.5 - h) * integral;
}

// Increment covariance for lag k: Cov(B_{t_{j+k+1}} - B_{t_{j+k}}, B_{t_{j+1}} - B_{t_j}).
inline double increment_autocovariance(std::size_t lag, double dt, HurstParameter hurst) {
    const double two_h = 2.0 * hurst.value();
    const double k = static_cast<double>(lag);
    const double rho = lag == 0 ? 1.0
                                : 0.5 * (std::pow(k + 1.0, two_h) + std::pow(k - 1.0, two_h) -
                                         2.0 * std::pow(k, two_h));
    return rho * std::pow(dt, two_h);
}

inline constexpr std::size_t kDefaultFactorCap = 8192;

// Lower Cholesky factor of the (Toeplitz) increment covariance on a grid,
// stored as packed rows: row i occupies [i(i+1)/2, i(i+1)/2 + i].
class IncrementFactor {
public:
    IncrementFactor(TimeGrid grid, HurstParameter hurst, std::vector<double> packed)
        : grid_(grid), hurst_(hurst), packed_(std::move(packed)) {
        const std::size_t n = grid_.steps();
        if (packed_.size() != n * (n + 1) / 2) throw DimensionError("packed factor has wrong size");
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    HurstParameter hurst() const noexcept { return hurst_; }
    std::size_t size() const noexcept { return grid_.steps(); }

    std::span<const double> row(std::size_t i) const noexcept {
        return {packed_.data() + i * (i + 1) / 2, i + 1};
    }

    double operator()(std::size_t i, std::size_t j) const noexcept {
        return j > i ? 0.0 : packed_[i * (i + 1) / 2 + j];
    }

private:
    TimeGrid grid_;
    HurstParameter hurst_;
    std::vector<double> packed_;
};

inline IncrementFactor build_increment_factor(const TimeGrid& grid, HurstParameter hurst,
                                              std::size_t cap = kDefaultFactorCap) {
    const std::size_t n = grid.steps();
    if (n > cap) {
        throw UnsupportedError("increment factor limited to " + std::to_string(cap) + " steps, got " +
                               std::to_string(n));
    }
    std::vector<double> gamma(n);
    for (std::size_t k = 0; k < n; ++k) gamma[k] = increment_autocovariance(k, grid.dt(), hurst);

    std::vector<double> packed(n * (n + 1) / 2);
    auto row = [&](std::size_t i) { return packed.data() + i * (i + 1) / 2; };
    for (std::size_t i = 0; i < n; ++i) {
        double* li = row(i);
        for (std::size_t j = 0; j <= i; ++j) {
            const double* lj = row(j);
            double acc = gamma[i - j];
            for (std::size_t k = 0; k < j; ++k) acc -= li[k] * lj[k];
            if (j < i) {
                li[j] = acc / lj[j];
            } else {
                if (!(acc > 0.0)) throw FactorizationError(i, acc);
                li[i] = std::sqrt(acc);
            }
        }
    }
    return IncrementFactor(grid, hurst, std::move(packed));
}

// Exact fBm path: cumulative sums of L z.
inline FbmPath sample_fbm(const IncrementFactor& factor, std::span<const double> standard_normals) {
    const std::size_t n = factor.size();
    if (standard_normals.size() != n) {
        throw DimensionError("sample_fbm expects " + std::to_string(n) + " normals, got " +
                             std::to_string(standard_normals.size()));
    }
    std::vector<double> values(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto li = factor.row(i);
        double inc = 0.0;
        for (std::size_t k = 0; k <= i; ++k) inc += li[k] * standard_normals[k];
        values[i + 1] = values[i] + inc;
    }
    return FbmPath(factor.grid(), std::move(values));
}

// Many paths sharing one factor. `normals` is path-major (path p uses
// normals[p * n, (p + 1) * n)); each path equals sample_fbm on its slice
// bitwise, the row loop just runs across all paths at once.
inline std::vector<FbmPath> sample_fbm_batch(const IncrementFactor& factor, std::span<const double> normals,
                                             std::size_t count) {
    const std::size_t n = factor.size();
    if (normals.size() != n * count) throw DimensionError("sample_fbm_batch expects count * n normals");
    std::vector<double> z(n * count);  // step-major copy
    for (std::size_t p = 0; p < count; ++p) {
        for (std::size_t k = 0; k < n; ++k) z[k * count + p] = normals[p * n + k];
    }
    std::vector<std::vector<double>> values(count, std::vector<double>(n + 1, 0.0));
    std::vector<double> inc(count);
    for (std::size_t i = 0; i < n; ++i) {
        const auto li = factor.row(i);
        std::fill(inc.begin(), inc.end(), 0.0);
        for (std::size_t k = 0; k <= i; ++k) {
            const double l = li[k];
            const double* zk = z.data() + k * count;
            for (std::size_t p = 0; p < count; ++p) inc[p] += l * zk[p];
        }
        for (std::size_t p = 0; p < count; ++p) values[p][i + 1] = values[p][i] + inc[p];
    }
    std::vector<FbmPath> out;
    out.reserve(count);
    for (auto& v : values) out.emplace_back(factor.grid(), std::move(v));
    return out;
}

// Restriction to every `factor`-th node.
inline FbmPath coarsen(const FbmPath& path, std::size_t factor) {
    const TimeGrid coarse = path.grid().coarsened(factor);
    std::vector<double> values(coarse.nodes());
    for (std::size_t k = 0; k < values.size(); ++k) values[k] = path[k * factor];
    return FbmPath(coarse, std::move(values));
}

}  // namespace mvfbm::fbm
