#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvfbm/assignment.hpp"
#include "mvfbm/errors.hpp"
#include "mvfbm/grid.hpp"

namespace mvfbm::measures {

// N equally weighted point masses in R^d, stored point-major.
class EmpiricalMeasure {
public:
    EmpiricalMeasure(std::vector<double> coords, std::size_t dim) : coords_(std::move(coords)), dim_(dim) {
        if (dim_ == 0 || coords_.empty() || coords_.size() % dim_ != 0) {
            throw DimensionError("empirical measure needs N >= 1 points of dimension d >= 1");
        }
        for (double x : coords_) {
            if (!std::isfinite(x)) throw DomainError("empirical measure coordinates must be finite");
        }
        // summed in sorted order so the mean is invariant under relabelling
        mean_.assign(dim_, 0.0);
        std::vector<double> column(size());
        for (std::size_t c = 0; c < dim_; ++c) {
            for (std::size_t i = 0; i < size(); ++i) column[i] = coords_[i * dim_ + c];
            std::sort(column.begin(), column.end());
            double acc = 0.0;
            for (double x : column) acc += x;
            mean_[c] = acc / static_cast<double>(size());
        }
    }

    // One-dimensional convenience constructor.
    static EmpiricalMeasure line(std::vector<double> xs) { return EmpiricalMeasure(std::move(xs), 1); }

    std::size_t size() const noexcept { return coords_.size() / dim_; }
    std::size_t dim() const noexcept { return dim_; }
    std::span<const double> point(std::size_t i) const noexcept { return {coords_.data() + i * dim_, dim_}; }
    std::span<const double> coords() const noexcept { return coords_; }

    // First moment, computed once at construction.
    std::span<const double> mean() const noexcept { return mean_; }

private:
    std::vector<double> coords_;
    std::size_t dim_;
    std::vector<double> mean_;
};

// (1/N) sum_i x_i[coordinate]^power
inline double moment(const EmpiricalMeasure& mu, unsigned power, std::size_t coordinate) {
    if (coordinate >= mu.dim()) throw DimensionError("moment coordinate out of range");
    if (power == 0) throw DomainError("moment power must be positive");
    if (power == 1) return mu.mean()[coordinate];
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double x = mu.point(i)[coordinate];
        double p = x;
        for (unsigned k = 1; k < power; ++k) p *= x;
        acc += p;
    }
    return acc / static_cast<double>(mu.size());
}

// Exact W2 between equal-size one-dimensional empirical measures (sorted pairing).
inline double w2_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    if (mu.dim() != 1 || nu.dim() != 1) {
        throw UnsupportedError("w2_1d needs one-dimensional measures; use w2_assignment");
    }
    if (mu.size() != nu.size()) throw UnsupportedError("w2_1d needs equal sizes; use w2_assignment");
    std::vector<double> x(mu.coords().begin(), mu.coords().end());
    std::vector<double> y(nu.coords().begin(), nu.coords().end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
    return std::sqrt(acc / static_cast<double>(x.size()));
}

enum class AssignmentMode { automatic, exhaustive, hungarian };

inline constexpr std::size_t kAutoExhaustiveLimit = 8;
inline constexpr std::size_t kHungarianCap = 512;

// Exact W2 in any dimension via a minimum-cost perfect matching on squared
// Euclidean costs.
inline double w2_assignment(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                            AssignmentMode mode = AssignmentMode::automatic) {
    if (mu.size() != nu.size() || mu.dim() != nu.dim()) {
        throw UnsupportedError("w2_assignment needs measures of equal size and dimension");
    }
    const std::size_t n = mu.size();
    if (mode == AssignmentMode::automatic) {
        mode = n <= kAutoExhaustiveLimit ? AssignmentMode::exhaustive : AssignmentMode::hungarian;
    }
    if (mode == AssignmentMode::exhaustive && n > assignment::kExhaustiveCap) {
        throw UnsupportedError("exhaustive W2 limited to N <= " + std::to_string(assignment::kExhaustiveCap));
    }
    if (n > kHungarianCap) throw UnsupportedError("assignment W2 limited to N <= 512");

    assignment::CostMatrix cost{n, std::vector<double>(n * n)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double d2 = 0.0;
            for (std::size_t c = 0; c < mu.dim(); ++c) {
                const double d = mu.point(i)[c] - nu.point(j)[c];
                d2 += d * d;
            }
            cost.cost[i * n + j] = d2;
        }
    }
    const auto best =
        mode == AssignmentMode::exhaustive ? assignment::exhaustive(cost) : assignment::hungarian(cost);
    return std::sqrt(std::max(0.0, best.total_cost) / static_cast<double>(n));
}

// N particle paths with d-dimensional states on a common grid.
// Layout: data[(particle * nodes + node) * dim + coordinate].
class PathEnsemble {
public:
    PathEnsemble(TimeGrid grid, std::size_t particles, std::size_t dim)
        : grid_(grid), particles_(particles), dim_(dim), data_(particles * grid.nodes() * dim, 0.0) {
        if (particles == 0 || dim == 0) throw DimensionError("ensemble needs N >= 1 and d >= 1");
    }

    PathEnsemble(TimeGrid grid, std::size_t particles, std::size_t dim, std::vector<double> data)
        : grid_(grid), particles_(particles), dim_(dim), data_(std::move(data)) {
        if (particles == 0 || dim == 0) throw DimensionError("ensemble needs N >= 1 and d >= 1");
        if (data_.size() != particles * grid.nodes() * dim) throw DimensionError("ensemble data has wrong size");
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t particles() const noexcept { return particles_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t nodes() const noexcept { return grid_.nodes(); }

    std::span<double> state(std::size_t particle, std::size_t node) noexcept {
        return {data_.data() + (particle * nodes() + node) * dim_, dim_};
    }
    std::span<const double> state(std::size_t particle, std::size_t node) const noexcept {
        return {data_.data() + (particle * nodes() + node) * dim_, dim_};
    }
    // Whole trajectory of one particle, node-major.
    std::span<const double> path(std::size_t particle) const noexcept {
        return {data_.data() + particle * nodes() * dim_, nodes() * dim_};
    }
    std::span<const double> data() const noexcept { return data_; }

    // Empirical measure of all particles at one node.
    EmpiricalMeasure marginal(std::size_t node) const {
        std::vector<double> pts(particles_ * dim_);
        for (std::size_t i = 0; i < particles_; ++i) {
            const auto s = state(i, node);
            std::copy(s.begin(), s.end(), pts.begin() + static_cast<std::ptrdiff_t>(i * dim_));
        }
        return EmpiricalMeasure(std::move(pts), dim_);
    }

    // Every `factor`-th node.
    PathEnsemble restricted(std::size_t factor) const {
        const TimeGrid coarse = grid_.coarsened(factor);
        PathEnsemble out(coarse, particles_, dim_);
        for (std::size_t i = 0; i < particles_; ++i) {
            for (std::size_t k = 0; k < coarse.nodes(); ++k) {
                const auto s = state(i, k * factor);
                std::copy(s.begin(), s.end(), out.state(i, k).begin());
            }
        }
        return out;
    }

    // First `count` particles.
    PathEnsemble head(std::size_t count) const {
        if (count == 0 || count > particles_) throw DimensionError("head count out of range");
        std::vector<double> d(data_.begin(), data_.begin() + static_cast<std::ptrdiff_t>(count * nodes() * dim_));
        return PathEnsemble(grid_, count, dim_, std::move(d));
    }

    friend bool operator==(const PathEnsemble&, const PathEnsemble&) = default;

private:
    TimeGrid grid_;
    std::size_t particles_;
    std::size_t dim_;
    std::vector<double> data_;
};

// One trajectory: `values` holds nodes * dim entries, node-major.
struct PathView {
    const TimeGrid& grid;
    std::span<const double> values;
    std::size_t dim = 1;

    std::span<const double> at(std::size_t k) const noexcept { return values.subspan(k * dim, dim); }
};

inline constexpr std::size_t kHolderScanCap = 4000;

struct HolderSeminormValue {
    double value = 0.0;
    std::size_t first = 0;   // attaining pair (s index, t index)
    std::size_t second = 0;
    std::size_t stride = 1;  // 1 when every node of the window was scanned
};

namespace detail {

inline double distance(std::span<const double> x, std::span<const double> y) {
    double acc = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) acc += (x[c] - y[c]) * (x[c] - y[c]);
    return std::sqrt(acc);
}

inline void check_beta(double beta) {
    if (!(beta > 0.0 && beta < 1.0)) throw DomainError("Hoelder exponent beta must lie in (0, 1)");
}

// Nodes scanned in window [a, b]: all of them, or a stride subsample that
// always keeps both ends.
inline std::vector<std::size_t> window_nodes(std::size_t a, std::size_t b, std::size_t cap, std::size_t& stride) {
    const std::size_t width = b - a;
    stride = width <= cap ? 1 : (width + cap - 1) / cap;
    std::vector<std::size_t> idx;
    for (std::size_t k = a; k < b; k += stride) idx.push_back(k);
    idx.push_back(b);
    return idx;
}

// Powers (t - s)^{-beta} for every lag on a uniform grid.
inline std::vector<double> lag_weights(const TimeGrid& grid, std::size_t max_lag, double beta) {
    std::vector<double> w(max_lag + 1, 0.0);
    for (std::size_t l = 1; l <= max_lag; ++l) w[l] = std::pow(static_cast<double>(l) * grid.dt(), -beta);
    return w;
}

}  // namespace detail

// sup over node pairs s < t in [a_idx, b_idx] of |phi(t) - phi(s)| / (t - s)^beta.
// Ties keep the lexicographically smallest (s, t).
inline HolderSeminormValue holder_seminorm(const PathView& path, double beta, std::size_t a_idx, std::size_t b_idx,
                                           std::size_t cap = kHolderScanCap) {
    detail::check_beta(beta);
    if (!(a_idx < b_idx) || b_idx > path.grid.steps()) throw DomainError("Hoelder window needs a_idx < b_idx <= n");
    HolderSeminormValue out;
    const auto idx = detail::window_nodes(a_idx, b_idx, cap, out.stride);
    const auto w = detail::lag_weights(path.grid, b_idx - a_idx, beta);
    for (std::size_t p = 0; p < idx.size(); ++p) {
        for (std::size_t q = p + 1; q < idx.size(); ++q) {
            const double r = detail::distance(path.at(idx[q]), path.at(idx[p])) * w[idx[q] - idx[p]];
            if (r > out.value) {
                out.value = r;
                out.first = idx[p];
                out.second = idx[q];
            }
        }
    }
    return out;
}

// max over nodes of |x(t) - y(t)|
inline double sup_norm_distance(const PathView& x, const PathView& y) {
    if (!(x.grid == y.grid) || x.values.size() != y.values.size() || x.dim != y.dim) {
        throw DimensionError("sup_norm_distance needs paths on a common grid");
    }
    double best = 0.0;
    for (std::size_t k = 0; k < x.grid.nodes(); ++k) best = std::max(best, detail::distance(x.at(k), y.at(k)));
    return best;
}

inline PathView particle_path(const PathEnsemble& ens, std::size_t i) { return {ens.grid(), ens.path(i), ens.dim()}; }

// Upper bound on the measure-path distance between the empirical path laws
// of two ensembles, using the index-diagonal coupling:
// sqrt(mean_i ||x_i - y_i||^2_inf) + sqrt(mean_i ||x_i - y_i||^2_beta).
inline double diagonal_path_distance(const PathEnsemble& x, const PathEnsemble& y, double beta,
                                     std::size_t cap = kHolderScanCap) {
    detail::check_beta(beta);
    if (!(x.grid() == y.grid()) || x.particles() != y.particles() || x.dim() != y.dim()) {
        throw DimensionError("diagonal_path_distance needs ensembles of equal shape");
    }
    double sup_sq = 0.0;
    double hol_sq = 0.0;
    std::vector<double> diff(x.nodes() * x.dim());
    for (std::size_t i = 0; i < x.particles(); ++i) {
        const auto px = x.path(i);
        const auto py = y.path(i);
        for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = px[k] - py[k];
        const PathView d{x.grid(), diff, x.dim()};
        double s = 0.0;
        for (std::size_t k = 0; k < x.nodes(); ++k) {
            double a = 0.0;
            for (double v : d.at(k)) a += v * v;
            s = std::max(s, std::sqrt(a));
        }
        const double h = holder_seminorm(d, beta, 0, x.grid().steps(), cap).value;
        sup_sq += s * s;
        hol_sq += h * h;
    }
    const double n = static_cast<double>(x.particles());
    return std::sqrt(sup_sq / n) + std::sqrt(hol_sq / n);
}

// Empirical ||mu||_{2,S,T,beta}: sqrt(mean sup_t |X_t|^2)
// + sup_{s<t} sqrt(mean |X_t - X_s|^2) / (t - s)^beta.
inline double path_measure_norm(const PathEnsemble& ens, double beta, std::size_t cap = kHolderScanCap) {
    detail::check_beta(beta);
    const double n = static_cast<double>(ens.particles());
    double sup_sq = 0.0;
    for (std::size_t i = 0; i < ens.particles(); ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < ens.nodes(); ++k) {
            double a = 0.0;
            for (double v : ens.state(i, k)) a += v * v;
            s = std::max(s, a);
        }
        sup_sq += s;
    }
    std::size_t stride = 1;
    const auto idx = detail::window_nodes(0, ens.grid().steps(), cap, stride);
    const auto w = detail::lag_weights(ens.grid(), ens.grid().steps(), beta);
    double second = 0.0;
    for (std::size_t p = 0; p < idx.size(); ++p) {
        for (std::size_t q = p + 1; q < idx.size(); ++q) {
            double acc = 0.0;
            for (std::size_t i = 0; i < ens.particles(); ++i) {
                const auto xs = ens.state(i, idx[p]);
                const auto xt = ens.state(i, idx[q]);
                for (std::size_t c = 0; c < ens.dim(); ++c) acc += (xt[c] - xs[c]) * (xt[c] - xs[c]);
            }
            second = std::max(second, std::sqrt(acc / n) * w[idx[q] - idx[p]]);
        }
    }
    return std::sqrt(sup_sq / n) + second;
}

}  // namespace mvfbm::measures
