#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvfbm/errors.hpp"
#include "mvfbm/grid.hpp"
#include "mvfbm/quadrature.hpp"

// Riemann-Liouville integrals, Weyl derivatives and the fractional
// integration-by-parts form of the Young integral, all acting on the
// piecewise-linear interpolant of samples on a uniform grid.
//
// Right-sided operators are defined without the complex phase (-1)^{-alpha},
// so every result is real.
namespace mvfbm::fracalc {

class SampledFunction {
public:
    SampledFunction(TimeGrid grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
        if (values_.size() != grid_.nodes()) {
            throw DimensionError("sampled function has " + std::to_string(values_.size()) +
                                 " values for a grid of " + std::to_string(grid_.nodes()) + " nodes");
        }
        for (double v : values_) {
            if (!std::isfinite(v)) throw DomainError("sampled function values must be finite");
        }
    }

    template <class F>
    static SampledFunction from(const TimeGrid& grid, F&& fn) {
        std::vector<double> values(grid.nodes());
        for (std::size_t k = 0; k < values.size(); ++k) values[k] = fn(grid.node(k));
        return SampledFunction(grid, std::move(values));
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t k) const noexcept { return values_[k]; }

    // Restriction to nodes first..last (inclusive).
    SampledFunction slice(std::size_t first, std::size_t last) const {
        if (first >= last || last > grid_.steps()) throw DomainError("invalid slice bounds");
        TimeGrid sub(grid_.node(first), grid_.node(last), last - first);
        return SampledFunction(sub, std::vector<double>(values_.begin() + static_cast<std::ptrdiff_t>(first),
                                                        values_.begin() + static_cast<std::ptrdiff_t>(last) + 1));
    }

    // Same samples read from the right end: value k is f(t_{n-k}).
    SampledFunction reflected() const {
        return SampledFunction(grid_, std::vector<double>(values_.rbegin(), values_.rend()));
    }

private:
    TimeGrid grid_;
    std::vector<double> values_;
};

class FractionalOrder {
public:
    explicit FractionalOrder(double alpha) : alpha_(alpha) {
        if (!(alpha > 0.0 && alpha <= 1.0)) {
            throw DomainError("fractional order must lie in (0, 1], got " + std::to_string(alpha));
        }
    }
    double value() const noexcept { return alpha_; }

private:
    double alpha_;
};

// Weyl derivative on the nodes where it is defined. The node at the singular
// end (t_0 for left-sided, t_n for right-sided) is excluded.
struct WeylDerivative {
    TimeGrid grid;
    std::size_t first_node;
    std::vector<double> values;
    // Discrete Hoelder exponent of the input and whether it sits within the
    // margin of the order (the Weyl form needs regularity above alpha).
    double holder_estimate;
    bool marginal;

    double at(std::size_t node) const { return values.at(node - first_node); }
};

// Discrete Hoelder exponent from the oscillation at dyadic lags 1, 2, 4, 8, 16:
// slope of log max_k |f(t_{k+L}) - f(t_k)| against log(L dt), clipped to [0, 1].
inline double estimate_holder_exponent(const SampledFunction& f) {
    const auto v = f.values();
    const std::size_t n = f.grid().steps();
    std::vector<double> xs;
    std::vector<double> ys;
    bool any_variation = false;
    for (std::size_t lag = 1; lag <= 16 && (lag == 1 || lag <= n / 4); lag *= 2) {
        double osc = 0.0;
        for (std::size_t k = 0; k + lag <= n; ++k) osc = std::max(osc, std::abs(v[k + lag] - v[k]));
        if (osc > 0.0) {
            any_variation = true;
            xs.push_back(std::log(static_cast<double>(lag) * f.grid().dt()));
            ys.push_back(std::log(osc));
        }
    }
    if (!any_variation || xs.size() < 2) return 1.0;
    const double m = static_cast<double>(xs.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    return std::clamp(slope, 0.0, 1.0);
}

namespace detail {

// I^alpha_{a+} of the piecewise-linear interpolant at every node, using the
// exact product-integration weights on a uniform grid.
inline std::vector<double> rl_left_nodes(std::span<const double> f, double h, double alpha) {
    const std::size_t n = f.size() - 1;
    std::vector<double> pw(n + 2);
    for (std::size_t m = 0; m < pw.size(); ++m) pw[m] = std::pow(static_cast<double>(m), alpha + 1.0);
    const double scale = std::pow(h, alpha) / std::tgamma(alpha + 2.0);

    std::vector<double> out(n + 1, 0.0);
    for (std::size_t k = 1; k <= n; ++k) {
        const double kk = static_cast<double>(k);
        double acc = (pw[k - 1] - (kk - 1.0 - alpha) * std::pow(kk, alpha)) * f[0] + f[k];
        for (std::size_t j = 1; j < k; ++j) {
            const std::size_t d = k - j;
            acc += (pw[d + 1] - 2.0 * pw[d] + pw[d - 1]) * f[j];
        }
        out[k] = scale * acc;
    }
    return out;
}

// Power tables for evaluation points x = t_m + v h: neg[k] = (k+v)^{-alpha},
// pos[k] = (k+v)^{1-alpha}. neg[0] is unused when v == 0.
struct PowerTable {
    std::vector<double> neg;
    std::vector<double> pos;
};

inline PowerTable power_table(std::size_t n, double v, double alpha) {
    PowerTable t;
    t.neg.resize(n + 1);
    t.pos.resize(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        const double u = static_cast<double>(k) + v;
        t.neg[k] = u > 0.0 ? std::pow(u, -alpha) : 0.0;
        t.pos[k] = u > 0.0 ? std::pow(u, 1.0 - alpha) : 0.0;
    }
    return t;
}

// Bracketed part of the left Weyl derivative of the interpolant at
// x = t_m + v h, i.e. D^alpha f(x) * h^alpha * Gamma(1 - alpha).
// Cell integrals of (f(x) - f(y)) (x-y)^{-alpha-1} are taken in closed form;
// on the cell ending at x the interpolant is linear up to x, so its constant
// part vanishes identically and the singular term is dropped.
inline double weyl_left_bracket(std::span<const double> f, std::size_t m, double v, const PowerTable& tab,
                                double alpha) {
    const bool at_node = v == 0.0;
    const double fx = at_node ? f[m] : f[m] + v * (f[m + 1] - f[m]);
    double acc = fx * tab.neg[m];
    const double ratio = alpha / (1.0 - alpha);
    for (std::size_t j = 0; j < m; ++j) {
        const std::size_t k = m - j;  // x - t_j = (k + v) h
        const double df = f[j + 1] - f[j];
        if (!(at_node && k == 1)) {
            const double c = fx - f[j] - df * (static_cast<double>(k) + v);
            acc += c * (tab.neg[k - 1] - tab.neg[k]);
        }
        acc += ratio * df * (tab.pos[k] - tab.pos[k - 1]);
    }
    if (!at_node) acc += ratio * (f[m + 1] - f[m]) * tab.pos[0];
    return acc;
}

inline std::vector<double> reversed(std::span<const double> v) { return {v.rbegin(), v.rend()}; }

}  // namespace detail

inline SampledFunction rl_integral_left(const SampledFunction& f, FractionalOrder alpha) {
    return SampledFunction(f.grid(), detail::rl_left_nodes(f.values(), f.grid().dt(), alpha.value()));
}

inline SampledFunction rl_integral_right(const SampledFunction& f, FractionalOrder alpha) {
    const auto rev = detail::reversed(f.values());
    const auto out = detail::rl_left_nodes(rev, f.grid().dt(), alpha.value());
    return SampledFunction(f.grid(), detail::reversed(out));
}

inline constexpr double kDefaultHolderMargin = 0.05;

inline WeylDerivative weyl_derivative_left(const SampledFunction& f, FractionalOrder alpha) {
    const double a = alpha.value();
    if (a >= 1.0) throw DomainError("Weyl derivative order must lie in (0, 1)");
    const std::size_t n = f.grid().steps();
    const auto tab = detail::power_table(n, 0.0, a);
    const double scale = std::pow(f.grid().dt(), -a) / std::tgamma(1.0 - a);
    WeylDerivative out{f.grid(), 1, std::vector<double>(n), estimate_holder_exponent(f), false};
    out.marginal = out.holder_estimate <= a + kDefaultHolderMargin;
    for (std::size_t m = 1; m <= n; ++m) {
        out.values[m - 1] = scale * detail::weyl_left_bracket(f.values(), m, 0.0, tab, a);
    }
    return out;
}

inline WeylDerivative weyl_derivative_right(const SampledFunction& f, FractionalOrder alpha) {
    auto left = weyl_derivative_left(f.reflected(), alpha);
    std::reverse(left.values.begin(), left.values.end());
    left.first_node = 0;
    return left;
}

struct YoungOptions {
    // Fractional order; when empty it is centred in the admissible window.
    std::optional<double> alpha;
    // Tolerated shortfall of the estimated Hoelder exponents below the
    // required lambda > alpha, mu > 1 - alpha.
    double holder_margin = kDefaultHolderMargin;
};

// Centre of the window (1 - mu, lambda), clipped strictly inside it.
inline double default_young_order(double lambda, double mu) {
    const double lo = 1.0 - mu;
    const double hi = lambda;
    double alpha = 0.5 * (1.0 + lambda - mu);
    if (hi > lo) alpha = std::clamp(alpha, lo + 1e-3 * (hi - lo), hi - 1e-3 * (hi - lo));
    return std::clamp(alpha, 1e-3, 1.0 - 1e-3);
}

// int_a^b f dg = - int_a^b D^alpha_{a+} f(t) D^{1-alpha}_{b-} g_{b-}(t) dt
// with g_{b-} = g - g(b) and phase-free right derivative (the complex phases
// of the two operators multiply to -1). Both derivatives are evaluated exactly
// for the interpolants at tanh-sinh points inside every cell.
inline double young_integral(const SampledFunction& f, const SampledFunction& g, YoungOptions opts = {}) {
    if (!(f.grid() == g.grid())) throw DimensionError("young_integral needs f and g on the same grid");
    const double lambda = estimate_holder_exponent(f);
    const double mu = estimate_holder_exponent(g);
    const double alpha = opts.alpha.value_or(default_young_order(lambda, mu));
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("young_integral order must lie in (0, 1)");
    if (lambda <= alpha - opts.holder_margin) {
        throw RegularityError("integrand Hoelder exponent lambda=" + std::to_string(lambda) +
                              " does not exceed alpha=" + std::to_string(alpha));
    }
    if (mu <= 1.0 - alpha - opts.holder_margin) {
        throw RegularityError("integrator Hoelder exponent mu=" + std::to_string(mu) +
                              " does not exceed 1-alpha=" + std::to_string(1.0 - alpha));
    }

    const std::size_t n = f.grid().steps();
    const auto fv = f.values();
    // reflected g_{b-}: r[k] = g(t_{n-k}) - g(b)
    std::vector<double> r(n + 1);
    for (std::size_t k = 0; k <= n; ++k) r[k] = g[n - k] - g[n];
    const double beta = 1.0 - alpha;

    const auto rule = quadrature::tanh_sinh();
    double total = 0.0;
    for (std::size_t q = 0; q < rule.size(); ++q) {
        const double v = rule.node[q];
        const double w = rule.complement[q];
        const auto left_tab = detail::power_table(n, v, alpha);
        const auto right_tab = detail::power_table(n, w, beta);
        double cell_sum = 0.0;
        for (std::size_t m = 0; m < n; ++m) {
            const double dl = detail::weyl_left_bracket(fv, m, v, left_tab, alpha);
            const double dr = detail::weyl_left_bracket(r, n - 1 - m, w, right_tab, beta);
            cell_sum += dl * dr;
        }
        total += rule.weight[q] * cell_sum;
    }
    // h * h^{-alpha} * h^{-(1-alpha)} == 1
    return -total / (std::tgamma(1.0 - alpha) * std::tgamma(alpha));
}

}  // namespace mvfbm::fracalc
