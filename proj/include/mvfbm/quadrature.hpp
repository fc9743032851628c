#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "mvfbm/errors.hpp"

namespace mvfbm::quadrature {

// Nodes and weights on the unit interval. `complement[i] == 1 - node[i]`,
// stored separately so rules that cluster at 1 keep full precision there.
struct UnitRule {
    std::vector<double> node;
    std::vector<double> complement;
    std::vector<double> weight;

    std::size_t size() const noexcept { return node.size(); }
};

// Gauss-Legendre rule mapped to [0, 1]. Newton iteration on P_n.
inline UnitRule gauss_legendre(std::size_t n) {
    if (n == 0) throw DomainError("Gauss-Legendre rule needs at least one node");
    UnitRule rule;
    rule.node.resize(n);
    rule.complement.resize(n);
    rule.weight.resize(n);
    const double pi = std::numbers::pi;
    for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0;
            double p1 = x;
            for (std::size_t k = 2; k <= n; ++k) {
                const double kk = static_cast<double>(k);
                const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
                p0 = p1;
                p1 = p2;
            }
            dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the larger root of the symmetric pair
        rule.node[i] = 0.5 * (1.0 - x);
        rule.complement[i] = 0.5 * (1.0 + x);
        rule.weight[i] = 0.5 * w;
        rule.node[n - 1 - i] = 0.5 * (1.0 + x);
        rule.complement[n - 1 - i] = 0.5 * (1.0 - x);
        rule.weight[n - 1 - i] = 0.5 * w;
    }
    return rule;
}

// Double-exponential (tanh-sinh) rule on [0, 1] with step `h` over
// tau in [-tau_max, tau_max]. Handles algebraic endpoint singularities.
inline UnitRule tanh_sinh(double h = 1.0 / 8.0, double tau_max = 3.5) {
    UnitRule rule;
    const double half_pi = std::numbers::pi / 2.0;
    const auto steps = static_cast<long>(std::floor(tau_max / h));
    for (long j = -steps; j <= steps; ++j) {
        const double tau = static_cast<double>(j) * h;
        const double arg = half_pi * std::sinh(tau);
        // 1 / (1 + e^{2 arg}) and its mirror, without cancellation
        const double lower = 1.0 / (1.0 + std::exp(2.0 * arg));
        const double upper = 1.0 / (1.0 + std::exp(-2.0 * arg));
        if (lower <= 0.0 || upper <= 0.0) continue;
        const double c = std::cosh(arg);
        rule.node.push_back(upper);
        rule.complement.push_back(lower);
        rule.weight.push_back(h * half_pi * std::cosh(tau) / (2.0 * c * c));
    }
    return rule;
}

}  // namespace mvfbm::quadrature
