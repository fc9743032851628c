#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvfbm/errors.hpp"
#include "mvfbm/measures.hpp"

namespace mvfbm::model {

using measures::EmpiricalMeasure;

// Coefficients (b, sigma) of a mean-field SDE, both evaluated at a state and an
// empirical measure. drift writes d values, diffusion a row-major d x d matrix.
// Both must be pure so they can be evaluated concurrently.
struct MeanFieldCoefficients {
    using Drift = std::function<void(std::span<const double>, const EmpiricalMeasure&, std::span<double>)>;
    using Diffusion = std::function<void(std::span<const double>, const EmpiricalMeasure&, std::span<double>)>;

    std::string name;
    std::size_t dim = 1;
    Drift drift;
    Diffusion diffusion;
    std::optional<double> lipschitz_k;
    // True when the coefficients read the measure argument at all.
    bool measure_dependent = true;
};

// b(x, mu) = x + int z mu(dz)
inline double example_drift(double x, const EmpiricalMeasure& mu) {
    if (mu.dim() != 1) throw DimensionError("example model is one-dimensional");
    return x + measures::moment(mu, 1, 0);
}

// sigma(x, mu) = sin(x + int z mu(dz))
inline double example_diffusion(double x, const EmpiricalMeasure& mu) {
    if (mu.dim() != 1) throw DimensionError("example model is one-dimensional");
    return std::sin(x + measures::moment(mu, 1, 0));
}

inline MeanFieldCoefficients example_sine() {
    MeanFieldCoefficients m;
    m.name = "example-sine";
    m.dim = 1;
    m.drift = [](std::span<const double> x, const EmpiricalMeasure& mu, std::span<double> out) {
        out[0] = example_drift(x[0], mu);
    };
    m.diffusion = [](std::span<const double> x, const EmpiricalMeasure& mu, std::span<double> out) {
        out[0] = example_diffusion(x[0], mu);
    };
    m.lipschitz_k = 1.0;
    return m;
}

// Same drift as the example, no noise: the ensemble mean follows
// m_{k+1} = (1 + 2 dt) m_k under the Euler scheme.
inline MeanFieldCoefficients linear_noiseless() {
    MeanFieldCoefficients m;
    m.name = "linear-noiseless";
    m.dim = 1;
    m.drift = [](std::span<const double> x, const EmpiricalMeasure& mu, std::span<double> out) {
        out[0] = example_drift(x[0], mu);
    };
    m.diffusion = [](std::span<const double>, const EmpiricalMeasure&, std::span<double> out) { out[0] = 0.0; };
    m.lipschitz_k = 1.0;
    return m;
}

inline const std::vector<std::string>& model_names() {
    static const std::vector<std::string> names{"example-sine", "linear-noiseless"};
    return names;
}

inline MeanFieldCoefficients make_model(const std::string& name) {
    if (name == "example-sine") return example_sine();
    if (name == "linear-noiseless") return linear_noiseless();
    throw DomainError("unknown model '" + name + "' (expected example-sine or linear-noiseless)");
}

inline constexpr std::size_t kProbeMeasureSize = 8;

// max over random probe pairs of |b(x,mu) - b(y,nu)| / (|x - y| + W2(mu, nu)).
// Probes cycle through three kinds: same measure, same state, both differ.
inline double lipschitz_probe(const MeanFieldCoefficients& coeffs, std::size_t probes, std::uint64_t rng_seed) {
    if (probes == 0) throw DomainError("lipschitz_probe needs at least one probe");
    const std::size_t d = coeffs.dim;
    std::mt19937_64 rng(rng_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw = [&](std::size_t count, double scale) {
        std::vector<double> v(count);
        for (double& x : v) x = scale * normal(rng);
        return v;
    };

    std::vector<double> bx(d), by(d);
    double best = 0.0;
    std::size_t used = 0;
    for (std::size_t p = 0; p < probes; ++p) {
        const auto x = draw(d, 3.0);
        auto y = draw(d, 3.0);
        const EmpiricalMeasure mu(draw(kProbeMeasureSize * d, 2.0), d);
        EmpiricalMeasure nu(draw(kProbeMeasureSize * d, 2.0), d);
        const std::size_t kind = p % 3;
        if (kind == 0) nu = mu;
        if (kind == 1) y = x;

        double dist = 0.0;
        for (std::size_t c = 0; c < d; ++c) dist += (x[c] - y[c]) * (x[c] - y[c]);
        const double w2 = d == 1 ? measures::w2_1d(mu, nu) : measures::w2_assignment(mu, nu);
        const double denom = std::sqrt(dist) + w2;
        if (!(denom > 0.0)) continue;

        coeffs.drift(x, mu, bx);
        coeffs.drift(y, nu, by);
        double num = 0.0;
        for (std::size_t c = 0; c < d; ++c) num += (bx[c] - by[c]) * (bx[c] - by[c]);
        best = std::max(best, std::sqrt(num) / denom);
        ++used;
    }
    if (used == 0) throw DomainError("every Lipschitz probe pair was degenerate");
    return best;
}

}  // namespace mvfbm::model
