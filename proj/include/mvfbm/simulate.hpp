#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvfbm/errors.hpp"
#include "mvfbm/fbm.hpp"
#include "mvfbm/grid.hpp"
#include "mvfbm/measures.hpp"
#include "mvfbm/model.hpp"
#include "mvfbm/seeds.hpp"

// Interacting-particle Euler-Maruyama scheme driven by independent fBm paths:
//   Z^i_{k+1} = Z^i_k + b(Z^i_k, mu_k) dt + sigma(Z^i_k, mu_k) (B^i_{t_{k+1}} - B^i_{t_k}),
// with mu_k the empirical measure of all particles at t_k.
namespace mvfbm::simulate {

using fbm::FbmPath;
using measures::EmpiricalMeasure;
using measures::PathEnsemble;
using model::MeanFieldCoefficients;

struct InitialLaw {
    enum class Kind { point_mass, standard_normal };
    Kind kind = Kind::standard_normal;
    double x0 = 0.0;

    static InitialLaw point(double x) { return {Kind::point_mass, x}; }
    static InitialLaw normal() { return {Kind::standard_normal, 0.0}; }
};

struct SimConfig {
    MeanFieldCoefficients model;
    std::size_t n_particles = 1;
    TimeGrid grid{0.0, 1.0, 1};
    HurstParameter hurst{0.75};
    InitialLaw initial_law{};
    std::uint64_t base_seed = 0;
    // Replication index fed to the seed scheme.
    std::uint64_t replication = 0;

    void validate() const {
        if (n_particles == 0) throw DomainError("simulation needs at least one particle");
        if (!model.drift || !model.diffusion) throw DomainError("model coefficients are not set");
        if (model.dim == 0) throw DomainError("model dimension must be positive");
    }
};

// Initial states of particles 0..count-1, point-major. Particle i's draw depends
// only on (seed, replication, i), so prefixes agree across ensemble sizes.
inline std::vector<double> initial_states(const SimConfig& config, std::size_t count) {
    const std::size_t d = config.model.dim;
    std::vector<double> out(count * d, config.initial_law.x0);
    if (config.initial_law.kind == InitialLaw::Kind::standard_normal) {
        const SeedScheme seeds(config.base_seed);
        for (std::size_t i = 0; i < count; ++i) {
            const auto z = seeds.normals(config.replication, i, StreamPurpose::initial_state, d);
            std::copy(z.begin(), z.end(), out.begin() + static_cast<std::ptrdiff_t>(i * d));
        }
    }
    return out;
}

// Driving fBm paths for particles 0..count-1 (d per particle, particle-major)
// on the factor's grid.
inline std::vector<FbmPath> driving_paths(const SimConfig& config, const fbm::IncrementFactor& factor,
                                          std::size_t count) {
    const std::size_t d = config.model.dim;
    const std::size_t n = factor.size();
    const SeedScheme seeds(config.base_seed);
    std::vector<double> normals(count * d * n);
    for (std::size_t i = 0; i < count; ++i) {
        const auto z = seeds.normals(config.replication, i, StreamPurpose::driving_noise, d * n);
        std::copy(z.begin(), z.end(), normals.begin() + static_cast<std::ptrdiff_t>(i * d * n));
    }
    return fbm::sample_fbm_batch(factor, normals, count * d);
}

namespace detail {

// x + b dt + sigma dB for one particle; shared by every integrator so that
// values at common nodes agree bitwise.
inline void euler_update(std::span<const double> x, std::span<const double> b, std::span<const double> sigma,
                         double dt, std::span<const double> db, std::span<double> out) {
    const std::size_t d = x.size();
    for (std::size_t r = 0; r < d; ++r) {
        double noise = 0.0;
        for (std::size_t c = 0; c < d; ++c) noise += sigma[r * d + c] * db[c];
        out[r] = x[r] + b[r] * dt + noise;
    }
}

inline void check_finite(std::span<const double> x, std::size_t particle, std::size_t step) {
    for (double v : x) {
        if (!std::isfinite(v)) throw DivergenceError(particle, step);
    }
}

inline void check_paths(const std::vector<FbmPath>& paths, std::size_t expected, const TimeGrid& grid) {
    if (paths.size() < expected) {
        throw DimensionError("need " + std::to_string(expected) + " driving paths, got " +
                             std::to_string(paths.size()));
    }
    for (std::size_t p = 0; p < expected; ++p) {
        if (!(paths[p].grid() == grid)) throw DimensionError("driving path grid does not match scheme grid");
    }
}

}  // namespace detail

// One Euler step for all particles against the same frozen measure.
// `states` and `noise_increments` are point-major N x d.
inline std::vector<double> em_step(std::span<const double> states, const EmpiricalMeasure& measure, double dt,
                                   std::span<const double> noise_increments, const MeanFieldCoefficients& model,
                                   std::size_t step = 0) {
    const std::size_t d = model.dim;
    if (states.size() != noise_increments.size() || states.size() % d != 0) {
        throw DimensionError("em_step needs states and noise increments of equal N x d shape");
    }
    if (measure.dim() != d || measure.size() * d != states.size()) {
        throw DimensionError("em_step measure must be built from the input states");
    }
    const std::size_t n = states.size() / d;
    std::vector<double> out(states.size());
    std::vector<double> b(d), sigma(d * d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = states.subspan(i * d, d);
        model.drift(x, measure, b);
        model.diffusion(x, measure, sigma);
        auto y = std::span<double>(out).subspan(i * d, d);
        detail::euler_update(x, b, sigma, dt, noise_increments.subspan(i * d, d), y);
        detail::check_finite(y, i, step);
    }
    return out;
}

// EM iterates at every node of `grid` from explicit initial states.
inline PathEnsemble simulate_em(const MeanFieldCoefficients& model, const TimeGrid& grid,
                                std::span<const double> initial, const std::vector<FbmPath>& paths) {
    const std::size_t d = model.dim;
    const std::size_t n_particles = initial.size() / d;
    if (n_particles == 0 || initial.size() % d != 0) throw DimensionError("initial states must be N x d");
    detail::check_paths(paths, n_particles * d, grid);

    PathEnsemble ens(grid, n_particles, d);
    std::vector<double> states(initial.begin(), initial.end());
    for (std::size_t i = 0; i < n_particles; ++i) {
        std::copy(states.begin() + static_cast<std::ptrdiff_t>(i * d),
                  states.begin() + static_cast<std::ptrdiff_t>((i + 1) * d), ens.state(i, 0).begin());
    }
    std::vector<double> noise(states.size());
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        for (std::size_t p = 0; p < states.size(); ++p) noise[p] = paths[p].increment(k);
        const EmpiricalMeasure mu(states, d);
        states = em_step(states, mu, grid.dt(), noise, model, k);
        for (std::size_t i = 0; i < n_particles; ++i) {
            std::copy(states.begin() + static_cast<std::ptrdiff_t>(i * d),
                      states.begin() + static_cast<std::ptrdiff_t>((i + 1) * d), ens.state(i, k + 1).begin());
        }
    }
    return ens;
}

// EM iterates on config.grid; initial states drawn from the seed scheme.
// The piecewise-constant extension is the same data read at the floor node.
inline PathEnsemble simulate_em(const SimConfig& config, const std::vector<FbmPath>& paths) {
    config.validate();
    const auto x0 = initial_states(config, config.n_particles);
    return simulate_em(config.model, config.grid, x0, paths);
}

// Continuous extension on the grid refined by `refine`: inside each coarse
// cell the coefficients stay frozen at the left node (state and measure) and
// are integrated against the fine noise. Coarse nodes reproduce simulate_em.
inline PathEnsemble simulate_em_continuous(const MeanFieldCoefficients& model, const TimeGrid& grid,
                                           std::span<const double> initial, const std::vector<FbmPath>& fine_paths,
                                           std::size_t refine) {
    if (refine < 1) throw DomainError("refinement factor must be at least 1");
    const TimeGrid fine = grid.refined(refine);
    const std::size_t d = model.dim;
    const std::size_t n_particles = initial.size() / d;
    if (n_particles == 0 || initial.size() % d != 0) throw DimensionError("initial states must be N x d");
    detail::check_paths(fine_paths, n_particles * d, fine);

    PathEnsemble ens(fine, n_particles, d);
    std::vector<double> states(initial.begin(), initial.end());
    for (std::size_t i = 0; i < n_particles; ++i) {
        std::copy(states.begin() + static_cast<std::ptrdiff_t>(i * d),
                  states.begin() + static_cast<std::ptrdiff_t>((i + 1) * d), ens.state(i, 0).begin());
    }
    std::vector<double> b(d), sigma(d * d), db(d), next(states.size());
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        const EmpiricalMeasure mu(states, d);
        const std::size_t base = k * refine;
        for (std::size_t i = 0; i < n_particles; ++i) {
            const auto x = std::span<const double>(states).subspan(i * d, d);
            model.drift(x, mu, b);
            model.diffusion(x, mu, sigma);
            for (std::size_t j = 1; j <= refine; ++j) {
                const bool cell_end = j == refine;
                const double elapsed = cell_end ? grid.dt() : static_cast<double>(j) * fine.dt();
                for (std::size_t c = 0; c < d; ++c) {
                    const auto& path = fine_paths[i * d + c];
                    db[c] = path[base + j] - path[base];
                }
                auto y = ens.state(i, base + j);
                detail::euler_update(x, b, sigma, elapsed, db, y);
                detail::check_finite(y, i, k);
                if (cell_end) std::copy(y.begin(), y.end(), next.begin() + static_cast<std::ptrdiff_t>(i * d));
            }
        }
        states = next;
    }
    return ens;
}

inline PathEnsemble simulate_em_continuous(const SimConfig& config, const std::vector<FbmPath>& fine_paths,
                                           std::size_t refine) {
    config.validate();
    const auto x0 = initial_states(config, config.n_particles);
    return simulate_em_continuous(config.model, config.grid, x0, fine_paths, refine);
}

// Fine-grid EM with the supplied noise, standing in for the exact interacting
// system (which has no closed form). Results built on it are surrogates.
inline PathEnsemble simulate_reference(const SimConfig& config, const std::vector<FbmPath>& fine_paths) {
    config.validate();
    if (fine_paths.empty()) throw DimensionError("reference simulation needs driving paths");
    const TimeGrid& fine = fine_paths.front().grid();
    if (fine.start() != config.grid.start() || fine.end() != config.grid.end()) {
        throw DimensionError("reference grid must span the scheme interval");
    }
    const auto x0 = initial_states(config, config.n_particles);
    return simulate_em(config.model, fine, x0, fine_paths);
}

struct ChaosPair {
    PathEnsemble small;
    PathEnsemble reference;
};

// Two coupled systems: n_ref particles, and the first n_small of them run as
// their own system with the same initial states and noise.
inline ChaosPair chaos_pair(const SimConfig& config, std::size_t n_small, std::size_t n_ref,
                            const std::vector<FbmPath>& shared_paths) {
    config.validate();
    if (n_small == 0 || n_small > n_ref) throw DomainError("chaos_pair needs 1 <= n_small <= n_ref");
    const std::size_t d = config.model.dim;
    const auto x0 = initial_states(config, n_ref);
    auto reference = simulate_em(config.model, config.grid, x0, shared_paths);
    const std::vector<FbmPath> head(shared_paths.begin(),
                                    shared_paths.begin() + static_cast<std::ptrdiff_t>(n_small * d));
    auto small = simulate_em(config.model, config.grid, std::span<const double>(x0).first(n_small * d), head);
    return {std::move(small), std::move(reference)};
}

}  // namespace mvfbm::simulate
