#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mvfbm/simulate.hpp"

using namespace mvfbm;
using namespace mvfbm::simulate;
using measures::EmpiricalMeasure;
using model::MeanFieldCoefficients;

namespace {

MeanFieldCoefficients zero_model() {
    MeanFieldCoefficients m;
    m.name = "zero";
    m.drift = [](std::span<const double>, const EmpiricalMeasure&, std::span<double> out) { out[0] = 0.0; };
    m.diffusion = [](std::span<const double>, const EmpiricalMeasure&, std::span<double> out) { out[0] = 0.0; };
    return m;
}

MeanFieldCoefficients unit_noise_model() {
    MeanFieldCoefficients m = zero_model();
    m.diffusion = [](std::span<const double>, const EmpiricalMeasure&, std::span<double> out) { out[0] = 1.0; };
    return m;
}

SimConfig make_config(MeanFieldCoefficients m, std::size_t n, std::size_t steps, std::uint64_t seed = 5) {
    SimConfig c;
    c.model = std::move(m);
    c.n_particles = n;
    c.grid = TimeGrid(0.0, 1.0, steps);
    c.hurst = HurstParameter(0.8);
    c.initial_law = InitialLaw::normal();
    c.base_seed = seed;
    return c;
}

std::vector<fbm::FbmPath> paths_for(const SimConfig& c, const TimeGrid& grid, std::size_t count) {
    return driving_paths(c, fbm::build_increment_factor(grid, c.hurst), count);
}

double mean_at(const measures::PathEnsemble& ens, std::size_t node) {
    double s = 0.0;
    for (std::size_t i = 0; i < ens.particles(); ++i) s += ens.state(i, node)[0];
    return s / static_cast<double>(ens.particles());
}

}  // namespace

TEST(EmStep, ZeroModelKeepsStates) {
    const std::vector<double> x{0.3, -1.2, 2.0};
    const std::vector<double> db{0.5, 0.1, -0.7};
    const auto out = em_step(x, EmpiricalMeasure::line(x), 0.1, db, zero_model());
    EXPECT_EQ(out, x);
}

TEST(EmStep, MatchesHandComputedUpdate) {
    const std::vector<double> x{1.0, 3.0};
    const std::vector<double> db{0.2, -0.1};
    const auto out = em_step(x, EmpiricalMeasure::line(x), 0.05, db, model::example_sine());
    // mean 2: b = x + 2, sigma = sin(x + 2)
    EXPECT_DOUBLE_EQ(out[0], 1.0 + 3.0 * 0.05 + std::sin(3.0) * 0.2);
    EXPECT_DOUBLE_EQ(out[1], 3.0 + 5.0 * 0.05 + std::sin(5.0) * -0.1);
}

TEST(EmStep, ShapeChecks) {
    const std::vector<double> x{1.0, 3.0};
    EXPECT_THROW(em_step(x, EmpiricalMeasure::line(x), 0.1, std::vector<double>{0.0}, zero_model()), DimensionError);
    EXPECT_THROW(em_step(x, EmpiricalMeasure::line({1.0}), 0.1, std::vector<double>{0.0, 0.0}, zero_model()),
                 DimensionError);
}

TEST(EmStep, DivergenceCarriesLocation) {
    MeanFieldCoefficients m = zero_model();
    m.drift = [](std::span<const double> x, const EmpiricalMeasure&, std::span<double> out) {
        out[0] = x[0] * 1e308;
    };
    const std::vector<double> x{0.0, 10.0};
    try {
        em_step(x, EmpiricalMeasure::line(x), 1.0, std::vector<double>{0.0, 0.0}, m, 7);
        FAIL() << "expected divergence";
    } catch (const DivergenceError& e) {
        EXPECT_EQ(e.particle(), 1u);
        EXPECT_EQ(e.step(), 7u);
    }
}

TEST(SimulateEm, ExampleFixedPointAtZero) {
    auto c = make_config(model::example_sine(), 1, 64);
    c.initial_law = InitialLaw::point(0.0);
    const auto ens = simulate_em(c, paths_for(c, c.grid, 1));
    for (std::size_t k = 0; k <= 64; ++k) EXPECT_EQ(ens.state(0, k)[0], 0.0);
}

TEST(SimulateEm, ZeroModelReplicatesInitialStates) {
    const auto c = make_config(zero_model(), 4, 16);
    const auto ens = simulate_em(c, paths_for(c, c.grid, 4));
    const auto x0 = initial_states(c, 4);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t k = 0; k <= 16; ++k) EXPECT_EQ(ens.state(i, k)[0], x0[i]);
    }
}

TEST(SimulateEm, SingleStepIsOneEmStep) {
    const auto c = make_config(model::example_sine(), 5, 1);
    const auto paths = paths_for(c, c.grid, 5);
    const auto ens = simulate_em(c, paths);
    const auto x0 = initial_states(c, 5);
    std::vector<double> db(5);
    for (std::size_t i = 0; i < 5; ++i) db[i] = paths[i].increment(0);
    const auto x1 = em_step(x0, EmpiricalMeasure::line(x0), 1.0, db, c.model);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(ens.state(i, 1)[0], x1[i]);
}

TEST(SimulateEm, LinearNoiselessMeanRecursion) {
    const auto c = make_config(model::linear_noiseless(), 64, 128);
    const auto ens = simulate_em(c, paths_for(c, c.grid, 64));
    const double m0 = mean_at(ens, 0);
    for (std::size_t k = 0; k <= 128; ++k) {
        EXPECT_NEAR(mean_at(ens, k), std::pow(1.0 + 2.0 * c.grid.dt(), static_cast<double>(k)) * m0, 1e-12);
    }
}

TEST(SimulateEm, Deterministic) {
    const auto c = make_config(model::example_sine(), 16, 32, 99);
    const auto a = simulate_em(c, paths_for(c, c.grid, 16));
    const auto b = simulate_em(c, paths_for(c, c.grid, 16));
    EXPECT_EQ(a, b);
}

TEST(SimulateEm, Exchangeable) {
    const auto c = make_config(model::example_sine(), 12, 40);
    const auto paths = paths_for(c, c.grid, 12);
    const auto x0 = initial_states(c, 12);
    std::vector<std::size_t> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::swap(perm[0], perm[5]);
    std::vector<double> px0(12);
    std::vector<fbm::FbmPath> ppaths;
    for (std::size_t i = 0; i < 12; ++i) {
        px0[i] = x0[perm[i]];
        ppaths.push_back(paths[perm[i]]);
    }
    const auto a = simulate_em(c.model, c.grid, x0, paths);
    const auto b = simulate_em(c.model, c.grid, px0, ppaths);
    for (std::size_t i = 0; i < 12; ++i) {
        for (std::size_t k = 0; k <= 40; ++k) EXPECT_EQ(b.state(i, k)[0], a.state(perm[i], k)[0]);
    }
}

TEST(SimulateEm, PathChecks) {
    const auto c = make_config(model::example_sine(), 3, 8);
    EXPECT_THROW(simulate_em(c, paths_for(c, c.grid, 2)), DimensionError);
    EXPECT_THROW(simulate_em(c, paths_for(c, c.grid.refined(2), 3)), DimensionError);
}

TEST(InitialStates, PrefixConsistent) {
    const auto c = make_config(model::example_sine(), 10, 8);
    const auto small = initial_states(c, 4);
    const auto big = initial_states(c, 10);
    EXPECT_TRUE(std::equal(small.begin(), small.end(), big.begin()));
    const auto ps = paths_for(c, c.grid, 4);
    const auto pb = paths_for(c, c.grid, 10);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(ps[i], pb[i]);
}

TEST(Continuous, RefineOneIsPiecewiseScheme) {
    const auto c = make_config(model::example_sine(), 8, 16);
    const auto paths = paths_for(c, c.grid, 8);
    EXPECT_EQ(simulate_em_continuous(c, paths, 1), simulate_em(c, paths));
}

TEST(Continuous, CoarseNodesBitwiseEqual) {
    const auto c = make_config(model::example_sine(), 8, 16);
    const auto fine_paths = paths_for(c, c.grid.refined(8), 8);
    std::vector<fbm::FbmPath> coarse;
    for (const auto& p : fine_paths) coarse.push_back(fbm::coarsen(p, 8));
    const auto cont = simulate_em_continuous(c, fine_paths, 8);
    EXPECT_EQ(cont.restricted(8), simulate_em(c, coarse));
}

TEST(Continuous, UnitNoiseFollowsDriver) {
    const auto c = make_config(unit_noise_model(), 3, 4);
    const auto fine_paths = paths_for(c, c.grid.refined(5), 3);
    const auto cont = simulate_em_continuous(c, fine_paths, 5);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t k = 0; k < 4; ++k) {
            for (std::size_t j = 1; j <= 5; ++j) {
                const std::size_t base = 5 * k;
                EXPECT_EQ(cont.state(i, base + j)[0],
                          cont.state(i, base)[0] + (fine_paths[i][base + j] - fine_paths[i][base]));
            }
        }
    }
}

TEST(Continuous, Errors) {
    const auto c = make_config(model::example_sine(), 2, 4);
    const auto fine = paths_for(c, c.grid.refined(4), 2);
    EXPECT_THROW(simulate_em_continuous(c, fine, 0), DomainError);
    EXPECT_THROW(simulate_em_continuous(c, fine, 2), DimensionError);
}

TEST(Reference, MatchesOdeMean) {
    auto c = make_config(model::linear_noiseless(), 32, 4);
    std::vector<double> errs;
    for (std::size_t fine_steps : {512u, 1024u}) {
        const TimeGrid fine(0.0, 1.0, fine_steps);
        const auto ref = simulate_reference(c, paths_for(c, fine, 32));
        EXPECT_EQ(ref, simulate_em(c.model, fine, initial_states(c, 32), paths_for(c, fine, 32)));
        const double m0 = mean_at(ref, 0);
        const double err = std::abs(mean_at(ref, fine_steps) - std::exp(2.0) * m0) / std::abs(std::exp(2.0) * m0);
        EXPECT_LE(err, 3.0 * fine.dt());
        errs.push_back(err);
    }
    EXPECT_NEAR(errs[0] / errs[1], 2.0, 0.05);
}

TEST(ChaosPair, EqualSizesAreIdentical) {
    const auto c = make_config(model::example_sine(), 16, 32);
    const auto pair = chaos_pair(c, 16, 16, paths_for(c, c.grid, 16));
    EXPECT_EQ(pair.small, pair.reference);
}

TEST(ChaosPair, EachSystemFollowsItsOwnMean) {
    const auto c = make_config(model::linear_noiseless(), 64, 32);
    const auto pair = chaos_pair(c, 8, 64, paths_for(c, c.grid, 64));
    for (const auto* ens : {&pair.small, &pair.reference}) {
        const double m0 = mean_at(*ens, 0);
        for (std::size_t k = 0; k <= 32; ++k) {
            EXPECT_NEAR(mean_at(*ens, k), std::pow(1.0 + 2.0 * c.grid.dt(), static_cast<double>(k)) * m0, 1e-12);
        }
    }
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(pair.small.state(i, 0)[0], pair.reference.state(i, 0)[0]);
    EXPECT_THROW(chaos_pair(c, 65, 64, paths_for(c, c.grid, 64)), DomainError);
}
