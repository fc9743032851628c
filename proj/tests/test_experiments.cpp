#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include "mvfbm/experiments.hpp"

using namespace mvfbm;
using namespace mvfbm::experiments;
using simulate::InitialLaw;

namespace {

SimConfig base_config(model::MeanFieldCoefficients m, std::size_t n, double hurst, std::size_t steps = 1) {
    SimConfig c;
    c.model = std::move(m);
    c.n_particles = n;
    c.grid = TimeGrid(0.0, 1.0, steps);
    c.hurst = HurstParameter(hurst);
    c.initial_law = InitialLaw::normal();
    c.base_seed = 2024;
    return c;
}

model::MeanFieldCoefficients decoupled() {
    auto m = model::example_sine();
    m.name = "decoupled";
    m.measure_dependent = false;
    m.drift = [](std::span<const double> x, const measures::EmpiricalMeasure&, std::span<double> out) {
        out[0] = x[0];
    };
    m.diffusion = [](std::span<const double> x, const measures::EmpiricalMeasure&, std::span<double> out) {
        out[0] = std::sin(x[0]);
    };
    return m;
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("mvfbm_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Theory, TemporalRates) {
    EXPECT_EQ(rate_theory(0.9, 0.8).temporal_rate, 0.1);
    EXPECT_EQ(rate_theory(0.8, 0.7).temporal_rate, 0.1);
    EXPECT_EQ(rate_theory(0.7, 0.6).temporal_rate, 0.1);
    EXPECT_EQ(format_double(rate_theory(0.9, 0.8).temporal_rate), "0.1");
    EXPECT_NEAR(rate_theory(0.95, 0.6).temporal_rate, 0.24, 1e-15);
}

TEST(Theory, ChaosExponent) {
    EXPECT_EQ(rate_theory(0.8, 0.7, 1, 8.0).chaos_eps_exponent, -0.5);
    EXPECT_EQ(rate_theory(0.8, 0.7, 1, 8.0).chaos_rms_exponent(), -0.25);
    EXPECT_NEAR(chaos_eps_exponent(1, 3.0), -1.0 / 3.0, 1e-15);
    EXPECT_THROW(chaos_eps_exponent(1, 4.0), DomainError);
    EXPECT_THROW(chaos_eps_exponent(1, 2.0), DomainError);
}

TEST(Theory, BetaWindow) {
    try {
        rate_theory(0.9, 0.95);
        FAIL() << "expected domain error";
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("requires 1/2 < beta < H"), std::string::npos);
    }
    EXPECT_THROW(rate_theory(0.9, 0.4), DomainError);
}

TEST(FitRate, ExactPowerLaw) {
    std::vector<std::pair<double, double>> pts;
    for (double dt : {0.5, 0.25, 0.125, 0.0625}) pts.emplace_back(dt, 3.0 * std::sqrt(dt));
    const auto fit = fit_rate(pts);
    ASSERT_TRUE(fit.defined);
    EXPECT_NEAR(fit.slope, 0.5, 1e-14);
    EXPECT_NEAR(fit.intercept, std::log(3.0), 1e-14);
    EXPECT_NEAR(fit.r_squared, 1.0, 1e-14);
}

TEST(FitRate, TwoPointsInterpolate) {
    const auto fit = fit_rate({{1.0, 2.0}, {4.0, 5.0}});
    EXPECT_NEAR(fit.slope, std::log(2.5) / std::log(4.0), 1e-14);
}

TEST(FitRate, NoisySynthetic) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> xi(0.0, 0.01);
    std::vector<std::pair<double, double>> pts;
    for (int k = 1; k <= 6; ++k) {
        const double dt = std::pow(2.0, -k);
        pts.emplace_back(dt, std::pow(dt, 0.7) * std::exp(xi(rng)));
    }
    const auto fit = fit_rate(pts);
    EXPECT_GE(fit.slope, 0.65);
    EXPECT_LE(fit.slope, 0.75);
}

TEST(FitRate, ScaleInvariantSlope) {
    const std::vector<std::pair<double, double>> pts{{0.1, 0.3}, {0.2, 0.5}, {0.4, 0.55}, {0.8, 1.7}};
    auto scaled = pts;
    for (auto& p : scaled) p.second *= 7.5;
    const auto a = fit_rate(pts), b = fit_rate(scaled);
    EXPECT_NEAR(a.slope, b.slope, 1e-13);
    EXPECT_NEAR(b.intercept - a.intercept, std::log(7.5), 1e-13);
}

TEST(FitRate, Degenerate) {
    EXPECT_FALSE(fit_rate({{0.5, 1.0}}).defined);
    EXPECT_FALSE(fit_rate({}).defined);
    EXPECT_THROW(fit_rate({{0.5, 0.0}, {0.25, 1.0}}), DomainError);
    EXPECT_THROW(fit_rate({{-0.5, 1.0}, {0.25, 1.0}}), DomainError);
}

TEST(MonteCarlo, OrderedAndWorkerIndependent) {
    const auto c = base_config(model::example_sine(), 6, 0.8, 20);
    const auto factor = fbm::build_increment_factor(c.grid, c.hurst);
    const std::function<std::vector<double>(std::size_t)> kernel = [&](std::size_t r) {
        SimConfig cfg = c;
        cfg.replication = r;
        const auto ens = simulate::simulate_em(cfg, simulate::driving_paths(cfg, factor, 6));
        return std::vector<double>(ens.data().begin(), ens.data().end());
    };
    const auto one = monte_carlo(12, kernel, 1);
    const auto many = monte_carlo(12, kernel, 8);
    ASSERT_EQ(one.size(), 12u);
    for (std::size_t r = 0; r < 12; ++r) {
        ASSERT_TRUE(one[r].ok() && many[r].ok());
        EXPECT_EQ(*one[r].value, *many[r].value);
    }
    EXPECT_TRUE(monte_carlo(0, kernel, 4).empty());
}

TEST(MonteCarlo, FailureThreshold) {
    const std::function<int(std::size_t)> flaky = [](std::size_t r) -> int {
        if (r % 3 == 0) throw DivergenceError(0, r);
        return static_cast<int>(r);
    };
    const auto reps = monte_carlo(10, flaky, 3);
    std::vector<std::uint64_t> failed;
    EXPECT_THROW(detail::successes(reps, failed, 1), ExperimentError);

    const std::function<int(std::size_t)> rare = [](std::size_t r) -> int {
        if (r == 4) throw DivergenceError(0, r);
        return static_cast<int>(r);
    };
    failed.clear();
    const auto ok = detail::successes(monte_carlo(10, rare, 2), failed, 1);
    EXPECT_EQ(ok.size(), 9u);
    ASSERT_EQ(failed.size(), 1u);
    EXPECT_EQ(failed[0], 4u);
}

TEST(DtSweep, SingleStepHasNoSlope) {
    const auto c = base_config(model::example_sine(), 4, 0.9);
    const auto report = run_dt_convergence(c, {0.25}, 8, 2, 0.8);
    ASSERT_EQ(report.rows.size(), 1u);
    EXPECT_FALSE(report.fit_sup.defined);
    EXPECT_NE(report_sidecar(report).find("status=slope undefined"), std::string::npos);
}

TEST(DtSweep, LinearNoiselessMatchesRecursionOracle) {
    const auto c = base_config(model::linear_noiseless(), 8, 0.9);
    const std::vector<double> dts{1.0 / 16, 1.0 / 32, 1.0 / 64};
    const std::size_t refine = 32, reps = 3;
    const auto report = run_dt_convergence(c, dts, refine, reps, 0.8);
    ASSERT_EQ(report.rows.size(), 3u);

    const double fine_dt = dts.back() / static_cast<double>(refine);
    std::vector<std::pair<double, double>> pts;
    for (std::size_t level = 0; level < 3; ++level) {
        const double dt = report.rows[level].param;
        const auto n = static_cast<std::size_t>(std::lround(1.0 / dt));
        const std::size_t ratio = static_cast<std::size_t>(std::lround(dt / fine_dt));
        double acc = 0.0;
        for (std::size_t r = 0; r < reps; ++r) {
            SimConfig cfg = c;
            cfg.replication = r;
            const auto x0 = simulate::initial_states(cfg, 8);
            double m0 = 0.0;
            for (double x : x0) m0 += x;
            m0 /= 8.0;
            double per_rep = 0.0;
            for (double x : x0) {
                double sup = 0.0;
                for (std::size_t k = 0; k <= n; ++k) {
                    const double kk = static_cast<double>(k), kf = static_cast<double>(k * ratio);
                    const double coarse = m0 * std::pow(1.0 + 2.0 * dt, kk) + (x - m0) * std::pow(1.0 + dt, kk);
                    const double fine =
                        m0 * std::pow(1.0 + 2.0 * fine_dt, kf) + (x - m0) * std::pow(1.0 + fine_dt, kf);
                    sup = std::max(sup, std::abs(coarse - fine));
                }
                per_rep += sup * sup;
            }
            acc += per_rep / 8.0;
        }
        const double oracle = std::sqrt(acc / static_cast<double>(reps));
        EXPECT_NEAR(report.rows[level].err_sup_mean, oracle, 1e-9 * oracle);
        pts.emplace_back(dt, oracle);
    }
    EXPECT_NEAR(report.fit_sup.slope, 1.0, 0.05);
    EXPECT_NEAR(fit_rate(pts).slope, report.fit_sup.slope, 1e-9);
}

TEST(DtSweep, RowsSortedAndWorkerIndependent) {
    const auto c = base_config(model::example_sine(), 6, 0.9);
    const std::vector<double> dts{1.0 / 8, 1.0 / 32, 1.0 / 16};
    const auto a = run_dt_convergence(c, dts, 8, 4, 0.8, {1, ErrorWindow::whole_interval});
    const auto b = run_dt_convergence(c, dts, 8, 4, 0.8, {4, ErrorWindow::whole_interval});
    EXPECT_EQ(report_csv(a), report_csv(b));
    EXPECT_EQ(report_sidecar(a), report_sidecar(b));
    ASSERT_EQ(a.rows.size(), 3u);
    EXPECT_LT(a.rows[0].param, a.rows[1].param);
    EXPECT_LT(a.rows[1].param, a.rows[2].param);
    EXPECT_EQ(a.moments.size(), 3u);
    for (const auto& row : a.rows) {
        EXPECT_EQ(row.reps, 4u);
        EXPECT_EQ(row.failures, 0u);
        EXPECT_GT(row.err_sup_mean, 0.0);
        EXPECT_GE(row.err_sup_se, 0.0);
    }
}

TEST(DtSweep, PerCellWindowDominatesNodeErrors) {
    const auto c = base_config(model::example_sine(), 1, 0.9);
    const std::vector<double> dts{1.0 / 8, 1.0 / 16};
    const auto whole = run_dt_convergence(c, dts, 8, 1, 0.8);
    const auto cell = run_dt_convergence(c, dts, 8, 1, 0.8, {1, ErrorWindow::per_cell});
    for (std::size_t i = 0; i < 2; ++i) EXPECT_GE(cell.rows[i].err_sup_mean, whole.rows[i].err_sup_mean);
}

TEST(DtSweep, Preconditions) {
    const auto c = base_config(model::example_sine(), 2, 0.9);
    EXPECT_THROW(run_dt_convergence(c, {0.25}, 4, 1, 0.8), DomainError);
    EXPECT_THROW(run_dt_convergence(c, {0.3}, 8, 1, 0.8), DomainError);
    EXPECT_THROW(run_dt_convergence(c, {0.25}, 8, 1, 0.95), DomainError);
    EXPECT_THROW(run_dt_convergence(c, {}, 8, 1, 0.8), DomainError);
}

TEST(NSweep, ReferenceSizeGivesZeroError) {
    const auto c = base_config(model::example_sine(), 1, 0.8, 16);
    const auto report = run_n_convergence(c, {32}, 32, 2, 0.7, 8.0);
    ASSERT_EQ(report.rows.size(), 1u);
    EXPECT_EQ(report.rows[0].err_sup_mean, 0.0);
    EXPECT_EQ(report.rows[0].err_holder_mean, 0.0);
}

TEST(NSweep, DecoupledModelHasNoChaosError) {
    const auto c = base_config(decoupled(), 1, 0.8, 16);
    const auto report = run_n_convergence(c, {2, 4, 8}, 32, 2, 0.7, 8.0);
    for (const auto& row : report.rows) {
        EXPECT_EQ(row.err_sup_mean, 0.0);
        EXPECT_EQ(row.err_holder_mean, 0.0);
    }
    EXPECT_FALSE(report.fit_sup.defined);
}

TEST(NSweep, InteractingErrorsShrink) {
    const auto c = base_config(model::example_sine(), 1, 0.8, 32);
    const auto report = run_n_convergence(c, {4, 16, 64}, 256, 4, 0.7, 8.0);
    ASSERT_TRUE(report.fit_sup.defined);
    EXPECT_LT(report.fit_sup.slope, 0.0);
    EXPECT_EQ(report.theory.chaos_rms_exponent(), -0.25);
    EXPECT_NE(report_sidecar(report).find("theory_chaos_exponent=-0.25"), std::string::npos);
}

TEST(NSweep, Preconditions) {
    const auto c = base_config(model::example_sine(), 1, 0.8, 8);
    EXPECT_THROW(run_n_convergence(c, {4}, 8, 1, 0.7, 4.0), DomainError);
    EXPECT_THROW(run_n_convergence(c, {4}, 8, 1, 0.7, 2.0), DomainError);
    EXPECT_THROW(run_n_convergence(c, {16}, 8, 1, 0.7, 8.0), DomainError);
    EXPECT_THROW(run_n_convergence(c, {0, 4}, 8, 1, 0.7, 8.0), DomainError);
}

TEST(ExtensionGap, NoiselessGapMatchesDriftOracle) {
    // sigma = 0: inside cell k the gap is |b_k| (t - t_k), so its squared sup is (b_k dt)^2
    const auto c = base_config(model::linear_noiseless(), 8, 0.9);
    const std::vector<double> dts{1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128};
    const std::size_t reps = 2;
    const auto report = run_extension_gap(c, dts, 1024, reps, 0.8);
    ASSERT_EQ(report.rows.size(), 4u);
    for (const auto& row : report.rows) {
        const double dt = row.dt;
        const auto n = static_cast<std::size_t>(std::lround(1.0 / dt));
        double acc = 0.0;
        for (std::size_t r = 0; r < reps; ++r) {
            SimConfig cfg = c;
            cfg.replication = r;
            const auto x0 = simulate::initial_states(cfg, 8);
            double m0 = 0.0;
            for (double x : x0) m0 += x;
            m0 /= 8.0;
            double cells = 0.0;
            for (double x : x0) {
                for (std::size_t k = 0; k < n; ++k) {
                    const double kk = static_cast<double>(k);
                    const double mk = m0 * std::pow(1.0 + 2.0 * dt, kk);
                    const double xk = mk + (x - m0) * std::pow(1.0 + dt, kk);
                    cells += (xk + mk) * dt * (xk + mk) * dt;
                }
            }
            acc += cells / static_cast<double>(8 * n);
        }
        const double oracle = acc / static_cast<double>(reps);
        EXPECT_NEAR(row.sup_gap_sq, oracle, 1e-9 * oracle);
    }
    EXPECT_NEAR(report.fit_sup.slope, 2.0, 0.15);
    EXPECT_THROW(run_extension_gap(c, {1.0 / 1024}, 1024, 1, 0.8), DomainError);
}

TEST(Formatting, ShortestRoundTrip) {
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(format_double(-2.0), "-2");
    EXPECT_EQ(format_double(std::nan("")), "nan");
    std::mt19937_64 rng(17);
    for (int i = 0; i < 2000; ++i) {
        const std::uint64_t bits = rng();
        double x;
        std::memcpy(&x, &bits, sizeof x);
        if (!std::isfinite(x)) continue;
        const double y = parse_double(format_double(x));
        EXPECT_EQ(std::memcmp(&x, &y, sizeof x), 0) << format_double(x);
    }
    EXPECT_THROW(parse_double("1.5x"), DomainError);
}

TEST(ReportIo, SidecarPath) {
    EXPECT_EQ(sidecar_path("out/report_dt.csv"), std::filesystem::path("out/report_dt_sidecar.txt"));
}

TEST(ReportIo, RoundTrip) {
    const auto c = base_config(model::example_sine(), 4, 0.9);
    auto report = run_dt_convergence(c, {1.0 / 4, 1.0 / 8}, 8, 3, 0.8);
    report.failed_replications = {7};
    const auto dir = scratch_dir("roundtrip");
    const auto csv = dir / "report.csv";
    write_report(report, csv);
    const auto back = read_report(csv);
    ASSERT_EQ(back.rows.size(), report.rows.size());
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        EXPECT_EQ(back.rows[i].param, report.rows[i].param);
        EXPECT_EQ(back.rows[i].err_sup_mean, report.rows[i].err_sup_mean);
        EXPECT_EQ(back.rows[i].err_sup_se, report.rows[i].err_sup_se);
        EXPECT_EQ(back.rows[i].err_holder_mean, report.rows[i].err_holder_mean);
        EXPECT_EQ(back.rows[i].err_holder_se, report.rows[i].err_holder_se);
        EXPECT_EQ(back.rows[i].reps, report.rows[i].reps);
        EXPECT_EQ(back.rows[i].failures, report.rows[i].failures);
    }
    EXPECT_EQ(back.kind, report.kind);
    EXPECT_EQ(back.fit_sup.slope, report.fit_sup.slope);
    EXPECT_EQ(back.fit_holder.slope, report.fit_holder.slope);
    EXPECT_EQ(back.fit_sup.r_squared, report.fit_sup.r_squared);
    EXPECT_EQ(back.theory.temporal_rate, report.theory.temporal_rate);
    EXPECT_EQ(back.theory.hurst, 0.9);
    EXPECT_EQ(back.theory.beta, 0.8);
    EXPECT_EQ(back.seed, report.seed);
    EXPECT_TRUE(back.surrogate_reference);
    const auto kv = read_sidecar(sidecar_path(csv));
    EXPECT_EQ(kv.at("theory_temporal_rate"), "0.1");
    EXPECT_EQ(kv.at("failed_replications"), "7");
}

TEST(ReportIo, EmptyReport) {
    ConvergenceReport report;
    report.theory = rate_theory(0.9, 0.8);
    const auto dir = scratch_dir("empty");
    write_report(report, dir / "r.csv");
    EXPECT_EQ(slurp(dir / "r.csv"), std::string(kReportHeader) + "\n");
    EXPECT_NE(slurp(dir / "r_sidecar.txt").find("status=error"), std::string::npos);
}

TEST(ReportIo, ByteDeterministic) {
    const auto c = base_config(model::example_sine(), 4, 0.9);
    const auto dir = scratch_dir("determinism");
    write_report(run_dt_convergence(c, {1.0 / 4, 1.0 / 8}, 8, 2, 0.8), dir / "a.csv");
    write_report(run_dt_convergence(c, {1.0 / 4, 1.0 / 8}, 8, 2, 0.8), dir / "b.csv");
    EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
    EXPECT_EQ(slurp(dir / "a_sidecar.txt"), slurp(dir / "b_sidecar.txt"));
    EXPECT_THROW(write_report(ConvergenceReport{}, dir / "missing" / "x.csv"), std::runtime_error);
}
