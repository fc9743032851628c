#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvfbm/mvfbm.hpp"

namespace fs = std::filesystem;
using namespace mvfbm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    double hurst = 0.9;
    double beta = 0.8;
    double t_end = 1.0;
    std::size_t n_steps = 256;
    std::size_t particles = 200;
    std::size_t reps = 16;
    std::uint64_t seed = 42;
    std::size_t workers = 1;
    std::string out_dir = ".";
    std::string model;
    bool strict_regime = false;

    // simulate
    std::optional<double> x0;
    // converge-dt
    std::vector<double> dts{1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256, 1.0 / 512};
    std::size_t refine_ref = 8;
    std::string window = "whole";
    std::string report;
    // converge-n
    std::vector<std::size_t> n_values{8, 16, 32, 64, 128, 256};
    std::size_t n_ref = 2048;
    double q = 8.0;
    // selftest
    std::string filter;
    bool inject_fault = false;
};

std::string fmt(double x) { return experiments::format_double(x); }

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + p.string() + "' for writing");
    f << text;
    if (!f) throw std::runtime_error("failed writing '" + p.string() + "'");
}

fs::path prepare_out_dir(const Options& o) {
    const fs::path dir(o.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + dir.string() + "': " + ec.message());
    return dir;
}

HurstParameter checked_hurst(const Options& o, bool warn) {
    const HurstParameter h(o.hurst);
    if (!h.in_analysed_regime()) {
        const std::string msg = "H=" + fmt(o.hurst) + " lies outside the analysed regime H > (sqrt(5)-1)/2";
        if (o.strict_regime) throw UsageError(msg);
        if (warn) std::cerr << "warning: " << msg << '\n';
    }
    return h;
}

TimeGrid checked_grid(const Options& o) {
    if (!(o.t_end > 0.0)) throw UsageError("--t-end must be positive");
    if (o.n_steps == 0) throw UsageError("--n-steps must be at least 1");
    return TimeGrid(0.0, o.t_end, o.n_steps);
}

model::MeanFieldCoefficients checked_model(const Options& o, const std::string& fallback) {
    const std::string name = o.model.empty() ? fallback : o.model;
    if (name.empty()) throw UsageError("--model is required (example-sine or linear-noiseless)");
    return model::make_model(name);
}

// Runs `validate` mapping every failure to a usage error, then `run` mapping
// failures to runtime errors.
int guarded(const std::function<std::function<int()>()>& validate) {
    std::function<int()> run;
    try {
        run = validate();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    try {
        return run();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

// ---------------------------------------------------------------------------

int cmd_fbm_gen(const Options& o) {
    return guarded([&]() -> std::function<int()> {
        const auto hurst = HurstParameter(o.hurst);
        const auto grid = checked_grid(o);
        return [=] {
            const auto dir = prepare_out_dir(o);
            const auto factor = fbm::build_increment_factor(grid, hurst);
            const SeedScheme seeds(o.seed);
            const auto path = fbm::sample_fbm(factor, seeds.normals(0, 0, StreamPurpose::driving_noise, grid.steps()));
            std::ostringstream out;
            out << "t,value\n";
            for (std::size_t k = 0; k < grid.nodes(); ++k) out << fmt(grid.node(k)) << ',' << fmt(path[k]) << '\n';
            write_text(dir / "fbm.csv", out.str());
            std::cerr << "wrote " << (dir / "fbm.csv").string() << '\n';
            return kExitOk;
        };
    });
}

int cmd_simulate(const Options& o) {
    return guarded([&]() -> std::function<int()> {
        simulate::SimConfig cfg;
        cfg.model = checked_model(o, "");
        cfg.hurst = checked_hurst(o, true);
        cfg.grid = checked_grid(o);
        if (o.particles == 0) throw UsageError("--particles must be at least 1");
        cfg.n_particles = o.particles;
        cfg.base_seed = o.seed;
        cfg.initial_law = o.x0 ? simulate::InitialLaw::point(*o.x0) : simulate::InitialLaw::normal();
        return [=] {
            const auto dir = prepare_out_dir(o);
            const auto factor = fbm::build_increment_factor(cfg.grid, cfg.hurst);
            const auto ens = simulate::simulate_em(cfg, simulate::driving_paths(cfg, factor, cfg.n_particles));
            std::ostringstream out;
            out << "particle,t,value\n";
            for (std::size_t i = 0; i < ens.particles(); ++i) {
                for (std::size_t k = 0; k < ens.nodes(); ++k) {
                    out << i << ',' << fmt(ens.grid().node(k)) << ',' << fmt(ens.state(i, k)[0]) << '\n';
                }
            }
            write_text(dir / "paths.csv", out.str());
            std::ostringstream side;
            side << "model=" << cfg.model.name << "\nhurst=" << fmt(o.hurst) << "\nparticles=" << cfg.n_particles
                 << "\nn_steps=" << cfg.grid.steps() << "\nt_end=" << fmt(o.t_end) << "\nseed=" << o.seed
                 << "\ninitial=" << (o.x0 ? "point:" + fmt(*o.x0) : std::string("standard-normal")) << '\n';
            write_text(experiments::sidecar_path(dir / "paths.csv"), side.str());
            std::cerr << "wrote " << (dir / "paths.csv").string() << '\n';
            return kExitOk;
        };
    });
}

void print_report(const experiments::ConvergenceReport& r, const fs::path& csv) {
    std::cout << experiments::report_csv(r);
    std::cout << "slope_sup=" << fmt(r.fit_sup.slope) << " slope_holder=" << fmt(r.fit_holder.slope);
    if (r.kind == experiments::ReportKind::timestep) {
        std::cout << " theory_temporal_rate=" << fmt(r.theory.temporal_rate) << '\n';
    } else {
        std::cout << " theory_chaos_exponent=" << fmt(r.theory.chaos_rms_exponent()) << '\n';
    }
    std::cerr << "wrote " << csv.string() << " and " << experiments::sidecar_path(csv).string() << '\n';
}

simulate::SimConfig sweep_config(const Options& o) {
    simulate::SimConfig cfg;
    cfg.model = checked_model(o, "example-sine");
    cfg.hurst = checked_hurst(o, true);
    cfg.grid = TimeGrid(0.0, o.t_end > 0.0 ? o.t_end : throw UsageError("--t-end must be positive"), 1);
    cfg.base_seed = o.seed;
    cfg.initial_law = simulate::InitialLaw::normal();
    experiments::check_beta_window(o.hurst, o.beta);
    if (o.reps == 0) throw UsageError("--reps must be at least 1");
    if (o.workers == 0) throw UsageError("--workers must be at least 1");
    return cfg;
}

int cmd_converge_dt(const Options& o) {
    return guarded([&]() -> std::function<int()> {
        auto cfg = sweep_config(o);
        if (o.particles == 0) throw UsageError("--particles must be at least 1");
        cfg.n_particles = o.particles;
        if (o.dts.empty()) throw UsageError("--dts needs at least one value");
        for (double dt : o.dts) experiments::detail::steps_for(o.t_end, dt);
        if (o.refine_ref < 8) throw UsageError("--refine-ref must be at least 8");
        experiments::DtSweepOptions opts;
        opts.workers = o.workers;
        if (o.window == "whole") opts.window = experiments::ErrorWindow::whole_interval;
        else if (o.window == "per-cell") opts.window = experiments::ErrorWindow::per_cell;
        else throw UsageError("--window must be 'whole' or 'per-cell'");
        const std::string name = o.report.empty() ? "report_dt.csv" : o.report;
        return [=] {
            const auto dir = prepare_out_dir(o);
            const auto report = experiments::run_dt_convergence(cfg, o.dts, o.refine_ref, o.reps, o.beta, opts);
            experiments::write_report(report, dir / name);
            print_report(report, dir / name);
            return kExitOk;
        };
    });
}

int cmd_converge_n(const Options& o) {
    return guarded([&]() -> std::function<int()> {
        auto cfg = sweep_config(o);
        cfg.grid = checked_grid(o);
        cfg.n_particles = 1;
        if (!(o.q > 2.0) || o.q == 4.0) throw UsageError("--q requires q > 2 and q != 4");
        if (o.n_values.empty()) throw UsageError("--n-values needs at least one value");
        for (std::size_t n : o.n_values) {
            if (n == 0 || n > o.n_ref) throw UsageError("--n-values requires 1 <= N <= n_ref");
        }
        const std::string name = o.report.empty() ? "report_n.csv" : o.report;
        return [=] {
            const auto dir = prepare_out_dir(o);
            const auto report =
                experiments::run_n_convergence(cfg, o.n_values, o.n_ref, o.reps, o.beta, o.q, o.workers);
            experiments::write_report(report, dir / name);
            print_report(report, dir / name);
            return kExitOk;
        };
    });
}

// ---------------------------------------------------------------------------
// selftest: small embedded oracle checks

struct CheckOutcome {
    double computed;
    double expected;
    double tolerance;
};

struct Check {
    std::string group;
    std::string name;
    std::function<CheckOutcome()> run;
};

double normwise(std::span<const double> a, std::span<const double> b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return num / den;
}

std::vector<Check> selftest_checks() {
    using fracalc::FractionalOrder;
    using fracalc::SampledFunction;
    std::vector<Check> checks;

    checks.push_back({"fbm", "fbm-factor covariance", [] {
                          const HurstParameter h(0.7);
                          const TimeGrid grid(0.0, 1.0, 6);
                          const auto f = fbm::build_increment_factor(grid, h);
                          double worst = 0.0;
                          for (std::size_t i = 0; i < 6; ++i) {
                              for (std::size_t j = 0; j < 6; ++j) {
                                  double llt = 0.0;
                                  for (std::size_t k = 0; k < 6; ++k) llt += f(i, k) * f(j, k);
                                  const double s = fbm::covariance(grid.node(i + 1), grid.node(j + 1), h) -
                                                   fbm::covariance(grid.node(i + 1), grid.node(j), h) -
                                                   fbm::covariance(grid.node(i), grid.node(j + 1), h) +
                                                   fbm::covariance(grid.node(i), grid.node(j), h);
                                  worst = std::max(worst, std::abs(llt - s));
                              }
                          }
                          return CheckOutcome{worst, 0.0, 1e-12};
                      }});
    checks.push_back({"fracalc", "rl-integral constant", [] {
                          const TimeGrid grid(0.0, 1.0, 200);
                          const auto f = SampledFunction::from(grid, [](double) { return 1.0; });
                          const auto i = fracalc::rl_integral_left(f, FractionalOrder(0.5));
                          double worst = 0.0;
                          for (std::size_t k = 0; k <= 200; ++k) {
                              worst = std::max(worst, std::abs(i[k] - std::sqrt(grid.node(k)) / std::tgamma(1.5)));
                          }
                          return CheckOutcome{worst, 0.0, 1e-8};
                      }});
    checks.push_back({"fracalc", "weyl-derivative linear", [] {
                          const TimeGrid grid(0.0, 1.0, 200);
                          const auto f = SampledFunction::from(grid, [](double x) { return x; });
                          const auto d = fracalc::weyl_derivative_left(f, FractionalOrder(0.5));
                          double worst = 0.0;
                          for (std::size_t k = 1; k <= 200; ++k) {
                              worst = std::max(worst, std::abs(d.at(k) - std::sqrt(grid.node(k)) / std::tgamma(1.5)));
                          }
                          return CheckOutcome{worst, 0.0, 1e-10};
                      }});
    checks.push_back({"fracalc", "rl-integral semigroup", [] {
                          const TimeGrid grid(0.0, 1.0, 2000);
                          const auto f = SampledFunction::from(grid, [](double x) { return x * x; });
                          const auto c = fracalc::rl_integral_left(fracalc::rl_integral_left(f, FractionalOrder(0.4)),
                                                                   FractionalOrder(0.3));
                          const auto d = fracalc::rl_integral_left(f, FractionalOrder(0.7));
                          return CheckOutcome{normwise(c.values(), d.values()), 0.0, 1e-4};
                      }});
    checks.push_back({"fracalc", "weyl-derivative inversion", [] {
                          const TimeGrid grid(0.0, 1.0, 2000);
                          const auto f = SampledFunction::from(grid, [](double x) { return x * x; });
                          const auto d = fracalc::weyl_derivative_left(
                              fracalc::rl_integral_left(f, FractionalOrder(0.5)), FractionalOrder(0.5));
                          return CheckOutcome{normwise(d.values, f.values().subspan(1)), 0.0, 1e-4};
                      }});
    checks.push_back({"fracalc", "young-integral polynomial", [] {
                          const TimeGrid grid(0.0, 1.0, 2000);
                          const auto f = SampledFunction::from(grid, [](double t) { return t; });
                          const auto g = SampledFunction::from(grid, [](double t) { return t * t; });
                          return CheckOutcome{fracalc::young_integral(f, g, {0.4}), 2.0 / 3.0, 1e-6};
                      }});
    checks.push_back({"fracalc", "young-integral telescoping", [] {
                          const TimeGrid grid(0.0, 1.0, 500);
                          const auto f = SampledFunction::from(grid, [](double) { return 1.0; });
                          const auto g = SampledFunction::from(grid, [](double t) { return std::sin(3.0 * t); });
                          return CheckOutcome{fracalc::young_integral(f, g), std::sin(3.0), 1e-6};
                      }});
    checks.push_back({"measures", "w2-1d brute force", [] {
                          std::mt19937_64 rng(5);
                          std::normal_distribution<double> normal;
                          double worst = 0.0;
                          for (int t = 0; t < 200; ++t) {
                              const std::size_t n = 1 + static_cast<std::size_t>(t % 7);
                              std::vector<double> a(n), b(n);
                              for (double& v : a) v = normal(rng);
                              for (double& v : b) v = normal(rng);
                              std::vector<std::size_t> perm(n);
                              for (std::size_t i = 0; i < n; ++i) perm[i] = i;
                              double best = INFINITY;
                              do {
                                  double c = 0.0;
                                  for (std::size_t i = 0; i < n; ++i) c += (a[i] - b[perm[i]]) * (a[i] - b[perm[i]]);
                                  best = std::min(best, c);
                              } while (std::next_permutation(perm.begin(), perm.end()));
                              const double w = measures::w2_1d(measures::EmpiricalMeasure::line(a),
                                                               measures::EmpiricalMeasure::line(b));
                              worst = std::max(worst, std::abs(w - std::sqrt(best / static_cast<double>(n))));
                          }
                          return CheckOutcome{worst, 0.0, 1e-12};
                      }});
    checks.push_back({"measures", "holder-seminorm tent", [] {
                          const TimeGrid grid(0.0, 1.0, 2);
                          const std::vector<double> v{0.0, 1.0, 0.0};
                          return CheckOutcome{measures::holder_seminorm({grid, v, 1}, 0.5, 0, 2).value, std::sqrt(2.0),
                                              1e-15};
                      }});
    checks.push_back({"model", "lipschitz example-sine", [] {
                          const double k = model::lipschitz_probe(model::example_sine(), 2000, 7);
                          return CheckOutcome{std::max(k, 1.0), 1.0, 1e-9};
                      }});
    checks.push_back({"simulate", "em mean recursion", [] {
                          simulate::SimConfig c;
                          c.model = model::linear_noiseless();
                          c.n_particles = 16;
                          c.grid = TimeGrid(0.0, 1.0, 64);
                          c.base_seed = 3;
                          const auto f = fbm::build_increment_factor(c.grid, c.hurst);
                          const auto ens = simulate::simulate_em(c, simulate::driving_paths(c, f, 16));
                          auto mean = [&](std::size_t k) {
                              double s = 0.0;
                              for (std::size_t i = 0; i < 16; ++i) s += ens.state(i, k)[0];
                              return s / 16.0;
                          };
                          double worst = 0.0;
                          for (std::size_t k = 0; k <= 64; ++k) {
                              const double expect = std::pow(1.0 + 2.0 * c.grid.dt(), static_cast<double>(k)) * mean(0);
                              worst = std::max(worst, std::abs(mean(k) - expect));
                          }
                          return CheckOutcome{worst, 0.0, 1e-12};
                      }});
    return checks;
}

int cmd_selftest(const Options& o) {
    std::size_t ran = 0, failed = 0;
    for (const auto& check : selftest_checks()) {
        if (!o.filter.empty() && check.group.find(o.filter) == std::string::npos &&
            check.name.find(o.filter) == std::string::npos) {
            continue;
        }
        ++ran;
        bool pass = false;
        std::string detail;
        try {
            auto out = check.run();
            if (o.inject_fault) out.computed += 1e-3 * (1.0 + std::abs(out.expected));
            pass = std::abs(out.computed - out.expected) <= out.tolerance;
            if (!pass) {
                detail = " (computed " + fmt(out.computed) + ", expected " + fmt(out.expected) + ", tolerance " +
                         fmt(out.tolerance) + ")";
            }
        } catch (const std::exception& e) {
            detail = std::string(" (") + e.what() + ")";
        }
        if (!pass) ++failed;
        std::cout << check.name << ": " << (pass ? "PASS" : "FAIL") << detail << '\n';
    }
    if (ran == 0) {
        std::cerr << "error: no selftest checks match filter '" << o.filter << "'\n";
        return kExitUsage;
    }
    std::cout << "selftest: " << (ran - failed) << " passed, " << failed << " failed\n";
    return failed == 0 ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    CLI::App app{"Euler-Maruyama for mean-field SDEs driven by fractional Brownian motion"};
    app.name("mvfbm");
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "Read options from a file of 'key = value' lines");

    app.add_option("--hurst", o.hurst, "Hurst parameter H in (0, 1)")->capture_default_str();
    app.add_option("--beta", o.beta, "Hoelder exponent beta with 1/2 < beta < H")->capture_default_str();
    app.add_option("--t-end", o.t_end, "Time horizon T")->capture_default_str();
    app.add_option("--n-steps,--n", o.n_steps, "Number of time steps")->capture_default_str();
    app.add_option("--particles", o.particles, "Number of particles N")->capture_default_str();
    app.add_option("--reps", o.reps, "Monte Carlo replications")->capture_default_str();
    app.add_option("--seed", o.seed, "Base seed")->capture_default_str();
    app.add_option("--workers", o.workers, "Worker threads")->envname("MVFBM_WORKERS")->capture_default_str();
    app.add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();
    app.add_option("--model", o.model, "example-sine or linear-noiseless");
    app.add_flag("--strict-regime", o.strict_regime, "Reject H <= (sqrt(5)-1)/2 instead of warning");

    auto* fbm_gen = app.add_subcommand("fbm-gen", "Sample one fBm path to fbm.csv");
    auto* sim = app.add_subcommand("simulate", "Simulate the particle system to paths.csv");
    sim->add_option("--x0", o.x0, "Point-mass initial state (default: standard normal)");

    auto* cdt = app.add_subcommand("converge-dt", "Strong error against a fine-grid reference");
    cdt->add_option("--dts", o.dts, "Time steps (comma separated)")->delimiter(',')->capture_default_str();
    cdt->add_option("--refine-ref", o.refine_ref, "Reference refinement of the finest step")->capture_default_str();
    cdt->add_option("--window", o.window, "Error window: whole or per-cell")->capture_default_str();
    cdt->add_option("--report", o.report, "Report file name inside --out-dir (default report_dt.csv)");

    auto* cn = app.add_subcommand("converge-n", "Propagation-of-chaos error against a large coupled system");
    cn->add_option("--n-values", o.n_values, "Particle counts (comma separated)")->delimiter(',')->capture_default_str();
    cn->add_option("--n-ref", o.n_ref, "Reference system size")->capture_default_str();
    cn->add_option("--q", o.q, "Moment parameter q > 2, q != 4")->capture_default_str();
    cn->add_option("--report", o.report, "Report file name inside --out-dir (default report_n.csv)");

    auto* st = app.add_subcommand("selftest", "Run embedded oracle checks");
    st->add_option("--filter", o.filter, "Only run checks whose group or name contains this text");
    st->add_flag("--inject-fault", o.inject_fault)->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (*fbm_gen) return cmd_fbm_gen(o);
    if (*sim) return cmd_simulate(o);
    if (*cdt) return cmd_converge_dt(o);
    if (*cn) return cmd_converge_n(o);
    if (*st) return cmd_selftest(o);
    return kExitUsage;
}
