#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mvfbm/errors.hpp"
#include "mvfbm/fbm.hpp"
#include "mvfbm/measures.hpp"
#include "mvfbm/simulate.hpp"

namespace mvfbm::experiments {

using measures::PathEnsemble;
using simulate::SimConfig;

// ---------------------------------------------------------------------------
// Theory rates

// Rounds a rate built from decimal inputs back onto a 1e-12 lattice so that
// e.g. min(0.9 - 0.8, 0.8 - 0.64) reports as 0.1.
inline double tidy_rate(double x) { return std::round(x * 1e12) / 1e12; }

// Exponent e of eps_N ~ N^e for the W2 rate of empirical measures with p = 2
// moments in dimension d and a finite q-th moment.
inline double chaos_eps_exponent(std::size_t d, double q, double p = 2.0) {
    if (!(q > p)) throw DomainError("moment parameter q must exceed p = 2");
    const double dd = static_cast<double>(d);
    const double tail = (q - p) / q;
    if (p > dd / 2.0) {
        if (q == 2.0 * p) throw DomainError("q = 2p is excluded from the rate table");
        return -std::min(0.5, tail);
    }
    if (p == dd / 2.0) {
        if (q == 2.0 * p) throw DomainError("q = 2p is excluded from the rate table");
        return -std::min(0.5, tail);  // up to a log(1 + N) factor
    }
    if (q == dd / (dd - p)) throw DomainError("q = d/(d-p) is excluded from the rate table");
    return -std::min(p / dd, tail);
}

struct RateTheory {
    double hurst = 0.0;
    double beta = 0.0;
    double temporal_rate = 0.0;       // min(H - beta, beta - beta^2)
    double chaos_eps_exponent = 0.0;  // eps_N ~ N^{chaos_eps_exponent}

    // RMS error exponent in N implied by eps_N.
    double chaos_rms_exponent() const { return tidy_rate(chaos_eps_exponent / 2.0); }
};

inline void check_beta_window(double hurst, double beta) {
    if (!(beta > 0.5 && beta < hurst)) {
        throw DomainError("requires 1/2 < beta < H (got beta=" + std::to_string(beta) +
                          ", H=" + std::to_string(hurst) + ")");
    }
}

inline RateTheory rate_theory(double hurst, double beta, std::size_t d = 1, double q = 8.0) {
    check_beta_window(hurst, beta);
    RateTheory t;
    t.hurst = hurst;
    t.beta = beta;
    t.temporal_rate = tidy_rate(std::min(hurst - beta, beta - beta * beta));
    t.chaos_eps_exponent = tidy_rate(chaos_eps_exponent(d, q));
    return t;
}

// ---------------------------------------------------------------------------
// Regression

struct FitResult {
    bool defined = false;
    double slope = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    double r_squared = std::numeric_limits<double>::quiet_NaN();
};

// Least squares of log(error) on log(parameter).
inline FitResult fit_rate(const std::vector<std::pair<double, double>>& points) {
    for (const auto& [x, y] : points) {
        if (!(x > 0.0) || !(y > 0.0)) throw DomainError("fit_rate needs positive parameters and errors");
    }
    FitResult fit;
    if (points.size() < 2) return fit;
    const double m = static_cast<double>(points.size());
    double sx = 0.0, sy = 0.0;
    for (const auto& [x, y] : points) {
        sx += std::log(x);
        sy += std::log(y);
    }
    const double mx = sx / m;
    const double my = sy / m;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [x, y] : points) {
        const double dx = std::log(x) - mx;
        const double dy = std::log(y) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx == 0.0) return fit;
    fit.defined = true;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    return fit;
}

// ---------------------------------------------------------------------------
// Replications

template <class R>
struct Replication {
    std::optional<R> value;
    std::string error;

    bool ok() const noexcept { return value.has_value(); }
};

// Runs kernel(0..replications-1) on `workers` threads. Results are indexed by
// replication, so the output does not depend on scheduling. Exceptions are
// captured per replication.
template <class R>
std::vector<Replication<R>> monte_carlo(std::size_t replications, const std::function<R(std::size_t)>& kernel,
                                        std::size_t workers = 1) {
    std::vector<Replication<R>> results(replications);
    if (replications == 0) return results;
    workers = std::clamp<std::size_t>(workers, 1, replications);
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        for (std::size_t r = next.fetch_add(1); r < replications; r = next.fetch_add(1)) {
            try {
                results[r].value = kernel(r);
            } catch (const std::exception& e) {
                results[r].error = e.what();
            }
        }
    };
    if (workers == 1) {
        run();
        return results;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
    return results;
}

inline constexpr double kMinSuccessFraction = 0.8;

// ---------------------------------------------------------------------------
// Reports

enum class ReportKind { timestep, particles };

struct ReportRow {
    double param = 0.0;
    double err_sup_mean = 0.0;
    double err_sup_se = 0.0;
    double err_holder_mean = 0.0;
    double err_holder_se = 0.0;
    std::size_t reps = 0;
    std::size_t failures = 0;

    friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

// Second moments of the scheme itself, E||Z||^2_inf and E||Z||^2_beta.
struct MomentRow {
    double param = 0.0;
    double sup_second_moment = 0.0;
    double holder_second_moment = 0.0;
};

struct ConvergenceReport {
    ReportKind kind = ReportKind::timestep;
    std::vector<ReportRow> rows;
    FitResult fit_sup;
    FitResult fit_holder;
    RateTheory theory;
    std::uint64_t seed = 0;
    // Reference solution is fine-grid EM (timestep) or a large coupled
    // system (particles), not the exact limit.
    bool surrogate_reference = true;
    std::vector<MomentRow> moments;
    std::vector<std::uint64_t> failed_replications;
};

namespace detail {

struct Accumulated {
    double mean = 0.0;
    double se = 0.0;
};

// sqrt(mean Y) with a delta-method standard error from the sample stdev of Y.
inline Accumulated root_mean(const std::vector<double>& ys) {
    Accumulated a;
    const double m = static_cast<double>(ys.size());
    if (ys.empty()) return a;
    double s = 0.0;
    for (double y : ys) s += y;
    const double mean_sq = s / m;
    a.mean = std::sqrt(mean_sq);
    if (ys.size() > 1 && a.mean > 0.0) {
        double v = 0.0;
        for (double y : ys) v += (y - mean_sq) * (y - mean_sq);
        const double sd = std::sqrt(v / (m - 1.0));
        a.se = sd / std::sqrt(m) / (2.0 * a.mean);
    }
    return a;
}

inline double mean_of(const std::vector<double>& ys) {
    double s = 0.0;
    for (double y : ys) s += y;
    return ys.empty() ? 0.0 : s / static_cast<double>(ys.size());
}

inline std::size_t steps_for(double length, double dt) {
    if (!(dt > 0.0)) throw DomainError("time steps must be positive");
    const double ratio = length / dt;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
        throw DomainError("time step " + std::to_string(dt) + " does not divide the horizon");
    }
    return static_cast<std::size_t>(rounded);
}

// Per-particle squared sup and squared beta-Hoelder distance between
// trajectories i of two ensembles on the same grid, over nodes [a, b].
inline std::pair<double, double> squared_errors(const PathEnsemble& x, std::size_t xi, const PathEnsemble& y,
                                                std::size_t yi, double beta, std::size_t a, std::size_t b,
                                                std::vector<double>& scratch) {
    const std::size_t d = x.dim();
    const std::size_t len = (b - a + 1) * d;
    scratch.resize(len);
    const auto px = x.path(xi).subspan(a * d, len);
    const auto py = y.path(yi).subspan(a * d, len);
    double sup = 0.0;
    for (std::size_t k = 0; k < len; k += d) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            scratch[k + c] = px[k + c] - py[k + c];
            s += scratch[k + c] * scratch[k + c];
        }
        sup = std::max(sup, s);
    }
    const TimeGrid window(x.grid().node(a), x.grid().node(b), b - a);
    const measures::PathView diff{window, scratch, d};
    const double h = measures::holder_seminorm(diff, beta, 0, b - a).value;
    return {sup, h * h};
}

template <class R>
std::vector<R> successes(const std::vector<Replication<R>>& reps, std::vector<std::uint64_t>& failed,
                         std::uint64_t seed) {
    std::vector<R> ok;
    std::string first_error;
    for (std::size_t r = 0; r < reps.size(); ++r) {
        if (reps[r].ok()) {
            ok.push_back(*reps[r].value);
        } else {
            failed.push_back(r);
            if (first_error.empty()) first_error = reps[r].error;
        }
    }
    if (static_cast<double>(ok.size()) < kMinSuccessFraction * static_cast<double>(reps.size())) {
        throw ExperimentError("only " + std::to_string(ok.size()) + " of " + std::to_string(reps.size()) +
                              " replications succeeded (seed " + std::to_string(seed) + "): " + first_error);
    }
    return ok;
}

inline void fit_report(ConvergenceReport& report) {
    std::vector<std::pair<double, double>> sup, hol;
    for (const auto& row : report.rows) {
        if (row.err_sup_mean > 0.0) sup.emplace_back(row.param, row.err_sup_mean);
        if (row.err_holder_mean > 0.0) hol.emplace_back(row.param, row.err_holder_mean);
    }
    report.fit_sup = fit_rate(sup);
    report.fit_holder = fit_rate(hol);
}

}  // namespace detail

enum class ErrorWindow {
    // sup and Hoelder norms over [0, T] at the scheme nodes
    whole_interval,
    // largest per-cell norm of the continuous extension against the reference
    per_cell,
};

struct DtSweepOptions {
    std::size_t workers = 1;
    ErrorWindow window = ErrorWindow::whole_interval;
};

// Strong error of the EM scheme in the time step. Every replication samples one
// set of N fBm paths on the reference grid (finest dt / refine_ref), restricts
// it to each dt, and compares each scheme to the reference EM driven by the
// same noise.
inline ConvergenceReport run_dt_convergence(const SimConfig& config, std::vector<double> dts,
                                            std::size_t refine_ref, std::size_t replications, double beta,
                                            DtSweepOptions opts = {}) {
    config.validate();
    check_beta_window(config.hurst.value(), beta);
    if (dts.empty()) throw DomainError("dt sweep needs at least one time step");
    if (refine_ref < 8) throw DomainError("reference refinement must be at least 8");
    std::sort(dts.begin(), dts.end());
    dts.erase(std::unique(dts.begin(), dts.end()), dts.end());

    const double length = config.grid.length();
    std::vector<std::size_t> steps;
    for (double dt : dts) steps.push_back(detail::steps_for(length, dt));
    const std::size_t fine_steps = steps.front() * refine_ref;
    for (std::size_t n : steps) {
        if (fine_steps % n != 0) throw DomainError("time steps must nest inside the reference grid");
    }
    const TimeGrid fine(config.grid.start(), config.grid.end(), fine_steps);
    const auto factor = fbm::build_increment_factor(fine, config.hurst);
    const std::size_t n_particles = config.n_particles;
    const std::size_t d = config.model.dim;

    struct PerRep {
        std::vector<double> sup_sq, hol_sq, mom_sup, mom_hol;
    };

    auto kernel = [&](std::size_t rep) {
        SimConfig cfg = config;
        cfg.replication = rep;
        const auto x0 = simulate::initial_states(cfg, n_particles);
        const auto paths = simulate::driving_paths(cfg, factor, n_particles);
        const auto reference = simulate::simulate_em(cfg.model, fine, x0, paths);

        PerRep out;
        std::vector<double> scratch;
        for (std::size_t level = 0; level < steps.size(); ++level) {
            const std::size_t n = steps[level];
            const std::size_t ratio = fine_steps / n;
            const TimeGrid coarse(config.grid.start(), config.grid.end(), n);
            std::vector<fbm::FbmPath> coarse_paths;
            coarse_paths.reserve(paths.size());
            for (const auto& p : paths) coarse_paths.push_back(fbm::coarsen(p, ratio));
            const auto scheme = simulate::simulate_em(cfg.model, coarse, x0, coarse_paths);

            double sup_sq = 0.0, hol_sq = 0.0, m_sup = 0.0, m_hol = 0.0;
            if (opts.window == ErrorWindow::whole_interval) {
                const auto ref_nodes = reference.restricted(ratio);
                for (std::size_t i = 0; i < n_particles; ++i) {
                    const auto [s, h] = detail::squared_errors(ref_nodes, i, scheme, i, beta, 0, n, scratch);
                    sup_sq += s;
                    hol_sq += h;
                }
            } else {
                const auto cont = simulate::simulate_em_continuous(cfg.model, coarse, x0, paths, ratio);
                for (std::size_t i = 0; i < n_particles; ++i) {
                    double s_max = 0.0, h_max = 0.0;
                    for (std::size_t k = 0; k < n; ++k) {
                        const auto [s, h] =
                            detail::squared_errors(reference, i, cont, i, beta, k * ratio, (k + 1) * ratio, scratch);
                        s_max = std::max(s_max, s);
                        h_max = std::max(h_max, h);
                    }
                    sup_sq += s_max;
                    hol_sq += h_max;
                }
            }
            for (std::size_t i = 0; i < n_particles; ++i) {
                const measures::PathView z{scheme.grid(), scheme.path(i), d};
                double s = 0.0;
                for (std::size_t k = 0; k < scheme.nodes(); ++k) {
                    double a = 0.0;
                    for (double v : z.at(k)) a += v * v;
                    s = std::max(s, a);
                }
                const double h = measures::holder_seminorm(z, beta, 0, n).value;
                m_sup += s;
                m_hol += h * h;
            }
            const double np = static_cast<double>(n_particles);
            out.sup_sq.push_back(sup_sq / np);
            out.hol_sq.push_back(hol_sq / np);
            out.mom_sup.push_back(m_sup / np);
            out.mom_hol.push_back(m_hol / np);
        }
        return out;
    };

    const auto reps = monte_carlo<PerRep>(replications, kernel, opts.workers);
    ConvergenceReport report;
    report.kind = ReportKind::timestep;
    report.seed = config.base_seed;
    report.theory = rate_theory(config.hurst.value(), beta);
    const auto ok = detail::successes(reps, report.failed_replications, config.base_seed);

    for (std::size_t level = 0; level < steps.size(); ++level) {
        std::vector<double> s, h, ms, mh;
        for (const auto& r : ok) {
            s.push_back(r.sup_sq[level]);
            h.push_back(r.hol_sq[level]);
            ms.push_back(r.mom_sup[level]);
            mh.push_back(r.mom_hol[level]);
        }
        const auto sup = detail::root_mean(s);
        const auto hol = detail::root_mean(h);
        report.rows.push_back({dts[level], sup.mean, sup.se, hol.mean, hol.se, ok.size(),
                               report.failed_replications.size()});
        report.moments.push_back({dts[level], detail::mean_of(ms), detail::mean_of(mh)});
    }
    detail::fit_report(report);
    return report;
}

// Propagation-of-chaos error in N. Each replication simulates one n_ref
// system; every N in n_values reuses its first N initial states and noises.
// Errors are taken over the first min(n_values) particles.
inline ConvergenceReport run_n_convergence(const SimConfig& config, std::vector<std::size_t> n_values,
                                           std::size_t n_ref, std::size_t replications, double beta, double q,
                                           std::size_t workers = 1) {
    config.validate();
    check_beta_window(config.hurst.value(), beta);
    if (n_values.empty()) throw DomainError("particle sweep needs at least one N");
    if (!(q > 2.0) || q == 4.0) throw DomainError("requires q > 2 and q != 4");
    std::sort(n_values.begin(), n_values.end());
    n_values.erase(std::unique(n_values.begin(), n_values.end()), n_values.end());
    if (n_values.front() == 0 || n_values.back() > n_ref) throw DomainError("requires 1 <= N <= n_ref");

    const auto factor = fbm::build_increment_factor(config.grid, config.hurst);
    const std::size_t tracked = n_values.front();
    const std::size_t n_steps = config.grid.steps();

    struct PerRep {
        std::vector<double> sup_sq, hol_sq;
    };

    auto kernel = [&](std::size_t rep) {
        SimConfig cfg = config;
        cfg.replication = rep;
        cfg.n_particles = n_ref;
        const auto paths = simulate::driving_paths(cfg, factor, n_ref);
        const auto x0 = simulate::initial_states(cfg, n_ref);
        const auto reference = simulate::simulate_em(cfg.model, cfg.grid, x0, paths);
        PerRep out;
        std::vector<double> scratch;
        for (std::size_t n : n_values) {
            const std::size_t d = cfg.model.dim;
            const std::vector<fbm::FbmPath> head(paths.begin(), paths.begin() + static_cast<std::ptrdiff_t>(n * d));
            const auto small =
                simulate::simulate_em(cfg.model, cfg.grid, std::span<const double>(x0).first(n * d), head);
            double s = 0.0, h = 0.0;
            for (std::size_t i = 0; i < tracked; ++i) {
                const auto [es, eh] = detail::squared_errors(small, i, reference, i, beta, 0, n_steps, scratch);
                s += es;
                h += eh;
            }
            out.sup_sq.push_back(s / static_cast<double>(tracked));
            out.hol_sq.push_back(h / static_cast<double>(tracked));
        }
        return out;
    };

    const auto reps = monte_carlo<PerRep>(replications, kernel, workers);
    ConvergenceReport report;
    report.kind = ReportKind::particles;
    report.seed = config.base_seed;
    report.theory = rate_theory(config.hurst.value(), beta, config.model.dim, q);
    const auto ok = detail::successes(reps, report.failed_replications, config.base_seed);
    for (std::size_t level = 0; level < n_values.size(); ++level) {
        std::vector<double> s, h;
        for (const auto& r : ok) {
            s.push_back(r.sup_sq[level]);
            h.push_back(r.hol_sq[level]);
        }
        const auto sup = detail::root_mean(s);
        const auto hol = detail::root_mean(h);
        report.rows.push_back({static_cast<double>(n_values[level]), sup.mean, sup.se, hol.mean, hol.se, ok.size(),
                               report.failed_replications.size()});
    }
    detail::fit_report(report);
    return report;
}

// Gap between the continuous and piecewise-constant extensions of the scheme,
// E||Z - Zbar||^2 on a single cell, averaged over cells and particles.
struct GapRow {
    double dt = 0.0;
    double sup_gap_sq = 0.0;
    double sup_gap_sq_se = 0.0;
    double holder_gap_sq = 0.0;
    double holder_gap_sq_se = 0.0;
};

struct GapReport {
    std::vector<GapRow> rows;
    FitResult fit_sup;
    FitResult fit_holder;
    double beta = 0.0;
};

inline GapReport run_extension_gap(const SimConfig& config, std::vector<double> dts, std::size_t fine_steps,
                                   std::size_t replications, double beta, std::size_t workers = 1) {
    config.validate();
    check_beta_window(config.hurst.value(), beta);
    if (dts.empty()) throw DomainError("gap sweep needs at least one time step");
    std::sort(dts.begin(), dts.end());
    std::vector<std::size_t> steps;
    for (double dt : dts) {
        steps.push_back(detail::steps_for(config.grid.length(), dt));
        if (fine_steps % steps.back() != 0 || fine_steps / steps.back() < 2) {
            throw DomainError("gap sweep needs each dt refined at least twice by the fine grid");
        }
    }
    const TimeGrid fine(config.grid.start(), config.grid.end(), fine_steps);
    const auto factor = fbm::build_increment_factor(fine, config.hurst);
    const std::size_t n_particles = config.n_particles;

    struct PerRep {
        std::vector<double> sup_sq, hol_sq;
    };
    auto kernel = [&](std::size_t rep) {
        SimConfig cfg = config;
        cfg.replication = rep;
        const auto x0 = simulate::initial_states(cfg, n_particles);
        const auto paths = simulate::driving_paths(cfg, factor, n_particles);
        PerRep out;
        for (std::size_t n : steps) {
            const std::size_t refine = fine_steps / n;
            const TimeGrid coarse(config.grid.start(), config.grid.end(), n);
            const auto cont = simulate::simulate_em_continuous(cfg.model, coarse, x0, paths, refine);
            const auto w = measures::detail::lag_weights(fine, refine, beta);
            double s_acc = 0.0, h_acc = 0.0;
            for (std::size_t i = 0; i < n_particles; ++i) {
                for (std::size_t k = 0; k < n; ++k) {
                    const auto left = cont.state(i, k * refine);
                    double s_max = 0.0, h_max = 0.0;
                    for (std::size_t a = 0; a <= refine; ++a) {
                        const auto za = cont.state(i, k * refine + a);
                        s_max = std::max(s_max, measures::detail::distance(za, left));
                        for (std::size_t b = a + 1; b <= refine; ++b) {
                            const auto zb = cont.state(i, k * refine + b);
                            h_max = std::max(h_max, measures::detail::distance(zb, za) * w[b - a]);
                        }
                    }
                    s_acc += s_max * s_max;
                    h_acc += h_max * h_max;
                }
            }
            const double cells = static_cast<double>(n * n_particles);
            out.sup_sq.push_back(s_acc / cells);
            out.hol_sq.push_back(h_acc / cells);
        }
        return out;
    };
    const auto reps = monte_carlo<PerRep>(replications, kernel, workers);
    std::vector<std::uint64_t> failed;
    const auto ok = detail::successes(reps, failed, config.base_seed);

    GapReport report;
    report.beta = beta;
    std::vector<std::pair<double, double>> fs, fh;
    for (std::size_t level = 0; level < steps.size(); ++level) {
        std::vector<double> s, h;
        for (const auto& r : ok) {
            s.push_back(r.sup_sq[level]);
            h.push_back(r.hol_sq[level]);
        }
        auto se = [](const std::vector<double>& v, double mean) {
            if (v.size() < 2) return 0.0;
            double acc = 0.0;
            for (double x : v) acc += (x - mean) * (x - mean);
            return std::sqrt(acc / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
        };
        GapRow row{dts[level], detail::mean_of(s), 0.0, detail::mean_of(h), 0.0};
        row.sup_gap_sq_se = se(s, row.sup_gap_sq);
        row.holder_gap_sq_se = se(h, row.holder_gap_sq);
        report.rows.push_back(row);
        if (row.sup_gap_sq > 0.0) fs.emplace_back(row.dt, row.sup_gap_sq);
        if (row.holder_gap_sq > 0.0) fh.emplace_back(row.dt, row.holder_gap_sq);
    }
    report.fit_sup = fit_rate(fs);
    report.fit_holder = fit_rate(fh);
    return report;
}

// ---------------------------------------------------------------------------
// CSV + sidecar

inline const char* kReportHeader = "param,err_sup_mean,err_sup_se,err_holder_mean,err_holder_se,reps,failures";

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double x = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw DomainError("cannot parse number '" + s + "'");
    return x;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
    auto p = csv;
    p.replace_extension();
    p += "_sidecar.txt";
    return p;
}

inline std::string report_csv(const ConvergenceReport& report) {
    std::ostringstream out;
    out << kReportHeader << '\n';
    for (const auto& r : report.rows) {
        out << format_double(r.param) << ',' << format_double(r.err_sup_mean) << ',' << format_double(r.err_sup_se)
            << ',' << format_double(r.err_holder_mean) << ',' << format_double(r.err_holder_se) << ',' << r.reps << ','
            << r.failures << '\n';
    }
    return out.str();
}

inline std::string report_sidecar(const ConvergenceReport& report) {
    std::ostringstream out;
    const bool timestep = report.kind == ReportKind::timestep;
    out << "kind=" << (timestep ? "timestep" : "particles") << '\n';
    if (report.rows.empty()) out << "status=error: no rows\n";
    else if (!report.fit_sup.defined) out << "status=slope undefined: fewer than 2 points\n";
    else out << "status=ok\n";
    out << "slope_sup=" << format_double(report.fit_sup.slope) << '\n';
    out << "slope_holder=" << format_double(report.fit_holder.slope) << '\n';
    out << "r_squared=" << format_double(report.fit_sup.r_squared) << '\n';
    if (timestep) out << "theory_temporal_rate=" << format_double(report.theory.temporal_rate) << '\n';
    else out << "theory_chaos_exponent=" << format_double(report.theory.chaos_rms_exponent()) << '\n';
    out << "hurst=" << format_double(report.theory.hurst) << '\n';
    out << "beta=" << format_double(report.theory.beta) << '\n';
    out << "seed=" << report.seed << '\n';
    out << "reference=" << (report.surrogate_reference ? "surrogate" : "exact") << '\n';
    if (!report.failed_replications.empty()) {
        out << "failed_replications=";
        for (std::size_t i = 0; i < report.failed_replications.size(); ++i) {
            out << (i ? ";" : "") << report.failed_replications[i];
        }
        out << '\n';
    }
    return out.str();
}

// Writes `csv_path` and its sidecar next to it.
inline void write_report(const ConvergenceReport& report, const std::filesystem::path& csv_path) {
    auto write = [](const std::filesystem::path& p, const std::string& text) {
        std::ofstream f(p, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open '" + p.string() + "' for writing");
        f << text;
        if (!f) throw std::runtime_error("failed writing '" + p.string() + "'");
    };
    write(csv_path, report_csv(report));
    write(sidecar_path(csv_path), report_sidecar(report));
}

inline std::map<std::string, std::string> read_sidecar(const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) throw std::runtime_error("cannot open '" + p.string() + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(f, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

inline ConvergenceReport read_report(const std::filesystem::path& csv_path) {
    std::ifstream f(csv_path);
    if (!f) throw std::runtime_error("cannot open '" + csv_path.string() + "'");
    std::string line;
    if (!std::getline(f, line) || line != kReportHeader) {
        throw std::runtime_error("'" + csv_path.string() + "' does not start with the report header");
    }
    ConvergenceReport report;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 7) throw std::runtime_error("malformed report row: " + line);
        ReportRow r;
        r.param = parse_double(cells[0]);
        r.err_sup_mean = parse_double(cells[1]);
        r.err_sup_se = parse_double(cells[2]);
        r.err_holder_mean = parse_double(cells[3]);
        r.err_holder_se = parse_double(cells[4]);
        r.reps = std::stoul(cells[5]);
        r.failures = std::stoul(cells[6]);
        report.rows.push_back(r);
    }
    const auto kv = read_sidecar(sidecar_path(csv_path));
    auto get = [&](const std::string& key) {
        const auto it = kv.find(key);
        if (it == kv.end()) throw std::runtime_error("sidecar is missing '" + key + "'");
        return it->second;
    };
    report.kind = get("kind") == "timestep" ? ReportKind::timestep : ReportKind::particles;
    report.fit_sup.slope = parse_double(get("slope_sup"));
    report.fit_sup.defined = !std::isnan(report.fit_sup.slope);
    report.fit_holder.slope = parse_double(get("slope_holder"));
    report.fit_holder.defined = !std::isnan(report.fit_holder.slope);
    report.fit_sup.r_squared = parse_double(get("r_squared"));
    report.theory.hurst = parse_double(get("hurst"));
    report.theory.beta = parse_double(get("beta"));
    if (report.kind == ReportKind::timestep) {
        report.theory.temporal_rate = parse_double(get("theory_temporal_rate"));
    } else {
        report.theory.chaos_eps_exponent = 2.0 * parse_double(get("theory_chaos_exponent"));
    }
    report.seed = std::stoull(get("seed"));
    report.surrogate_reference = get("reference") == "surrogate";
    return report;
}

}  // namespace mvfbm::experiments
