/**
 * @file simulator.hpp
 * @brief Monte-Carlo engine for the controlled wealth process.
 *
 * Paths are grouped into units (one path, or an antithetic pair) and units
 * into fixed-size chunks. Every unit owns an RNG stream derived from
 * (seed, unit index) and chunks are merged in index order, so results are
 * bitwise reproducible for any number of worker threads.
 */
#pragma once

#include <cstdint>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "robustmv/strategy_engine.hpp"

namespace robustmv {

struct SimConfig {
    int n_paths = 10000;
    int n_steps = 256;
    std::uint64_t seed = 42;
    bool antithetic = false;
    int threads = 0;  ///< 0: ROBUSTMV_THREADS, else hardware concurrency

    void validate() const {
        if (n_paths < 2) throw InputError("simulation needs at least 2 paths");
        if (n_steps < 1) throw InputError("simulation needs at least 1 step");
        if (antithetic && n_paths % 2 != 0)
            throw InputError("antithetic sampling needs an even number of paths");
    }
    int unit_size() const { return antithetic ? 2 : 1; }
    int n_units() const { return n_paths / unit_size(); }
};

/// Strategy as a callable: writes alpha(t, x) into `out` (already sized d).
using Rule = std::function<void(double t, double x, Vector& out)>;

/// alpha = (target - x) * direction + fixed.
struct LinearFeedback {
    double target = 0.0;
    Vector direction;
    Vector fixed;

    void operator()(double, double x, Vector& out) const {
        out = (target - x) * direction;
        if (fixed.size()) out += fixed;
    }
};

inline Rule as_rule(const FeedbackStrategy& s) {
    return LinearFeedback{s.target_wealth(), s.allocation_direction, Vector()};
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(seed ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline int worker_count(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("ROBUSTMV_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

/// Calls fn(c) for c in [0, n); chunk c runs on worker c % workers.
template <class Fn>
void for_each_chunk(int n, int workers, Fn&& fn) {
    workers = std::max(1, std::min(workers, n));
    if (workers == 1) {
        for (int c = 0; c < n; ++c) fn(c);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (int c = w; c < n; c += workers) fn(c);
        });
    for (auto& t : pool) t.join();
}

inline constexpr int kChunkUnits = 512;

}  // namespace detail

// ---------------------------------------------------------------------------
// Accumulated statistics
// ---------------------------------------------------------------------------

/// Per-node sums over units of u = mean(x - x0) and w = mean((x - x0)^2).
struct NodeSums {
    double su = 0, sw = 0, suu = 0, sww = 0, suw = 0;
    double min = std::numeric_limits<double>::infinity();
    double max = -std::numeric_limits<double>::infinity();

    void add(double u, double w) {
        su += u;
        sw += w;
        suu += u * u;
        sww += w * w;
        suw += u * w;
    }
    void merge(const NodeSums& o) {
        su += o.su;
        sw += o.sw;
        suu += o.suu;
        sww += o.sww;
        suw += o.suw;
        min = std::min(min, o.min);
        max = std::max(max, o.max);
    }
};

/// Estimate with standard error.
struct Estimate {
    double value = 0.0;
    double se = 0.0;
};

struct PathSummary {
    std::vector<double> times;
    std::vector<NodeSums> nodes;
    std::vector<double> terminal;  ///< X_T per path, unit-contiguous
    double x0 = 0.0;
    int n_units = 0;
    int unit_size = 1;

    int n_paths() const { return n_units * unit_size; }

    /// E[X] + a Var[X] at node k, with a delta-method standard error.
    Estimate combo(std::size_t k, double a) const {
        const NodeSums& s = nodes[k];
        const double n = n_units;
        const double ub = s.su / n, wb = s.sw / n;
        const double var_u = std::max(0.0, (s.suu - n * ub * ub) / (n - 1));
        const double var_w = std::max(0.0, (s.sww - n * wb * wb) / (n - 1));
        const double cov_uw = (s.suw - n * ub * wb) / (n - 1);
        const double var_x = std::max(0.0, wb - ub * ub + var_u / n);
        const double c = n / (n - 1);
        const double gu = 1.0 - 2.0 * a * ub * c;
        const double gw = a * (unit_size == 1 ? c : 1.0);
        const double v = (gu * gu * var_u + 2.0 * gu * gw * cov_uw + gw * gw * var_w) / n;
        return {x0 + ub + a * var_x, std::sqrt(std::max(0.0, v))};
    }

    Estimate mean(std::size_t k) const { return combo(k, 0.0); }

    double variance(std::size_t k) const {
        const NodeSums& s = nodes[k];
        const double n = n_units;
        const double ub = s.su / n, wb = s.sw / n;
        const double var_u = std::max(0.0, (s.suu - n * ub * ub) / (n - 1));
        return std::max(0.0, wb - ub * ub + var_u / n);
    }
};

struct ObjectiveEstimate {
    double mean_XT = 0.0;
    double var_XT = 0.0;
    double J = 0.0;
    double std_error_J = 0.0;
    double std_error_mean = 0.0;
    int n_paths = 0;
};

/// Two-pass estimate of E[X_T] - lambda Var[X_T]. Values are grouped into
/// consecutive units of `unit_size` paths that are treated as one sample.
inline ObjectiveEstimate estimate_objective(const std::vector<double>& terminal, double lambda,
                                            int unit_size = 1) {
    if (unit_size < 1 || terminal.size() % static_cast<std::size_t>(unit_size) != 0)
        throw InputError("terminal values do not split into units");
    const std::size_t units = terminal.size() / static_cast<std::size_t>(unit_size);
    if (terminal.size() < 2 || units < 2) throw InputError("need at least 2 paths");
    const double shift = terminal.front();
    std::vector<double> u(units), w(units);
    double ub = 0, wb = 0;
    for (std::size_t i = 0; i < units; ++i) {
        double a = 0, b = 0;
        for (int j = 0; j < unit_size; ++j) {
            const double y = terminal[i * unit_size + j] - shift;
            a += y;
            b += y * y;
        }
        u[i] = a / unit_size;
        w[i] = b / unit_size;
        ub += u[i];
        wb += w[i];
    }
    const double n = static_cast<double>(units);
    ub /= n;
    wb /= n;
    double suu = 0, sww = 0, suw = 0;
    for (std::size_t i = 0; i < units; ++i) {
        suu += (u[i] - ub) * (u[i] - ub);
        sww += (w[i] - wb) * (w[i] - wb);
        suw += (u[i] - ub) * (w[i] - wb);
    }
    const double var_u = suu / (n - 1), var_w = sww / (n - 1), cov = suw / (n - 1);
    ObjectiveEstimate e;
    e.n_paths = static_cast<int>(terminal.size());
    e.mean_XT = shift + ub;
    e.var_XT = std::max(0.0, wb - ub * ub + var_u / n);
    e.J = e.mean_XT - lambda * e.var_XT;
    const double c = n / (n - 1);
    const double gu = 1.0 + 2.0 * lambda * ub * c;
    const double gw = -lambda * (unit_size == 1 ? c : 1.0);
    e.std_error_J =
        std::sqrt(std::max(0.0, (gu * gu * var_u + 2 * gu * gw * cov + gw * gw * var_w) / n));
    e.std_error_mean = std::sqrt(var_u / n);
    return e;
}

inline ObjectiveEstimate estimate_objective(const PathSummary& paths, double lambda) {
    return estimate_objective(paths.terminal, lambda, paths.unit_size);
}

// ---------------------------------------------------------------------------
// Engines
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> time_grid(double horizon, int n_steps) {
    std::vector<double> t(static_cast<std::size_t>(n_steps) + 1);
    for (int k = 0; k <= n_steps; ++k) t[k] = horizon * k / n_steps;
    return t;
}

/// Drives `unit_fn(unit_index, rng, out_values)` over all units and gathers
/// node statistics. unit_fn fills out_values[(node) * unit_size + j].
template <class UnitFn>
PathSummary run_units(const SimConfig& cfg, double horizon, double x0, UnitFn&& unit_fn) {
    cfg.validate();
    const int n_units = cfg.n_units();
    const int m = cfg.unit_size();
    const int n_nodes = cfg.n_steps + 1;
    const int n_chunks = (n_units + kChunkUnits - 1) / kChunkUnits;

    PathSummary out;
    out.times = time_grid(horizon, cfg.n_steps);
    out.x0 = x0;
    out.n_units = n_units;
    out.unit_size = m;
    out.terminal.resize(static_cast<std::size_t>(n_units) * m);

    std::vector<std::vector<NodeSums>> partial(static_cast<std::size_t>(n_chunks));
    for_each_chunk(n_chunks, worker_count(cfg.threads), [&](int c) {
        std::vector<NodeSums> sums(static_cast<std::size_t>(n_nodes));
        std::vector<double> values(static_cast<std::size_t>(n_nodes) * m);
        const int begin = c * kChunkUnits;
        const int end = std::min(n_units, begin + kChunkUnits);
        for (int unit = begin; unit < end; ++unit) {
            std::mt19937_64 rng(stream_seed(cfg.seed, static_cast<std::uint64_t>(unit)));
            unit_fn(unit, rng, values);
            for (int k = 0; k < n_nodes; ++k) {
                double a = 0, b = 0;
                NodeSums& s = sums[k];
                for (int j = 0; j < m; ++j) {
                    const double x = values[k * m + j];
                    const double y = x - x0;
                    a += y;
                    b += y * y;
                    s.min = std::min(s.min, x);
                    s.max = std::max(s.max, x);
                }
                s.add(a / m, b / m);
            }
            for (int j = 0; j < m; ++j)
                out.terminal[static_cast<std::size_t>(unit) * m + j] = values[cfg.n_steps * m + j];
        }
        partial[c] = std::move(sums);
    });

    out.nodes.assign(static_cast<std::size_t>(n_nodes), NodeSums{});
    for (const auto& chunk : partial)
        for (int k = 0; k < n_nodes; ++k) out.nodes[k].merge(chunk[k]);
    return out;
}

struct Piece {
    Vector b;
    Matrix lower;
};

inline std::vector<Piece> prepare_pieces(const ThetaProcessSchedule& schedule,
                                         const MarketParams& params) {
    std::vector<Piece> pieces;
    for (const ThetaPoint& v : schedule.values)
        pieces.push_back({v.b, covariance_from(v.rho, params).lower()});
    return pieces;
}

inline void check_schedule_shape(const ThetaProcessSchedule& schedule, const MarketParams& params) {
    if (schedule.breakpoints.empty() || schedule.breakpoints.size() != schedule.values.size())
        throw InputError("schedule: need one value per breakpoint");
    for (const ThetaPoint& v : schedule.values) check_theta_dim(v, params);
}

}  // namespace detail

/// Euler-Maruyama for dX = alpha^T (b dt + L dW) under a piecewise-constant scenario.
inline PathSummary simulate_wealth(const Rule& rule, const ThetaProcessSchedule& schedule,
                                   const MarketParams& params, const SimConfig& cfg) {
    detail::check_schedule_shape(schedule, params);
    const int d = params.dim();
    const auto pieces = detail::prepare_pieces(schedule, params);
    const double dt = params.horizon / cfg.n_steps;
    const double sqdt = std::sqrt(dt);
    std::vector<std::size_t> piece_of(static_cast<std::size_t>(cfg.n_steps));
    for (int k = 0; k < cfg.n_steps; ++k) piece_of[k] = schedule.piece_at(params.horizon * k / cfg.n_steps);
    const int m = cfg.unit_size();

    return detail::run_units(cfg, params.horizon, params.x0,
                             [&](int, std::mt19937_64& rng, std::vector<double>& values) {
        std::normal_distribution<double> normal;
        Vector alpha(d), z(d), noise(d);
        double x[2] = {params.x0, params.x0};
        for (int j = 0; j < m; ++j) values[j] = params.x0;
        for (int k = 0; k < cfg.n_steps; ++k) {
            const double t = params.horizon * k / cfg.n_steps;
            const detail::Piece& p = pieces[piece_of[k]];
            for (int i = 0; i < d; ++i) z[i] = normal(rng);
            noise.noalias() = p.lower * z;
            for (int j = 0; j < m; ++j) {
                rule(t, x[j], alpha);
                const double sign = j == 0 ? 1.0 : -1.0;
                x[j] += alpha.dot(p.b) * dt + sign * alpha.dot(noise) * sqdt;
                values[(k + 1) * m + j] = x[j];
            }
        }
    });
}

inline PathSummary simulate_wealth(const FeedbackStrategy& strategy,
                                   const ThetaProcessSchedule& schedule,
                                   const MarketParams& params, const SimConfig& cfg) {
    return simulate_wealth(as_rule(strategy), schedule, params, cfg);
}

struct ExactSimulation {
    PathSummary paths;
    /// Largest |mean - 1| / SE over steps of the one-step ratios M_{k+1}/M_k.
    double martingale_max_z = 0.0;
};

/// Exact simulation of X* = x0 + e^{r T}/(2 lambda) (1 - N*) through log N*.
inline ExactSimulation simulate_optimal_exact(const WorstCaseSolution& solution,
                                              const ThetaProcessSchedule& schedule,
                                              const MarketParams& params, const SimConfig& cfg) {
    detail::check_schedule_shape(schedule, params);
    const ThetaPoint& star = solution.theta_star;
    const Vector kappa = variance_risk_ratio(star, params);
    struct Coef {
        double drift;  // per unit time, of log N
        double h;      // H(b*, rho_s)
    };
    std::vector<Coef> coefs;
    for (const ThetaPoint& v : schedule.values) {
        const CovMatrix cov = covariance_from(v.rho, params);
        const double h = kappa.dot(cov.matrix() * kappa);
        coefs.push_back({-(v.b.dot(kappa) + 0.5 * h), h});
    }
    const double scale = std::exp(solution.r_star * params.horizon) / (2.0 * params.lambda);
    const int m = cfg.unit_size();
    const int n = cfg.n_steps;

    // Integrated drift and variance of log N over each step, splitting at breakpoints.
    std::vector<double> step_drift(static_cast<std::size_t>(n)), step_var(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const double a = params.horizon * k / n, b = params.horizon * (k + 1) / n;
        double drift = 0, var = 0;
        for (std::size_t p = 0; p < schedule.breakpoints.size(); ++p) {
            const double lo = std::max(a, schedule.breakpoints[p]);
            const double hi = std::min(b, p + 1 < schedule.breakpoints.size()
                                              ? schedule.breakpoints[p + 1]
                                              : params.horizon);
            if (hi > lo) {
                drift += coefs[p].drift * (hi - lo);
                var += coefs[p].h * (hi - lo);
            }
        }
        step_drift[k] = drift;
        step_var[k] = var;
    }

    // Martingale ratios exp(-2 v - 2 sqrt(v) z) share the normals of log N.
    const int n_units = cfg.n_units();
    std::vector<double> ratio_sum(static_cast<std::size_t>(n), 0.0), ratio_sq(static_cast<std::size_t>(n), 0.0);
    std::vector<std::vector<double>> chunk_ratio;
    const int n_chunks = (n_units + detail::kChunkUnits - 1) / detail::kChunkUnits;
    chunk_ratio.assign(static_cast<std::size_t>(n_chunks), std::vector<double>(2 * static_cast<std::size_t>(n), 0.0));

    ExactSimulation out;
    out.paths = detail::run_units(cfg, params.horizon, params.x0,
                                  [&](int unit, std::mt19937_64& rng, std::vector<double>& values) {
        std::normal_distribution<double> normal;
        std::vector<double>& acc = chunk_ratio[unit / detail::kChunkUnits];
        double logn[2] = {0.0, 0.0};
        for (int j = 0; j < m; ++j) values[j] = params.x0;
        for (int k = 0; k < n; ++k) {
            const double z = normal(rng);
            const double sd = std::sqrt(step_var[k]);
            for (int j = 0; j < m; ++j) {
                const double zz = j == 0 ? z : -z;
                logn[j] += step_drift[k] - sd * zz;
                values[(k + 1) * m + j] = params.x0 + scale * (1.0 - std::exp(logn[j]));
                const double ratio = std::exp(-2.0 * step_var[k] - 2.0 * sd * zz);
                acc[2 * k] += ratio;
                acc[2 * k + 1] += ratio * ratio;
            }
        }
    });
    for (const auto& acc : chunk_ratio)
        for (int k = 0; k < n; ++k) {
            ratio_sum[k] += acc[2 * k];
            ratio_sq[k] += acc[2 * k + 1];
        }
    const double count = static_cast<double>(n_units) * m;
    for (int k = 0; k < n; ++k) {
        const double mean = ratio_sum[k] / count;
        const double var = std::max(0.0, ratio_sq[k] / count - mean * mean);
        const double se = std::sqrt(var / count);
        if (se > 0.0) out.martingale_max_z = std::max(out.martingale_max_z, std::abs(mean - 1.0) / se);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Weak optimality principle
// ---------------------------------------------------------------------------

struct ProbeStrategy {
    std::string name;
    Rule rule;
};

struct ProbeSchedule {
    std::string name;
    ThetaProcessSchedule schedule;
};

struct StrategyProbeResult {
    std::string name;
    double max_increase = 0.0;  ///< largest E[V_t] - E[V_s] - 3 SE over s < t
    double J = 0.0;
    double se_J = 0.0;
    bool monotone = true;
    bool below_value = true;  ///< J <= V0 + 3 SE
};

struct ScheduleProbeResult {
    std::string name;
    double gap = 0.0;  ///< E[V_T] - V0
    double se = 0.0;
    bool ok = true;
};

struct WeakPrincipleReport {
    double v0 = 0.0;
    std::vector<StrategyProbeResult> strategies;
    std::vector<ScheduleProbeResult> schedules;
    double martingale_max_z = 0.0;

    bool condition_ii() const {
        for (const auto& s : strategies)
            if (!s.monotone) return false;
        return true;
    }
    bool strategies_below_value() const {
        for (const auto& s : strategies)
            if (!s.below_value) return false;
        return true;
    }
    bool condition_iii() const {
        for (const auto& s : schedules)
            if (!s.ok) return false;
        return true;
    }
    bool passed() const { return condition_ii() && strategies_below_value() && condition_iii(); }
};

class PrincipleViolated : public Error {
public:
    explicit PrincipleViolated(WeakPrincipleReport report)
        : Error(ErrorKind::PrincipleViolated, describe(report)), report_(std::move(report)) {}
    const WeakPrincipleReport& report() const noexcept { return report_; }

private:
    static std::string describe(const WeakPrincipleReport& r) {
        for (const auto& s : r.strategies)
            if (!s.monotone || !s.below_value)
                return "weak optimality principle violated by strategy probe '" + s.name + "'";
        for (const auto& s : r.schedules)
            if (!s.ok)
                return "weak optimality principle violated by scenario probe '" + s.name + "'";
        return "weak optimality principle violated";
    }
    WeakPrincipleReport report_;
};

/// E[V_t] on every node of an Euler run.
inline std::vector<Estimate> expected_value_path(const PathSummary& paths, double r_star,
                                                 const MarketParams& params) {
    const ValueCoefficients vc = value_coefficients(r_star, params);
    std::vector<Estimate> out;
    out.reserve(paths.times.size());
    for (std::size_t k = 0; k < paths.times.size(); ++k) {
        const double t = paths.times[k];
        Estimate e = paths.combo(k, vc.K(t));
        e.value += vc.chi(t);
        out.push_back(e);
    }
    return out;
}

/// Eight perturbations of the optimal feedback rule.
inline std::vector<ProbeStrategy> default_probe_strategies(const WorstCaseSolution& solution,
                                                           const MarketParams& params) {
    const FeedbackStrategy opt = robust_strategy(solution, params);
    const int d = params.dim();
    Vector dir = opt.allocation_direction;
    if ((dir.array() == 0.0).all()) {
        dir = Vector::Zero(d);
        dir[0] = 1.0 / (params.sigmas[0] * params.sigmas[0]);
    }
    const double target = opt.target_wealth();
    auto linear = [&](Vector direction, double tgt) {
        return Rule(LinearFeedback{tgt, std::move(direction), Vector()});
    };
    auto rotate = [&](double degrees) {
        if (d < 2) return Vector(dir * (degrees > 0 ? 0.8 : 1.2));
        const double a = degrees * 3.14159265358979323846 / 180.0;
        Vector r = dir;
        r[0] = std::cos(a) * dir[0] - std::sin(a) * dir[1];
        r[1] = std::sin(a) * dir[0] + std::cos(a) * dir[1];
        return r;
    };
    std::vector<ProbeStrategy> probes;
    probes.push_back({"zero", [d](double, double, Vector& out) { out = Vector::Zero(d); }});
    probes.push_back({"half", linear(0.5 * dir, target)});
    probes.push_back({"one_and_half", linear(1.5 * dir, target)});
    probes.push_back({"double", linear(2.0 * dir, target)});
    probes.push_back({"rotate_plus_30", linear(rotate(30.0), target)});
    probes.push_back({"rotate_minus_30", linear(rotate(-30.0), target)});
    const Vector fixed = (target - params.x0) * dir;
    probes.push_back({"open_loop", Rule(LinearFeedback{0.0, Vector::Zero(d), fixed})});
    probes.push_back({"shifted_target", linear(dir, target + 0.25 / params.lambda)});
    return probes;
}

namespace detail {

/// Feasible point on the boundary of the set at correlation `rho`. Even
/// `corner` values push the drift toward the origin, odd ones away from it;
/// `axis` >= 0 instead moves along +/- the axis-th whitened direction.
inline ThetaPoint extreme_point(const AmbiguitySpec& spec, const RhoVector& rho, int corner,
                                const MarketParams& params, int axis = -1) {
    const int d = params.dim();
    if (spec.is_product()) {
        const auto& p = spec.product();
        Vector b(d);
        for (int i = 0; i < d; ++i) b[i] = ((corner >> i) & 1) ? p.upper[i] : p.lower[i];
        return {b, rho};
    }
    const auto& e = spec.ellipsoid();
    const CovMatrix cov = covariance_from(rho, params);
    const double sign = (corner & 1) ? 1.0 : -1.0;
    const double reach = e.delta * (1.0 - 1e-12);
    if (axis >= 0) {
        const Vector unit = Vector::Unit(d, axis % d);
        return {Vector(e.b_hat + sign * reach * (cov.lower() * unit)), rho};
    }
    const double n = cov.mahalanobis_norm(e.b_hat);
    Vector b = e.b_hat;
    if (n > 0.0) b = e.b_hat + sign * reach * e.b_hat / n;
    return {b, rho};
}

}  // namespace detail

/// theta*, the set's center, up to five extreme points and one switching scenario.
inline std::vector<ProbeSchedule> default_probe_schedules(const WorstCaseSolution& solution,
                                                          const AmbiguitySpec& spec,
                                                          const MarketParams& params) {
    const int d = params.dim();
    const int n_rho = RhoVector::pair_count(d);
    std::vector<ProbeSchedule> probes;
    probes.push_back({"theta_star", ThetaProcessSchedule::constant(solution.theta_star)});

    const RhoVector mid = project_rho(spec, spec.gamma.midpoint());
    const Vector center_b = spec.is_product()
                                ? Vector(0.5 * (spec.product().lower + spec.product().upper))
                                : spec.ellipsoid().b_hat;
    probes.push_back({"center", ThetaProcessSchedule::constant({center_b, mid})});

    std::vector<ThetaPoint> extremes;
    const long corners = n_rho <= 16 ? (1L << n_rho) : 1L;
    for (long c = 0; c < corners && extremes.size() < 5; ++c) {
        RhoVector rho = RhoVector::zeros(d);
        for (int k = 0; k < n_rho; ++k) rho[k] = ((c >> k) & 1) ? spec.gamma.hi(k) : spec.gamma.lo(k);
        if (spec.gamma.full_ambiguity || !is_positive_definite(rho, d)) rho = project_rho(spec, rho);
        for (int flip = 0; flip < 2 && extremes.size() < 5; ++flip) {
            ThetaPoint theta = detail::extreme_point(spec, rho, static_cast<int>(c * 2 + flip), params);
            if (contains(spec, theta, params)) extremes.push_back(theta);
        }
    }
    // Small boxes have few corners; fill up with whitened-axis extremes at rho*.
    const int axes = spec.is_product() ? 0 : 2 * d;
    for (int a = 0; a < axes && extremes.size() < 5; ++a) {
        ThetaPoint theta = detail::extreme_point(spec, solution.theta_star.rho, a, params, a / 2);
        if (contains(spec, theta, params)) extremes.push_back(theta);
    }
    for (std::size_t i = 0; i < extremes.size(); ++i)
        probes.push_back({"extreme_" + std::to_string(i + 1), ThetaProcessSchedule::constant(extremes[i])});

    const ThetaPoint& other = extremes.empty() ? solution.theta_star : extremes.back();
    probes.push_back({"switching", ThetaProcessSchedule{{0.0, 0.5 * params.horizon},
                                                        {solution.theta_star, other}}});
    return probes;
}

/// Checks (ii) with Euler runs of the probe strategies under theta*, and
/// (iii) with exact runs of the optimal strategy under the probe scenarios.
inline WeakPrincipleReport verify_weak_principle(const WorstCaseSolution& solution,
                                                 const AmbiguitySpec& spec,
                                                 const MarketParams& params, const SimConfig& cfg,
                                                 const std::vector<ProbeStrategy>& probe_strategies,
                                                 const std::vector<ProbeSchedule>& probe_schedules,
                                                 bool throw_on_failure = true) {
    WeakPrincipleReport report;
    report.v0 = value_v0(solution, params);
    const ThetaProcessSchedule star = ThetaProcessSchedule::constant(solution.theta_star);

    for (std::size_t p = 0; p < probe_strategies.size(); ++p) {
        SimConfig c = cfg;
        c.seed = detail::stream_seed(cfg.seed, 1000 + p);
        const PathSummary paths = simulate_wealth(probe_strategies[p].rule, star, params, c);
        const std::vector<Estimate> ev = expected_value_path(paths, solution.r_star, params);
        StrategyProbeResult r;
        r.name = probe_strategies[p].name;
        r.max_increase = -std::numeric_limits<double>::infinity();
        for (std::size_t t = 1; t < ev.size(); ++t)
            for (std::size_t u = 0; u < t; ++u) {
                const double slack = 3.0 * std::sqrt(ev[u].se * ev[u].se + ev[t].se * ev[t].se);
                r.max_increase = std::max(r.max_increase, ev[t].value - ev[u].value - slack);
            }
        r.monotone = r.max_increase <= 0.0;
        const ObjectiveEstimate j = estimate_objective(paths, params.lambda);
        r.J = j.J;
        r.se_J = j.std_error_J;
        r.below_value = j.J <= report.v0 + 3.0 * j.std_error_J;
        report.strategies.push_back(r);
    }

    for (std::size_t p = 0; p < probe_schedules.size(); ++p) {
        probe_schedules[p].schedule.validate(spec, params);
        SimConfig c = cfg;
        c.seed = detail::stream_seed(cfg.seed, 2000 + p);
        const ExactSimulation sim = simulate_optimal_exact(solution, probe_schedules[p].schedule, params, c);
        const ObjectiveEstimate j = estimate_objective(sim.paths, params.lambda);
        ScheduleProbeResult r;
        r.name = probe_schedules[p].name;
        r.gap = j.J - report.v0;
        r.se = j.std_error_J;
        r.ok = r.gap >= -3.0 * r.se;
        report.schedules.push_back(r);
        report.martingale_max_z = std::max(report.martingale_max_z, sim.martingale_max_z);
    }

    if (throw_on_failure && !report.passed()) throw PrincipleViolated(report);
    return report;
}

// ---------------------------------------------------------------------------
// Single-asset counterexample to monotonicity
// ---------------------------------------------------------------------------

/// d/dt of E_theta[V_t] for the optimal strategy when the true drift theta
/// exceeds the worst case b_lo in a one-asset market with unit volatility.
inline double remark_f(double t, double c, double r_star, double lambda, double horizon) {
    const double e_ct = std::exp(-c * t);
    return std::exp(r_star * horizon) / (2.0 * lambda) *
           (c * std::exp(-2.0 * c * t) -
            std::exp(-r_star * t) * (1.0 - e_ct) * (0.5 * r_star - (0.5 * r_star + c) * e_ct));
}

inline double remark_f_limit(double t, double r_star, double lambda, double horizon) {
    return -(r_star / (4.0 * lambda)) * std::exp(r_star * (horizon - t));
}

struct CounterexampleTable {
    double c = 0.0;
    double r_star = 0.0;
    std::vector<double> t;
    std::vector<double> f;
    std::string signs;  ///< '+', '-' or '0' per grid point

    bool any_negative() const {
        for (double v : f)
            if (v < 0.0) return true;
        return false;
    }
    double min_value() const { return *std::min_element(f.begin(), f.end()); }
};

inline CounterexampleTable remark_counterexample(double b_lo, double theta,
                                                 const MarketParams& params, int n_grid = 201) {
    if (params.dim() != 1) throw InputError("the counterexample is a one-asset market");
    if (params.sigmas[0] != 1.0) throw InputError("the counterexample needs sigma = 1");
    if (!(b_lo >= 0.0) || !(theta > b_lo)) throw InputError("need 0 <= b_lo < theta");
    if (n_grid < 2) throw InputError("need at least two grid points");
    CounterexampleTable table;
    table.r_star = b_lo * b_lo;
    table.c = (theta - b_lo) * b_lo;
    for (int k = 0; k < n_grid; ++k) {
        const double t = params.horizon * k / (n_grid - 1);
        const double f = remark_f(t, table.c, table.r_star, params.lambda, params.horizon);
        table.t.push_back(t);
        table.f.push_back(f);
        table.signs += f > 0.0 ? '+' : (f < 0.0 ? '-' : '0');
    }
    return table;
}

}  // namespace robustmv
