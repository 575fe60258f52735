#include <gtest/gtest.h>

#include <cstdlib>

#include "support.hpp"

using namespace robustmv;
using namespace testing_support;

namespace {

const MarketParams& reference_params() {
    static const MarketParams p = unit_market(2);
    return p;
}

const AmbiguitySpec& reference_spec() {
    static const AmbiguitySpec s = make_ellipsoidal(make_vector({0.4, 0.2}), 0.1,
                                                    GammaBox::box(RhoVector{-0.5}, RhoVector{0.8}));
    return s;
}

SimConfig config(int paths, int steps, std::uint64_t seed = 42) {
    SimConfig c;
    c.n_paths = paths;
    c.n_steps = steps;
    c.seed = seed;
    return c;
}

/// E_theta[V_t] for the optimal rule in a one-asset unit-volatility market
/// whose drift is theta while the worst case is b_lo. Lambda_t = m - X_t is a
/// geometric Brownian motion, so its first two moments are explicit.
double expected_value_one_asset(double t, double b_lo, double theta, double lambda, double horizon) {
    const double r = b_lo * b_lo;
    const double l0 = std::exp(r * horizon) / (2 * lambda);
    const double m1 = l0 * std::exp(-b_lo * theta * t);
    const double m2 = l0 * l0 * std::exp((r - 2 * b_lo * theta) * t);
    const double K = -lambda * std::exp(r * (t - horizon));
    const double chi = (std::exp(r * (horizon - t)) - 1) / (4 * lambda);
    return K * (m2 - m1 * m1) + (1.0 + l0) - m1 + chi;
}

}  // namespace

TEST(SimulateWealth, ZeroStrategyKeepsWealth) {
    const auto& p = reference_params();
    const Rule zero = [](double, double, Vector& out) { out.setZero(); };
    const auto paths = simulate_wealth(zero, ThetaProcessSchedule::constant({make_vector({0.4, 0.2}), RhoVector{0.5}}),
                                       p, config(500, 16));
    for (const NodeSums& s : paths.nodes) {
        EXPECT_EQ(s.min, p.x0);
        EXPECT_EQ(s.max, p.x0);
    }
    const auto e = estimate_objective(paths, p.lambda);
    EXPECT_EQ(e.J, p.x0);
    EXPECT_EQ(e.var_XT, 0.0);
    EXPECT_EQ(e.mean_XT, p.x0);
}

TEST(SimulateWealth, PureMartingale) {
    const auto p = MarketParams::make(make_vector({0.3}), 2.0, 1.0, 1.0);
    const Rule one = [](double, double, Vector& out) { out[0] = 1.0; };
    const auto paths = simulate_wealth(one, ThetaProcessSchedule::constant({make_vector({0.0}), RhoVector::zeros(1)}),
                                       p, config(40000, 8));
    const auto e = estimate_objective(paths, p.lambda);
    EXPECT_LT(std::abs(e.mean_XT - 1.0), 3 * e.std_error_mean);
    // Variance 0.09 * 2 with relative standard error sqrt(2 / n).
    EXPECT_NEAR(e.var_XT, 0.18, 3 * 0.18 * std::sqrt(2.0 / 40000));
}

TEST(SimulateWealth, MeanPathMatchesClosedForm) {
    const auto& p = reference_params();
    const auto sol = solve(reference_spec(), p);
    const auto strategy = robust_strategy(sol, p);
    const auto paths = simulate_wealth(strategy, ThetaProcessSchedule::constant(sol.theta_star), p, config(20000, 64));
    const auto closed = mean_wealth_path(strategy, paths.times);
    for (std::size_t k = 0; k < paths.times.size(); ++k) {
        const Estimate m = paths.mean(k);
        EXPECT_LE(std::abs(m.value - closed[k]), 3 * m.se + 1e-15) << "t = " << paths.times[k];
    }
}

TEST(SimulateWealth, DeterministicAcrossWorkerCounts) {
    const auto& p = reference_params();
    const auto sol = solve(reference_spec(), p);
    SimConfig a = config(3000, 32, 9), b = a;
    a.threads = 1;
    b.threads = 3;
    const auto sched = ThetaProcessSchedule::constant(sol.theta_star);
    const auto pa = simulate_wealth(robust_strategy(sol, p), sched, p, a);
    const auto pb = simulate_wealth(robust_strategy(sol, p), sched, p, b);
    EXPECT_EQ(pa.terminal, pb.terminal);
    EXPECT_EQ(estimate_objective(pa, p.lambda).J, estimate_objective(pb, p.lambda).J);
    EXPECT_EQ(pa.nodes[10].su, pb.nodes[10].su);

    const auto ea = simulate_optimal_exact(sol, sched, p, a);
    const auto eb = simulate_optimal_exact(sol, sched, p, b);
    EXPECT_EQ(ea.paths.terminal, eb.paths.terminal);
    EXPECT_EQ(ea.martingale_max_z, eb.martingale_max_z);

    // The environment variable is the fallback when the config leaves threads at 0.
    ::setenv("ROBUSTMV_THREADS", "2", 1);
    SimConfig c = config(3000, 32, 9);
    const auto pc = simulate_wealth(robust_strategy(sol, p), sched, p, c);
    ::unsetenv("ROBUSTMV_THREADS");
    EXPECT_EQ(pa.terminal, pc.terminal);

    SimConfig other = config(3000, 32, 10);
    EXPECT_NE(simulate_wealth(robust_strategy(sol, p), sched, p, other).terminal, pa.terminal);
}

TEST(SimulateWealth, AntitheticKeepsTheExpectation) {
    const auto& p = reference_params();
    const auto sol = solve(reference_spec(), p);
    const auto sched = ThetaProcessSchedule::constant(sol.theta_star);
    SimConfig plain = config(20000, 32, 3), anti = plain;
    anti.antithetic = true;
    const auto a = estimate_objective(simulate_wealth(robust_strategy(sol, p), sched, p, plain), p.lambda);
    const auto b = estimate_objective(simulate_wealth(robust_strategy(sol, p), sched, p, anti), p.lambda);
    const double se = std::hypot(a.std_error_mean, b.std_error_mean);
    EXPECT_LE(std::abs(a.mean_XT - b.mean_XT), 3 * se);
    EXPECT_LE(std::abs(a.J - b.J), 3 * std::hypot(a.std_error_J, b.std_error_J));
    EXPECT_GT(b.std_error_J, 0.0);
    SimConfig odd = anti;
    odd.n_paths = 20001;
    EXPECT_THROW(odd.validate(), InputError);
}

TEST(SimulateOptimalExact, TerminalMeanIsExact) {
    const auto& p = reference_params();
    const auto sol = solve(reference_spec(), p);
    const auto sim = simulate_optimal_exact(sol, ThetaProcessSchedule::constant(sol.theta_star), p, config(40000, 16));
    const auto e = estimate_objective(sim.paths, p.lambda);
    const double expected = 1.0 + std::exp(0.09) * (1 - std::exp(-0.09));
    EXPECT_LE(std::abs(e.mean_XT - expected), 3 * e.std_error_mean);
    EXPECT_LE(std::abs(e.J - value_v0(sol, p)), 3 * e.std_error_J);
    // One-step ratios of the exponential martingale: a Bonferroni bound over 16 steps.
    EXPECT_LT(sim.martingale_max_z, 3.5);
}

TEST(SimulateOptimalExact, NoPremiumMeansNoMovement) {
    const auto& p = reference_params();
    const auto sol = solve(make_ellipsoidal(make_vector({0.4, 0.2}), 0.5, reference_spec().gamma), p);
    ASSERT_EQ(sol.r_star, 0.0);
    const auto sim = simulate_optimal_exact(sol, ThetaProcessSchedule::constant({make_vector({0.3, 0.1}), RhoVector{0.2}}),
                                            p, config(200, 8));
    for (const NodeSums& s : sim.paths.nodes) {
        EXPECT_EQ(s.min, p.x0);
        EXPECT_EQ(s.max, p.x0);
    }
}

TEST(SimulateOptimalExact, AgreesWithEuler) {
    const auto& p = reference_params();
    const auto sol = solve(reference_spec(), p);
    const ThetaProcessSchedule sched{{0.0, 0.4}, {sol.theta_star, {make_vector({0.45, 0.25}), RhoVector{-0.3}}}};
    const auto exact = estimate_objective(simulate_optimal_exact(sol, sched, p, config(20000, 512, 5)).paths, p.lambda);
    const auto euler = estimate_objective(simulate_wealth(robust_strategy(sol, p), sched, p, config(20000, 512, 6)),
                                          p.lambda);
    EXPECT_LE(std::abs(exact.mean_XT - euler.mean_XT), 3 * std::hypot(exact.std_error_mean, euler.std_error_mean));
    EXPECT_LE(std::abs(exact.J - euler.J), 3 * std::hypot(exact.std_error_J, euler.std_error_J));
}

TEST(EstimateObjective, Examples) {
    const auto e = estimate_objective(std::vector<double>(100, 2.5), 3.0);
    EXPECT_EQ(e.J, 2.5);
    EXPECT_EQ(e.var_XT, 0.0);
    EXPECT_EQ(e.n_paths, 100);
    EXPECT_THROW(estimate_objective(std::vector<double>{1.0}, 1.0), InputError);

    // Unbiased sample variance of {0, 1, 2, 3} is 5/3.
    const auto f = estimate_objective(std::vector<double>{0, 1, 2, 3}, 0.5);
    EXPECT_DOUBLE_EQ(f.mean_XT, 1.5);
    EXPECT_DOUBLE_EQ(f.var_XT, 5.0 / 3.0);
    EXPECT_DOUBLE_EQ(f.J, 1.5 - 0.5 * 5.0 / 3.0);
    EXPECT_GT(f.std_error_J, 0.0);
}

TEST(EstimateObjective, StandardErrorIsCalibrated) {
    // Spread of J over independent seeds against the reported standard error.
    const auto& p = reference_params();
    const auto sol = solve(reference_spec(), p);
    const auto sched = ThetaProcessSchedule::constant(sol.theta_star);
    std::vector<double> js;
    double se = 0;
    for (std::uint64_t s = 0; s < 40; ++s) {
        const auto e = estimate_objective(simulate_optimal_exact(sol, sched, p, config(2000, 4, 100 + s)).paths,
                                          p.lambda);
        js.push_back(e.J);
        se += e.std_error_J / 40;
    }
    double mean = 0, var = 0;
    for (double j : js) mean += j / js.size();
    for (double j : js) var += (j - mean) * (j - mean) / (js.size() - 1);
    EXPECT_GT(std::sqrt(var) / se, 0.6);
    EXPECT_LT(std::sqrt(var) / se, 1.5);
}

TEST(WeakPrinciple, HoldsOnReferenceInstance) {
    const auto& p = reference_params();
    const auto sol = solve(reference_spec(), p);
    const auto strategies = default_probe_strategies(sol, p);
    const auto schedules = default_probe_schedules(sol, reference_spec(), p);
    EXPECT_EQ(strategies.size(), 8u);
    EXPECT_EQ(schedules.size(), 8u);
    for (const auto& s : schedules) EXPECT_NO_THROW(s.schedule.validate(reference_spec(), p)) << s.name;
    const auto report = verify_weak_principle(sol, reference_spec(), p, config(4000, 32), strategies, schedules,
                                              false);
    EXPECT_TRUE(report.condition_ii());
    EXPECT_TRUE(report.strategies_below_value());
    EXPECT_TRUE(report.condition_iii());
    EXPECT_NEAR(report.v0, 1.047087, 1e-6);
}

TEST(WeakPrinciple, ZeroProbeDecreasesStrictly) {
    const auto& p = reference_params();
    const auto sol = solve(reference_spec(), p);
    const Rule zero = [](double, double, Vector& out) { out.setZero(); };
    const auto paths = simulate_wealth(zero, ThetaProcessSchedule::constant(sol.theta_star), p, config(100, 16));
    const auto ev = expected_value_path(paths, sol.r_star, p);
    for (std::size_t k = 1; k < ev.size(); ++k) EXPECT_LT(ev[k].value, ev[k - 1].value);
    EXPECT_NEAR(ev.front().value, value_v0(sol, p), 1e-15);
}

TEST(WeakPrinciple, ViolationIsReported) {
    // Claiming a larger premium than the set allows makes the optimal rule overshoot.
    const auto& p = reference_params();
    WorstCaseSolution wrong = solve(reference_spec(), p);
    wrong.theta_star = {make_vector({0.6, 0.1}), RhoVector{0.0}};
    wrong.r_star = risk_premium(wrong.theta_star, p);
    const std::vector<ProbeSchedule> schedules{
        {"center", ThetaProcessSchedule::constant({make_vector({0.4, 0.2}), RhoVector{0.5}})}};
    try {
        verify_weak_principle(wrong, reference_spec(), p, config(4000, 16), {}, schedules);
        FAIL() << "expected PrincipleViolated";
    } catch (const PrincipleViolated& e) {
        EXPECT_FALSE(e.report().condition_iii());
        EXPECT_LT(e.report().schedules[0].gap, -3 * e.report().schedules[0].se);
    }
}

TEST(OneAssetCounterexample, NoGapMeansFlat) {
    for (double t : {0.0, 0.3, 1.0}) EXPECT_EQ(remark_f(t, 0.0, 0.04, 1.0, 1.0), 0.0);
    const auto p = MarketParams::make(make_vector({1.0}), 1.0, 1.0, 1.0);
    EXPECT_THROW(remark_counterexample(0.3, 0.2, p), InputError);
    EXPECT_THROW(remark_counterexample(0.3, 0.5, unit_market(2)), InputError);
}

TEST(OneAssetCounterexample, MatchesDerivativeOfExpectedValue) {
    const double h = 1e-5;
    for (double theta : {5.0, 40.0, 200.0}) {
        const double b = 0.2, c = (theta - b) * b;
        for (double t : {0.05, 0.25, 0.5, 0.9}) {
            const double fd = (expected_value_one_asset(t + h, b, theta, 1.0, 1.0) -
                               expected_value_one_asset(t - h, b, theta, 1.0, 1.0)) / (2 * h);
            EXPECT_NEAR(remark_f(t, c, b * b, 1.0, 1.0), fd, 1e-6 * std::max(1.0, std::abs(fd)))
                << "theta " << theta << " t " << t;
        }
    }
}

TEST(OneAssetCounterexample, SignsAndLimit) {
    const auto p = MarketParams::make(make_vector({1.0}), 1.0, 1.0, 1.0);
    const auto moderate = remark_counterexample(0.2, 5.0, p);
    EXPECT_NEAR(moderate.c, 0.96, 1e-15);
    EXPECT_NEAR(moderate.r_star, 0.04, 1e-15);
    EXPECT_EQ(moderate.t.size(), 201u);
    // With c below one the early positive term dominates the whole unit horizon.
    EXPECT_FALSE(moderate.any_negative());

    const auto steep = remark_counterexample(0.2, 200.0, p);
    EXPECT_TRUE(steep.any_negative());
    EXPECT_EQ(steep.signs.front(), '+');

    const double limit = remark_f_limit(0.5, 0.04, 1.0, 1.0);
    const double e3 = std::abs(remark_f(0.5, 1e3, 0.04, 1.0, 1.0) - limit);
    const double e4 = std::abs(remark_f(0.5, 1e4, 0.04, 1.0, 1.0) - limit);
    EXPECT_LT(e4, 1e-3);
    EXPECT_LE(e4, e3);
}
