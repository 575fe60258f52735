// End-to-end acceptance run: one PASS/FAIL line per criterion.
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "support.hpp"

using namespace robustmv;
using namespace testing_support;

namespace {

struct Verdict {
    bool pass = true;
    std::ostringstream detail;
    std::string failures;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            failures += " [failed: " + what + "]";
        }
    }
};

std::string sci(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", x);
    return buf;
}

// Instances shared between criteria.
struct Shared {
    std::vector<Instance> two_asset;
    std::vector<WorstCaseSolution> two_asset_solutions;
    std::vector<Instance> three_asset;
    std::vector<WorstCaseSolution> three_asset_solutions;
    std::vector<Instance> full;
    std::vector<WorstCaseSolution> full_solutions;
};

AmbiguitySpec reference_spec() {
    return make_ellipsoidal(make_vector({0.4, 0.2}), 0.1, GammaBox::box(RhoVector{-0.5}, RhoVector{0.8}));
}

SimConfig reference_config(int paths = 100000, int steps = 256) {
    SimConfig c;
    c.n_paths = paths;
    c.n_steps = steps;
    c.seed = 42;
    return c;
}

Verdict gradient_identity() {
    Verdict v;
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> normal(0.0, 0.4);
    double worst = 0.0;
    int points = 0;
    for (int d = 2; d <= 4; ++d) {
        for (int k = 0; k < 100; ++k) {
            const MarketParams p = unit_market(d);
            Vector b(d);
            for (int i = 0; i < d; ++i) b[i] = normal(rng);
            const ThetaPoint t{b, random_pd_rho(d, rng, 0.7)};
            const Vector a = stacked_gradient(t, p);
            const Vector f = finite_difference_gradient(t, p);
            worst = std::max(worst, (a - f).norm() / std::max(a.norm(), 1e-12));
            ++points;
        }
    }
    v.require(worst < 1e-6, "relative error below 1e-6");
    v.detail << points << " points, max relative error " << sci(worst);
    return v;
}

Verdict two_asset_oracle(Shared& shared) {
    Verdict v;
    std::mt19937_64 rng(7001);
    double worst = 0.0;
    int labelled = 0, label_mismatch = 0;
    for (int k = 0; k < 200; ++k) {
        const Instance in = random_two_asset(rng);
        const auto sol = solve(in.spec, in.params);
        const auto orc = grid_oracle(in.spec, in.params, 2001);
        worst = std::max(worst, std::abs(sol.r_star - orc.r_star));
        shared.two_asset.push_back(in);
        shared.two_asset_solutions.push_back(sol);

        const double q = sharpe_profile(in.spec.ellipsoid().b_hat, in.params).proximity(0, 1);
        const double lo = in.spec.gamma.lo(0), hi = in.spec.gamma.hi(0);
        if (std::abs(q - lo) < 1e-3 || std::abs(q - hi) < 1e-3) continue;
        ++labelled;
        const double r = orc.theta_star.rho[0];
        CaseLabel where = CaseLabel::TwoAssetInterior;
        if (r == hi) where = CaseLabel::TwoAssetUpper;
        if (r == lo) where = CaseLabel::TwoAssetLower;
        if (where != sol.case_label) ++label_mismatch;
    }
    v.require(worst <= 1e-3, "r* within 1e-3 of the oracle");
    v.require(label_mismatch == 0, "case label matches oracle argmin location");
    v.detail << "200 instances, max |r* - oracle| " << sci(worst) << ", " << labelled
             << " labelled, " << label_mismatch << " label mismatches";
    return v;
}

Verdict three_asset_oracle(Shared& shared) {
    Verdict v;
    std::mt19937_64 rng(7003);
    std::map<int, int> hits;
    double worst = 0.0, worst_kappa = 0.0;
    int draws = 0;
    auto complete = [&] {
        for (int f = 1; f <= 5; ++f)
            if (hits[f] < 10) return false;
        return true;
    };
    while (!complete() && draws < 200000) {
        ++draws;
        const Instance in = random_three_asset(rng);
        const auto sol = solve(in.spec, in.params);
        const int family = three_asset_family(sol.case_label);
        if (family == 0 || sol.diagnostics.fallthrough || hits[family] >= 10) continue;
        ++hits[family];
        const auto orc = grid_oracle(in.spec, in.params, 51);
        worst = std::max(worst, std::abs(sol.r_star - orc.r_star));
        if (family >= 2 && family <= 4) {
            const Vector k = variance_risk_ratio({in.spec.ellipsoid().b_hat, sol.theta_star.rho}, in.params);
            worst_kappa = std::max(worst_kappa, std::abs(k[sol.diagnostics.zeroed_component]));
        }
        shared.three_asset.push_back(in);
        shared.three_asset_solutions.push_back(sol);
    }
    int fewest = 1 << 30;
    for (int f = 1; f <= 5; ++f) fewest = std::min(fewest, hits[f]);
    v.require(fewest >= 5, "every case family at least 5 times");
    v.require(worst <= 5e-3, "r* within 5e-3 of the oracle");
    v.require(worst_kappa < 1e-8, "zeroed component below 1e-8");
    v.detail << shared.three_asset.size() << " instances from " << draws << " draws (families";
    for (int f = 1; f <= 5; ++f) v.detail << ' ' << hits[f];
    v.detail << "), max |r* - oracle| " << sci(worst) << ", max |kappa zeroed| " << sci(worst_kappa);
    return v;
}

Verdict full_ambiguity(Shared& shared) {
    Verdict v;
    std::mt19937_64 rng(7005);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    bool all_pd = true;
    int made = 0;
    while (made < 50) {
        const int d = 2 + made % 2;
        Vector sig(d), b(d);
        for (int i = 0; i < d; ++i) sig[i] = 0.5 + u(rng);
        // Strictly ordered Sharpe ratios with proximities inside [-0.9, 0.9].
        const double beta1 = 0.2 + 0.6 * u(rng);
        b[0] = beta1 * sig[0] * (u(rng) < 0.5 ? -1 : 1);
        double cap = 0.9;
        for (int i = 1; i < d; ++i) {
            const double ratio = (0.1 + (cap - 0.15) * u(rng)) * (u(rng) < 0.5 ? -1 : 1);
            cap = std::abs(ratio);
            b[i] = ratio * beta1 * sig[i];
        }
        const MarketParams p = MarketParams::make(sig, 1.0, 0.5 + u(rng), 1.0);
        const double delta = 1.2 * beta1 * u(rng);
        const AmbiguitySpec spec = make_ellipsoidal(b, delta, GammaBox::full(d));
        const auto closed = solve(spec, p);
        const double formula = beta1 > delta ? (beta1 - delta) * (beta1 - delta) : 0.0;
        const AmbiguitySpec wide = make_ellipsoidal(
            b, delta, GammaBox::box(RhoVector::constant(d, -0.95), RhoVector::constant(d, 0.95)));
        const auto numeric = numeric_minimize(wide, p);
        worst = std::max({worst, std::abs(closed.r_star - formula), std::abs(numeric.r_star - formula)});
        all_pd = all_pd && is_positive_definite(closed.theta_star.rho, d);
        shared.full.push_back({p, spec});
        shared.full_solutions.push_back(closed);
        ++made;
    }
    v.require(worst <= 1e-4, "closed form and numeric minimum within 1e-4 of the formula");
    v.require(all_pd, "C(rho*) positive definite");
    v.detail << "50 instances (d = 2, 3), max deviation " << sci(worst)
             << (all_pd ? ", all rho* PD" : ", non-PD rho* found");
    return v;
}

Verdict saddle(const Shared& shared) {
    Verdict v;
    int instances = 0, failures = 0;
    double worst_up = -1e300, worst_down = 1e300;
    auto check = [&](const Instance& in, const WorstCaseSolution& sol, std::uint64_t seed) {
        ++instances;
        try {
            const auto r = verify_saddle(sol, in.spec, in.params, 1000, seed);
            worst_up = std::max(worst_up, r.upper_margin);
            worst_down = std::min(worst_down, r.lower_margin);
        } catch (const SaddleViolated& e) {
            ++failures;
            worst_up = std::max(worst_up, e.report().upper_margin);
            worst_down = std::min(worst_down, e.report().lower_margin);
        }
    };
    for (std::size_t k = 0; k < shared.two_asset.size(); ++k) check(shared.two_asset[k], shared.two_asset_solutions[k], k);
    for (std::size_t k = 0; k < shared.three_asset.size(); ++k)
        check(shared.three_asset[k], shared.three_asset_solutions[k], 1000 + k);
    for (std::size_t k = 0; k < shared.full.size(); ++k) check(shared.full[k], shared.full_solutions[k], 2000 + k);
    v.require(failures == 0, "no saddle violations beyond 1e-8");
    v.detail << instances << " instances x 1000 samples, " << failures << " with violations, max upper margin "
             << sci(worst_up) << ", min lower margin " << sci(worst_down);
    return v;
}

Verdict value_reproduction() {
    Verdict v;
    const MarketParams p = unit_market(2);
    const auto sol = solve(reference_spec(), p);
    const double v0 = value_v0(sol, p);
    const auto star = ThetaProcessSchedule::constant(sol.theta_star);
    const auto euler = estimate_objective(simulate_wealth(robust_strategy(sol, p), star, p, reference_config()), p.lambda);
    const auto exact = estimate_objective(simulate_optimal_exact(sol, star, p, reference_config()).paths, p.lambda);
    const double combined = std::hypot(euler.std_error_J, exact.std_error_J);
    v.require(std::abs(v0 - 1.047087) < 5e-7, "V0 = 1.047087");
    v.require(std::abs(euler.J - v0) <= 3 * euler.std_error_J, "J within 3 SE of V0");
    v.require(std::abs(euler.J - exact.J) <= 3 * combined, "Euler and exact agree");
    char buf[256];
    std::snprintf(buf, sizeof buf, "V0 %.6f, Euler J %.6f (SE %.1e), exact J %.6f (SE %.1e)", v0, euler.J,
                  euler.std_error_J, exact.J, exact.std_error_J);
    v.detail << buf;
    return v;
}

Verdict weak_principle() {
    Verdict v;
    const MarketParams p = unit_market(2);
    const auto spec = reference_spec();
    const auto sol = solve(spec, p);
    const auto strategies = default_probe_strategies(sol, p);
    const auto schedules = default_probe_schedules(sol, spec, p);
    const auto report = verify_weak_principle(sol, spec, p, reference_config(20000, 128), strategies, schedules, false);
    v.require(strategies.size() == 8 && schedules.size() == 8, "8 probe strategies and 8 probe schedules");
    v.require(report.condition_ii(), "condition (ii) monotone for every probe strategy");
    v.require(report.condition_iii(), "condition (iii) for every probe schedule");
    v.require(report.strategies_below_value(), "J(alpha, theta*) <= V0 + 3 SE");
    double min_gap = 1e300, max_incr = -1e300;
    for (const auto& s : report.schedules) min_gap = std::min(min_gap, s.gap / std::max(s.se, 1e-300));
    for (const auto& s : report.strategies) max_incr = std::max(max_incr, s.max_increase);
    v.detail << strategies.size() << " strategies, " << schedules.size()
             << " schedules, smallest schedule gap " << sci(min_gap) << " SE, largest increase beyond slack "
             << sci(max_incr);
    return v;
}

Verdict no_trade_threshold() {
    Verdict v;
    std::vector<Instance> cases{{unit_market(2), reference_spec()}};
    std::mt19937_64 rng(7007);
    for (int k = 0; k < 10; ++k) cases.push_back(k % 2 ? random_two_asset(rng) : random_three_asset(rng));
    double worst = 0.0;
    bool zero_alpha = true, monotone = true;
    for (const Instance& in : cases) {
        const auto& e = in.spec.ellipsoid();
        auto with = [&](double delta) { return solve(make_ellipsoidal(e.b_hat, delta, in.spec.gamma), in.params); };
        const auto base = with(0.0);
        const double threshold = std::sqrt(risk_premium({e.b_hat, base.theta_star.rho}, in.params));
        double lo = 0.0, hi = 2.0 * threshold;
        for (int it = 0; it < 200 && hi - lo > 0; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid == lo || mid == hi) break;
            (with(mid).no_trade ? hi : lo) = mid;
        }
        worst = std::max(worst, std::abs(hi - threshold));
        for (double f : {0.5, 0.9, 0.999}) monotone = monotone && !with(f * threshold).no_trade;
        for (double f : {1.0, 1.001, 1.5, 3.0}) {
            const auto s = with(f * threshold);
            monotone = monotone && s.no_trade;
            zero_alpha = zero_alpha && evaluate_alpha(robust_strategy(s, in.params), 0.0, in.params.x0).isZero(0.0);
        }
    }
    v.require(worst <= 1e-9, "flip within 1e-9 of the threshold");
    v.require(monotone, "trading below, no trade at and above the threshold");
    v.require(zero_alpha, "zero allocation above the threshold");
    v.detail << cases.size() << " instances, max |flip - threshold| " << sci(worst);
    return v;
}

Verdict counterexample() {
    Verdict v;
    const MarketParams p = MarketParams::make(make_vector({1.0}), 1.0, 1.0, 1.0);
    const auto table = remark_counterexample(0.2, 5.0, p);
    const bool negative = table.any_negative();

    // The limit is pointwise on (0, T]; at t = 0 the value c e^{rT} / (2 lambda) grows with c.
    double worst_limit = 0.0;
    for (double t : table.t)
        if (t > 0.0)
            worst_limit = std::max(worst_limit, std::abs(remark_f(t, 1e4, table.r_star, p.lambda, p.horizon) -
                                                     remark_f_limit(t, table.r_star, p.lambda, p.horizon)));

    // Drift-only ambiguity on [0.2, 5]: the worst case is the lower end.
    const AmbiguitySpec spec = make_product(make_vector({0.2}), make_vector({5.0}),
                                            GammaBox::box(RhoVector::zeros(1), RhoVector::zeros(1)));
    const auto sol = solve(spec, p);
    auto schedules = default_probe_schedules(sol, spec, p);
    schedules.push_back({"theta_5", ThetaProcessSchedule::constant({make_vector({5.0}), RhoVector::zeros(1)})});
    const auto report = verify_weak_principle(sol, spec, p, reference_config(20000, 128), {}, schedules, false);

    v.require(negative, "strictly negative f values in the table");
    v.require(worst_limit < 1e-3, "limit within 1e-3 at c = 1e4 for t in (0, T]");
    v.require(std::abs(sol.theta_star.b[0] - 0.2) < 1e-9, "worst-case drift at the lower end");
    v.require(report.condition_iii(), "condition (iii) holds");
    v.detail << "c " << table.c << ", min f " << sci(table.min_value()) << (negative ? " (negative found)" : " (no negative value)")
             << ", limit error " << sci(worst_limit) << ", condition (iii) "
             << (report.condition_iii() ? "holds" : "fails") << " on " << schedules.size() << " schedules";
    return v;
}

Verdict singleton_reduction() {
    Verdict v;
    std::mt19937_64 rng(7011);
    std::normal_distribution<double> normal(0.0, 0.3);
    int mismatches = 0, count = 0;
    for (int d = 1; d <= 4; ++d) {
        for (int k = 0; k < 25; ++k) {
            const MarketParams p = unit_market(d, 0.25 + 0.25 * (k % 3), 1.0 + 0.1 * k);
            Vector b(d);
            for (int i = 0; i < d; ++i) b[i] = normal(rng);
            const ThetaPoint t{b, d == 1 ? RhoVector::zeros(1) : random_pd_rho(d, rng, 0.6)};
            const auto sol = solve(make_singleton(t), p);
            const auto robust = robust_strategy(sol, p), classical = classical_strategy(t, p);
            const bool same = robust.allocation_direction == classical.allocation_direction &&
                              robust.r_star == classical.r_star &&
                              value_v0(sol, p) == value_v0(classical.r_star, p) &&
                              evaluate_alpha(robust, 0.3, 0.7) == evaluate_alpha(classical, 0.3, 0.7);
            if (!same) ++mismatches;
            ++count;
        }
    }
    v.require(mismatches == 0, "bitwise agreement");
    v.detail << count << " singleton instances (d = 1..4), " << mismatches << " mismatches";
    return v;
}

Verdict classification(const Shared& shared) {
    Verdict v;
    int checked = 0, bad = 0;
    for (std::size_t k = 0; k < shared.two_asset.size(); ++k) {
        const auto& in = shared.two_asset[k];
        const auto& sol = shared.two_asset_solutions[k];
        if (sol.no_trade) continue;
        const auto r = classify(sol, in.params);
        const Vector dir = robust_strategy(sol, in.params).allocation_direction;
        bool ok = true;
        if (sol.case_label == CaseLabel::TwoAssetUpper)
            ok = dir[0] * dir[1] > 0 && r.mode == PairMode::Directional;
        else if (sol.case_label == CaseLabel::TwoAssetLower)
            ok = dir[0] * dir[1] < 0 && r.mode == PairMode::Spread;
        else if (sol.case_label == CaseLabel::TwoAssetInterior)
            ok = r.cls == DiversificationClass::AntiDiversification;
        ++checked;
        if (!ok) ++bad;
    }
    for (std::size_t k = 0; k < shared.three_asset.size(); ++k) {
        const auto& in = shared.three_asset[k];
        const auto& sol = shared.three_asset_solutions[k];
        if (sol.no_trade) continue;
        const auto r = classify(sol, in.params);
        const auto order = sharpe_profile(in.spec.ellipsoid().b_hat, in.params).order;
        const int family = three_asset_family(sol.case_label);
        bool ok = true;
        if (family == 1) {
            ok = r.cls == DiversificationClass::AntiDiversification && r.asset == order[0] + 1;
        } else if (family <= 4) {
            const bool first = sol.case_label == CaseLabel::ThreeAssetCase2i ||
                               sol.case_label == CaseLabel::ThreeAssetCase3i ||
                               sol.case_label == CaseLabel::ThreeAssetCase4i;
            ok = r.cls == DiversificationClass::UnderDiversification && r.asset == order[4 - family] + 1 &&
                 r.mode == (first ? PairMode::Directional : PairMode::Spread);
        } else {
            ok = r.cls == DiversificationClass::WellDiversified;
        }
        ++checked;
        if (!ok) ++bad;
    }
    v.require(bad == 0, "every label and sign assertion holds");
    v.detail << checked << " trading instances, " << bad << " nonconforming";
    return v;
}

}  // namespace

int main() {
    Shared shared;
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"gradient identity", gradient_identity},
        {"two-asset closed form vs grid oracle", [&] { return two_asset_oracle(shared); }},
        {"three-asset closed form vs grid oracle", [&] { return three_asset_oracle(shared); }},
        {"full correlation ambiguity formula", [&] { return full_ambiguity(shared); }},
        {"saddle inequalities", [&] { return saddle(shared); }},
        {"value reproduction", value_reproduction},
        {"weak optimality principle", weak_principle},
        {"no-trade threshold", no_trade_threshold},
        {"non-monotone value counterexample", counterexample},
        {"singleton reduction", singleton_reduction},
        {"classification conformance", [&] { return classification(shared); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail << "exception: " << e.what();
        }
        if (!v.pass) ++failed;
        std::printf("%s %2zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    (v.detail.str() + v.failures).c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
