/**
 * @file strategy_engine.hpp
 * @brief Optimal feedback strategy, value function and diversification
 *        classification for a solved worst case.
 */
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "robustmv/worst_case_solver.hpp"

namespace robustmv {

/// alpha(t, x) = Lambda(x) * direction with Lambda(x) = x0 + e^{rT}/(2 lambda) - x.
struct FeedbackStrategy {
    ThetaPoint theta_star;
    Vector allocation_direction;
    double r_star = 0.0;
    double x0 = 0.0;
    double lambda = 1.0;
    double horizon = 1.0;

    int dim() const { return static_cast<int>(allocation_direction.size()); }

    /// Wealth level at which the strategy stops investing.
    double target_wealth() const { return x0 + std::exp(r_star * horizon) / (2.0 * lambda); }

    double lambda_of(double x) const { return target_wealth() - x; }
};

/// Coefficients of the quadratic value function K_t (x - m)^2 + Y_t x + chi_t.
struct ValueCoefficients {
    double r_star = 0.0;
    double lambda = 1.0;
    double horizon = 1.0;

    double K(double t) const { return -lambda * std::exp(r_star * (t - horizon)); }
    double Y(double /*t*/) const { return 1.0; }
    double chi(double t) const {
        return (std::exp(r_star * (horizon - t)) - 1.0) / (4.0 * lambda);
    }
};

inline FeedbackStrategy make_strategy(const ThetaPoint& theta, double r_star,
                                      const MarketParams& params) {
    FeedbackStrategy s;
    s.theta_star = theta;
    s.allocation_direction = variance_risk_ratio(theta, params);
    s.r_star = r_star;
    s.x0 = params.x0;
    s.lambda = params.lambda;
    s.horizon = params.horizon;
    return s;
}

inline FeedbackStrategy robust_strategy(const WorstCaseSolution& solution,
                                        const MarketParams& params) {
    return make_strategy(solution.theta_star, solution.r_star, params);
}

/// Strategy for a market with known parameters theta0.
inline FeedbackStrategy classical_strategy(const ThetaPoint& theta0, const MarketParams& params) {
    return make_strategy(theta0, risk_premium(theta0, params), params);
}

inline Vector evaluate_alpha(const FeedbackStrategy& strategy, double /*t*/, double x) {
    return strategy.lambda_of(x) * strategy.allocation_direction;
}

inline double value_v0(double r_star, const MarketParams& params) {
    return params.x0 + (std::exp(r_star * params.horizon) - 1.0) / (4.0 * params.lambda);
}

inline double value_v0(const WorstCaseSolution& solution, const MarketParams& params) {
    return value_v0(solution.r_star, params);
}

inline ValueCoefficients value_coefficients(double r_star, const MarketParams& params) {
    return ValueCoefficients{r_star, params.lambda, params.horizon};
}

inline double mean_wealth(const FeedbackStrategy& s, double t) {
    return s.x0 + std::exp(s.r_star * s.horizon) / (2.0 * s.lambda) * (1.0 - std::exp(-s.r_star * t));
}

inline std::vector<double> mean_wealth_path(const FeedbackStrategy& strategy,
                                            const std::vector<double>& t_grid) {
    std::vector<double> out;
    out.reserve(t_grid.size());
    for (double t : t_grid) {
        if (t < 0.0 || t > strategy.horizon) throw InputError("time outside [0, T]");
        out.push_back(mean_wealth(strategy, t));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Diversification
// ---------------------------------------------------------------------------

enum class DiversificationClass { NoTrade, AntiDiversification, UnderDiversification, WellDiversified };
enum class PairMode { None, Directional, Spread };

inline const char* to_string(DiversificationClass c) {
    switch (c) {
        case DiversificationClass::NoTrade: return "NoTrade";
        case DiversificationClass::AntiDiversification: return "AntiDiversification";
        case DiversificationClass::UnderDiversification: return "UnderDiversification";
        case DiversificationClass::WellDiversified: return "WellDiversified";
    }
    return "Unknown";
}

inline const char* to_string(PairMode m) {
    switch (m) {
        case PairMode::None: return "None";
        case PairMode::Directional: return "Directional";
        case PairMode::Spread: return "Spread";
    }
    return "Unknown";
}

struct DiversificationReport {
    DiversificationClass cls = DiversificationClass::NoTrade;
    int asset = 0;  ///< 1-based: held asset (anti) or excluded asset (under); 0 otherwise
    PairMode mode = PairMode::None;
    std::string signs;  ///< one of '+', '-', '0' per asset
    std::string case_label;
    std::string narrative;

    std::string summary() const {
        switch (cls) {
            case DiversificationClass::NoTrade: return "NoTrade";
            case DiversificationClass::AntiDiversification:
                return "AntiDiversification asset=" + std::to_string(asset);
            case DiversificationClass::UnderDiversification:
                return "UnderDiversification excluded=" + std::to_string(asset) +
                       " mode=" + to_string(mode);
            case DiversificationClass::WellDiversified:
                return "WellDiversified signs=" + signs;
        }
        return "";
    }
};

inline constexpr double kZeroAllocation = 1e-10;

/// '+', '-' or '0' per component, with zero meaning |v_i| < 1e-10 ||v||_inf.
inline std::string sign_pattern(const Vector& v) {
    const double scale = v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
    std::string out;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (scale == 0.0 || std::abs(v[i]) < kZeroAllocation * scale)
            out += '0';
        else
            out += v[i] > 0.0 ? '+' : '-';
    }
    return out;
}

inline DiversificationReport classify(const WorstCaseSolution& solution,
                                      const MarketParams& params) {
    DiversificationReport r;
    r.case_label = to_string(solution.case_label);
    const Vector dir = variance_risk_ratio(solution.theta_star, params);
    r.signs = sign_pattern(dir);
    const int d = params.dim();

    std::vector<int> held, zero;
    for (int i = 0; i < d; ++i) (r.signs[i] == '0' ? zero : held).push_back(i);

    auto side = [&](int i) { return r.signs[i] == '+' ? "long" : "short"; };
    auto pair_mode = [&](int i, int j) {
        return r.signs[i] == r.signs[j] ? PairMode::Directional : PairMode::Spread;
    };

    if (solution.no_trade || held.empty()) {
        r.cls = DiversificationClass::NoTrade;
        r.signs = std::string(static_cast<std::size_t>(d), '0');
        r.narrative = "no trade: the worst-case risk premium is zero, stay in the riskless asset";
        return r;
    }
    if (held.size() == 1) {
        r.cls = DiversificationClass::AntiDiversification;
        r.asset = held[0] + 1;
        r.narrative = "anti-diversification: invest only in asset " + std::to_string(r.asset) +
                      ", " + side(held[0]);
        return r;
    }
    if (!zero.empty()) {
        r.cls = DiversificationClass::UnderDiversification;
        r.asset = zero[0] + 1;
        if (held.size() == 2) r.mode = pair_mode(held[0], held[1]);
        r.narrative = "under-diversification: no investment in asset " + std::to_string(r.asset);
        if (r.mode != PairMode::None)
            r.narrative += std::string(", remaining pair is ") +
                           (r.mode == PairMode::Directional ? "directional" : "a spread");
        return r;
    }
    r.cls = DiversificationClass::WellDiversified;
    if (d == 2) r.mode = pair_mode(0, 1);
    r.narrative = "well-diversified: positions " + r.signs;
    return r;
}

}  // namespace robustmv
