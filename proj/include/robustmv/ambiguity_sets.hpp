/**
 * @file ambiguity_sets.hpp
 * @brief Product and ellipsoidal uncertainty sets over (drift, correlation).
 */
#pragma once

#include <cstdint>
#include <random>
#include <variant>
#include <vector>

#include "robustmv/market_model.hpp"

namespace robustmv {

/// Absolute slack on the ellipsoid inequality.
inline constexpr double kMembershipTolerance = 1e-9;

/// Bisection steps used when repairing a clamped correlation back into the
/// positive definite cone.
inline constexpr int kPdRepairSteps = 60;

// ---------------------------------------------------------------------------
// Sets
// ---------------------------------------------------------------------------

/// Box of admissible correlations, or the whole positive definite cone when
/// full_ambiguity is set (bounds are then ignored).
struct GammaBox {
    RhoVector lower;
    RhoVector upper;
    bool full_ambiguity = false;

    static GammaBox box(RhoVector lower, RhoVector upper) {
        return GammaBox{std::move(lower), std::move(upper), false};
    }
    static GammaBox full(int d) {
        return GammaBox{RhoVector::constant(d, -1.0), RhoVector::constant(d, 1.0), true};
    }
    static GammaBox singleton(const RhoVector& rho) { return GammaBox{rho, rho, false}; }

    bool is_singleton() const { return !full_ambiguity && lower == upper; }

    double lo(int k) const { return full_ambiguity ? -1.0 : lower[k]; }
    double hi(int k) const { return full_ambiguity ? 1.0 : upper[k]; }

    bool in_box(const RhoVector& rho) const {
        for (int k = 0; k < rho.size(); ++k) {
            if (full_ambiguity) {
                if (!(std::abs(rho[k]) < 1.0)) return false;
            } else if (!(rho[k] >= lower[k] && rho[k] <= upper[k])) {
                return false;
            }
        }
        return true;
    }

    RhoVector midpoint() const {
        RhoVector m = lower;
        for (int k = 0; k < m.size(); ++k) m[k] = 0.5 * (lo(k) + hi(k));
        return m;
    }
};

struct ProductSet {
    Vector lower;
    Vector upper;
};

struct EllipsoidalSet {
    Vector b_hat;
    double delta = 0.0;
};

struct AmbiguitySpec {
    std::variant<ProductSet, EllipsoidalSet> drift;
    GammaBox gamma;

    bool is_product() const { return std::holds_alternative<ProductSet>(drift); }
    bool is_ellipsoidal() const { return std::holds_alternative<EllipsoidalSet>(drift); }
    const ProductSet& product() const { return std::get<ProductSet>(drift); }
    const EllipsoidalSet& ellipsoid() const { return std::get<EllipsoidalSet>(drift); }

    int dim() const {
        return is_product() ? static_cast<int>(product().lower.size())
                            : static_cast<int>(ellipsoid().b_hat.size());
    }

    /// True when the set holds exactly one parameter pair.
    bool is_singleton() const {
        if (!gamma.is_singleton()) return false;
        if (is_product()) return (product().lower.array() == product().upper.array()).all();
        return ellipsoid().delta == 0.0;
    }

    void validate(const MarketParams& params) const {
        const int d = params.dim();
        if (dim() != d) throw InputError("ambiguity set dimension does not match market");
        if (is_product()) {
            const auto& p = product();
            if (p.upper.size() != d) throw InputError("product set: bound lengths differ");
            for (int i = 0; i < d; ++i)
                if (!(p.lower[i] <= p.upper[i]))
                    throw InputError("product set: drift bounds out of order for asset " +
                                     std::to_string(i + 1));
        } else {
            const auto& e = ellipsoid();
            if (!(e.delta >= 0.0) || !std::isfinite(e.delta))
                throw InputError("ellipsoidal set: delta must be a nonnegative number");
            if (!e.b_hat.allFinite()) throw InputError("ellipsoidal set: b_hat not finite");
        }
        if (!gamma.full_ambiguity) {
            check_rho_dim(gamma.lower, d);
            check_rho_dim(gamma.upper, d);
            for (int k = 0; k < gamma.lower.size(); ++k) {
                if (!(gamma.lower[k] <= gamma.upper[k]))
                    throw InputError("gamma: correlation bounds out of order");
                if (!(gamma.lower[k] > -1.0 && gamma.upper[k] < 1.0))
                    throw InputError("gamma: correlation bounds must lie in (-1, 1)");
            }
        }
    }
};

inline AmbiguitySpec make_ellipsoidal(Vector b_hat, double delta, GammaBox gamma) {
    return AmbiguitySpec{EllipsoidalSet{std::move(b_hat), delta}, std::move(gamma)};
}

inline AmbiguitySpec make_product(Vector lower, Vector upper, GammaBox gamma) {
    return AmbiguitySpec{ProductSet{std::move(lower), std::move(upper)}, std::move(gamma)};
}

inline AmbiguitySpec make_singleton(const ThetaPoint& theta) {
    return make_product(theta.b, theta.b, GammaBox::singleton(theta.rho));
}

// ---------------------------------------------------------------------------
// Membership and projections
// ---------------------------------------------------------------------------

inline bool contains(const AmbiguitySpec& spec, const ThetaPoint& theta,
                     const MarketParams& params) {
    const int d = params.dim();
    if (theta.dim() != d || theta.rho.size() != RhoVector::pair_count(d)) return false;
    if (!spec.gamma.in_box(theta.rho)) return false;
    const Factorization f = factorize(correlation_matrix(theta.rho, d));
    if (!f.ok()) return false;
    if (spec.is_product()) {
        const auto& p = spec.product();
        return (theta.b.array() >= p.lower.array()).all() &&
               (theta.b.array() <= p.upper.array()).all();
    }
    const auto& e = spec.ellipsoid();
    const CovMatrix cov = covariance_from(theta.rho, params);
    return cov.mahalanobis_norm(theta.b - e.b_hat) <= e.delta + kMembershipTolerance;
}

inline RhoVector clamp_to_box(const GammaBox& gamma, const RhoVector& rho) {
    RhoVector out = rho;
    for (int k = 0; k < out.size(); ++k) out[k] = std::clamp(out[k], gamma.lo(k), gamma.hi(k));
    return out;
}

/// Clamp into the box, then, if the result is not positive definite, pull it
/// back along the segment toward an anchor (zero if the box contains it,
/// otherwise the box midpoint) until it is. Feasible points are returned
/// unchanged.
inline RhoVector project_rho(const AmbiguitySpec& spec, const RhoVector& rho) {
    const GammaBox& gamma = spec.gamma;
    const int n = rho.size();
    const int d = spec.dim();
    check_rho_dim(rho, d);
    RhoVector clamped = clamp_to_box(gamma, rho);
    if (is_positive_definite(clamped, d) && gamma.in_box(clamped)) return clamped;

    RhoVector anchor = RhoVector::zeros(d);
    if (!gamma.in_box(anchor)) anchor = gamma.midpoint();
    if (!is_positive_definite(anchor, d))
        throw NoFeasiblePoint("no positive definite anchor inside the correlation box");

    auto along = [&](double t) {
        RhoVector p = anchor;
        for (int k = 0; k < n; ++k) p[k] = anchor[k] + t * (clamped[k] - anchor[k]);
        return p;
    };
    double good = 0.0, bad = 1.0;
    for (int step = 0; step < kPdRepairSteps; ++step) {
        const double mid = 0.5 * (good + bad);
        RhoVector p = along(mid);
        if (is_positive_definite(p, d) && gamma.in_box(p))
            good = mid;
        else
            bad = mid;
    }
    RhoVector out = along(good);
    if (!is_positive_definite(out, d))
        throw NoFeasiblePoint("correlation repair failed to reach the positive definite cone");
    return out;
}

inline Vector project_b(const AmbiguitySpec& spec, const Vector& b, const RhoVector& rho,
                        const MarketParams& params) {
    if (spec.is_product()) {
        const auto& p = spec.product();
        return b.cwiseMax(p.lower).cwiseMin(p.upper);
    }
    const auto& e = spec.ellipsoid();
    if (e.delta == 0.0) return e.b_hat;
    const CovMatrix cov = covariance_from(rho, params);
    const Vector diff = b - e.b_hat;
    const double norm = cov.mahalanobis_norm(diff);
    if (norm <= e.delta) return b;
    return e.b_hat + (e.delta / norm) * diff;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

inline constexpr long kMaxConsecutiveRejections = 1'000'000;

/// Rejection sampler: proposals are uniform on the bounding box of the set
/// (the ellipsoid fits inside b_hat +/- delta * sigma_i), kept when
/// contains() holds.
inline std::vector<ThetaPoint> sample(const AmbiguitySpec& spec, const MarketParams& params,
                                      int count, std::uint64_t seed) {
    if (count < 0) throw InputError("sample count must be nonnegative");
    const int d = params.dim();
    const int n = RhoVector::pair_count(d);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Vector b_lo(d), b_hi(d);
    if (spec.is_product()) {
        b_lo = spec.product().lower;
        b_hi = spec.product().upper;
    } else {
        const auto& e = spec.ellipsoid();
        b_lo = e.b_hat - e.delta * params.sigmas;
        b_hi = e.b_hat + e.delta * params.sigmas;
    }

    std::vector<ThetaPoint> out;
    out.reserve(static_cast<std::size_t>(count));
    long rejections = 0;
    while (static_cast<int>(out.size()) < count) {
        ThetaPoint theta{Vector(d), RhoVector::zeros(d)};
        for (int k = 0; k < n; ++k) {
            const double lo = spec.gamma.lo(k), hi = spec.gamma.hi(k);
            theta.rho[k] = lo + (hi - lo) * unit(rng);
        }
        for (int i = 0; i < d; ++i) theta.b[i] = b_lo[i] + (b_hi[i] - b_lo[i]) * unit(rng);
        if (contains(spec, theta, params)) {
            out.push_back(std::move(theta));
            rejections = 0;
        } else if (++rejections >= kMaxConsecutiveRejections) {
            throw SamplingExhausted("no feasible proposal after " +
                                    std::to_string(kMaxConsecutiveRejections) + " draws");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Deterministic piecewise-constant scenarios
// ---------------------------------------------------------------------------

struct ThetaProcessSchedule {
    std::vector<double> breakpoints; ///< start time of each piece; first is 0
    std::vector<ThetaPoint> values;

    static ThetaProcessSchedule constant(const ThetaPoint& theta) {
        return ThetaProcessSchedule{{0.0}, {theta}};
    }

    std::size_t piece_at(double t) const {
        std::size_t k = 0;
        while (k + 1 < breakpoints.size() && breakpoints[k + 1] <= t) ++k;
        return k;
    }

    const ThetaPoint& value_at(double t) const { return values[piece_at(t)]; }

    void validate(const AmbiguitySpec& spec, const MarketParams& params) const {
        if (breakpoints.empty() || breakpoints.size() != values.size())
            throw InputError("schedule: need one value per breakpoint");
        if (breakpoints.front() != 0.0) throw InputError("schedule: first breakpoint must be 0");
        for (std::size_t k = 1; k < breakpoints.size(); ++k)
            if (!(breakpoints[k] > breakpoints[k - 1]) || breakpoints[k] > params.horizon)
                throw InputError("schedule: breakpoints must increase within [0, T]");
        for (std::size_t k = 0; k < values.size(); ++k)
            if (!contains(spec, values[k], params))
                throw InputError("schedule: piece " + std::to_string(k) +
                                 " lies outside the ambiguity set");
    }
};

}  // namespace robustmv
