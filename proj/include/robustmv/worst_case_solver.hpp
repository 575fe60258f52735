/**
 * @file worst_case_solver.hpp
 * @brief Minimization of the risk premium over an ambiguity set.
 *
 * Closed forms cover ellipsoidal sets with one, two or three assets and the
 * full-ambiguity correlation cone. Everything else goes through a projected
 * gradient solver. A brute-force grid oracle and a sampled saddle-point check
 * are provided for verification.
 */
#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "robustmv/ambiguity_sets.hpp"

namespace robustmv {

enum class CaseLabel {
    Singleton,
    DriftOnly,
    FullAmbiguity,
    TwoAssetInterior,
    TwoAssetUpper,
    TwoAssetLower,
    ThreeAssetCase1,
    ThreeAssetCase2i,
    ThreeAssetCase2ii,
    ThreeAssetCase3i,
    ThreeAssetCase3ii,
    ThreeAssetCase4i,
    ThreeAssetCase4ii,
    ThreeAssetCase5i,
    ThreeAssetCase5ii,
    ThreeAssetCase5iii,
    ThreeAssetCase5iv,
    Numeric,
    Oracle,
};

inline constexpr std::array<std::pair<CaseLabel, const char*>, 19> kCaseLabelNames{{
    {CaseLabel::Singleton, "Singleton"},
    {CaseLabel::DriftOnly, "DriftOnly"},
    {CaseLabel::FullAmbiguity, "FullAmbiguity"},
    {CaseLabel::TwoAssetInterior, "TwoAsset.Interior"},
    {CaseLabel::TwoAssetUpper, "TwoAsset.Upper"},
    {CaseLabel::TwoAssetLower, "TwoAsset.Lower"},
    {CaseLabel::ThreeAssetCase1, "ThreeAsset.Case1"},
    {CaseLabel::ThreeAssetCase2i, "ThreeAsset.Case2i"},
    {CaseLabel::ThreeAssetCase2ii, "ThreeAsset.Case2ii"},
    {CaseLabel::ThreeAssetCase3i, "ThreeAsset.Case3i"},
    {CaseLabel::ThreeAssetCase3ii, "ThreeAsset.Case3ii"},
    {CaseLabel::ThreeAssetCase4i, "ThreeAsset.Case4i"},
    {CaseLabel::ThreeAssetCase4ii, "ThreeAsset.Case4ii"},
    {CaseLabel::ThreeAssetCase5i, "ThreeAsset.Case5i"},
    {CaseLabel::ThreeAssetCase5ii, "ThreeAsset.Case5ii"},
    {CaseLabel::ThreeAssetCase5iii, "ThreeAsset.Case5iii"},
    {CaseLabel::ThreeAssetCase5iv, "ThreeAsset.Case5iv"},
    {CaseLabel::Numeric, "Numeric"},
    {CaseLabel::Oracle, "Oracle"},
}};

inline const char* to_string(CaseLabel label) {
    for (const auto& [l, name] : kCaseLabelNames)
        if (l == label) return name;
    return "Unknown";
}

inline CaseLabel parse_case_label(const std::string& text) {
    for (const auto& [l, name] : kCaseLabelNames)
        if (text == name) return l;
    throw InputError("unknown case label '" + text + "'");
}

/// Which three-asset family a label belongs to: 1..5, or 0 for anything else.
inline int three_asset_family(CaseLabel label) {
    switch (label) {
        case CaseLabel::ThreeAssetCase1: return 1;
        case CaseLabel::ThreeAssetCase2i:
        case CaseLabel::ThreeAssetCase2ii: return 2;
        case CaseLabel::ThreeAssetCase3i:
        case CaseLabel::ThreeAssetCase3ii: return 3;
        case CaseLabel::ThreeAssetCase4i:
        case CaseLabel::ThreeAssetCase4ii: return 4;
        case CaseLabel::ThreeAssetCase5i:
        case CaseLabel::ThreeAssetCase5ii:
        case CaseLabel::ThreeAssetCase5iii:
        case CaseLabel::ThreeAssetCase5iv: return 5;
        default: return 0;
    }
}

struct Diagnostics {
    int iterations = 0;       ///< iterations of the winning start
    int starts = 0;           ///< starts attempted by the numeric solver
    bool converged = true;    ///< false when the numeric solver hit max_iters
    double residual = 0.0;    ///< variational-inequality residual at the answer
    int grid_resolution = 0;  ///< points per coordinate, grid oracle only
    long long grid_nodes = 0; ///< nodes evaluated, grid oracle only
    double root_residual = 0.0;
    int zeroed_component = -1; ///< input-order asset whose kappa vanishes
    bool fallthrough = false;  ///< three-asset tests all failed
};

struct WorstCaseSolution {
    ThetaPoint theta_star;
    double r_star = 0.0;
    CaseLabel case_label = CaseLabel::Numeric;
    bool no_trade = false;
    Diagnostics diagnostics;
};

// ---------------------------------------------------------------------------
// Drift step for ellipsoidal sets
// ---------------------------------------------------------------------------

struct DriftShrink {
    Vector b_star;
    double r_star;
};

/// Shrink b_hat toward the origin given the anchor norm ||sigma^{-1} b_hat||.
inline DriftShrink shrink_drift(const Vector& b_hat, double norm, double delta) {
    if (norm > delta) {
        const double gap = norm - delta;
        return {(1.0 - delta / norm) * b_hat, gap * gap};
    }
    return {Vector::Zero(b_hat.size()), 0.0};
}

inline DriftShrink solve_ellipsoidal_given_rho(const RhoVector& rho_star, const Vector& b_hat,
                                               double delta, const MarketParams& params) {
    check_rho_dim(rho_star, params.dim());
    if (b_hat.size() != params.dim()) throw InputError("b_hat dimension mismatch");
    const CovMatrix cov = covariance_from(rho_star, params);
    return shrink_drift(b_hat, cov.mahalanobis_norm(b_hat), delta);
}

namespace detail {

inline WorstCaseSolution finish(const Vector& b_star, const RhoVector& rho_star, double r_star,
                                CaseLabel label) {
    WorstCaseSolution s;
    s.theta_star = ThetaPoint{b_star, rho_star};
    s.r_star = r_star;
    s.case_label = label;
    s.no_trade = (b_star.array() == 0.0).all();
    return s;
}

inline void require_ellipsoidal(const AmbiguitySpec& spec) {
    if (!spec.is_ellipsoidal()) throw InputError("an ellipsoidal ambiguity set is required");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Numeric fallback
// ---------------------------------------------------------------------------

struct NumericOptions {
    int starts = 8;
    int max_iters = 5000;
    double tol = 1e-8;
    std::uint64_t seed = 0x9e3779b97f4a7c15ULL;
};

namespace detail {

/// Minimizes either rho -> R(b_hat, rho) (ellipsoidal sets) or
/// (b, rho) -> R(b, rho) (product sets) over a box with a spectral projected
/// gradient method.
class BoxProblem {
public:
    BoxProblem(const AmbiguitySpec& spec, const MarketParams& params)
        : spec_(spec), params_(params), d_(params.dim()),
          n_rho_(RhoVector::pair_count(params.dim())), joint_(spec.is_product()) {
        const int nb = joint_ ? d_ : 0;
        lo_.resize(nb + n_rho_);
        hi_.resize(nb + n_rho_);
        if (joint_) {
            lo_.head(d_) = spec.product().lower;
            hi_.head(d_) = spec.product().upper;
        }
        for (int k = 0; k < n_rho_; ++k) {
            lo_[nb + k] = spec.gamma.lo(k);
            hi_[nb + k] = spec.gamma.hi(k);
        }
    }

    int size() const { return static_cast<int>(lo_.size()); }
    bool joint() const { return joint_; }

    RhoVector rho_of(const Vector& x) const { return RhoVector(Vector(x.tail(n_rho_))); }
    Vector b_of(const Vector& x) const {
        return joint_ ? Vector(x.head(d_)) : spec_.ellipsoid().b_hat;
    }

    Vector pack(const ThetaPoint& theta) const {
        Vector x(size());
        if (joint_) x.head(d_) = theta.b;
        x.tail(n_rho_) = theta.rho.entries();
        return x;
    }

    double value(const Vector& x) const {
        try {
            return risk_premium(ThetaPoint{b_of(x), rho_of(x)}, params_);
        } catch (const NotPositiveDefinite&) {
            return std::numeric_limits<double>::infinity();
        }
    }

    Vector gradient(const Vector& x) const {
        const RiskPremiumGradient g = risk_premium_gradients(ThetaPoint{b_of(x), rho_of(x)}, params_);
        Vector out(size());
        if (joint_) out.head(d_) = g.wrt_b;
        out.tail(n_rho_) = g.wrt_rho;
        return out;
    }

    Vector project(const Vector& x) const {
        Vector out(size());
        if (joint_) out.head(d_) = x.head(d_).cwiseMax(lo_.head(d_)).cwiseMin(hi_.head(d_));
        out.tail(n_rho_) = project_rho(spec_, rho_of(x)).entries();
        return out;
    }

    /// max over the box of -g . (y - x): zero exactly at a stationary point.
    double residual(const Vector& x, const Vector& g) const {
        double r = 0.0;
        for (int k = 0; k < size(); ++k)
            r -= std::min((lo_[k] - x[k]) * g[k], (hi_[k] - x[k]) * g[k]);
        return r;
    }

private:
    const AmbiguitySpec& spec_;
    const MarketParams& params_;
    int d_;
    int n_rho_;
    bool joint_;
    Vector lo_, hi_;
};

struct RunResult {
    Vector x;
    double value = std::numeric_limits<double>::infinity();
    int iterations = 0;
    double residual = std::numeric_limits<double>::infinity();
    bool converged = false;
};

inline RunResult spg_run(const BoxProblem& problem, const Vector& start, const NumericOptions& opt) {
    RunResult run;
    Vector x = problem.project(start);
    double f = problem.value(x);
    Vector g = problem.gradient(x);
    double step = 1.0;
    for (int it = 0;; ++it) {
        run.iterations = it;
        run.residual = problem.residual(x, g);
        if (run.residual < opt.tol) {
            run.converged = true;
            break;
        }
        if (it >= opt.max_iters) break;
        const Vector dir = problem.project(x - step * g) - x;
        if (dir.norm() < 1e-12) {
            run.converged = true;
            break;
        }
        const double slope = g.dot(dir);
        double t = 1.0;
        Vector next;
        double f_next = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int k = 0; k < 60; ++k) {
            next = x + t * dir;
            f_next = problem.value(next);
            if (f_next <= f + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;
        const Vector g_next = problem.gradient(next);
        const Vector s = next - x;
        const Vector y = g_next - g;
        const double sy = s.dot(y);
        step = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-10, 1e10) : 1e10;
        x = next;
        f = f_next;
        g = g_next;
    }
    run.x = x;
    run.value = f;
    return run;
}

/// For a product set, minimizing over the drifts Z of assets with a tiny
/// allocation (others held fixed) gives b_Z = Sigma_ZH Sigma_HH^{-1} b_H, which
/// makes kappa_Z exactly zero. Applied when that point stays inside the box.
inline Vector polish_product_drift(const Vector& b, const RhoVector& rho, const ProductSet& box,
                                   const MarketParams& params, double rel = 1e-6) {
    const int d = params.dim();
    const CovMatrix cov = covariance_from(rho, params);
    const Vector kappa = cov.solve(b);
    const double scale = kappa.cwiseAbs().maxCoeff();
    std::vector<int> z, h;
    for (int i = 0; i < d; ++i) (std::abs(kappa[i]) < rel * scale ? z : h).push_back(i);
    if (z.empty() || h.empty()) return b;
    const Matrix& sigma = cov.matrix();
    Matrix s_hh(h.size(), h.size()), s_zh(z.size(), h.size());
    Vector b_h(h.size());
    for (std::size_t a = 0; a < h.size(); ++a) {
        b_h[a] = b[h[a]];
        for (std::size_t c = 0; c < h.size(); ++c) s_hh(a, c) = sigma(h[a], h[c]);
        for (std::size_t c = 0; c < z.size(); ++c) s_zh(c, a) = sigma(z[c], h[a]);
    }
    const Vector b_z = s_zh * s_hh.llt().solve(b_h);
    Vector out = b;
    for (std::size_t c = 0; c < z.size(); ++c) {
        const int i = z[c];
        if (b_z[c] < box.lower[i] || b_z[c] > box.upper[i]) return b;
        out[i] = b_z[c];
    }
    return out;
}

}  // namespace detail

inline WorstCaseSolution numeric_minimize(const AmbiguitySpec& spec, const MarketParams& params,
                                          const NumericOptions& opt = {}) {
    spec.validate(params);
    if (opt.starts < 1) throw InputError("numeric_minimize needs at least one start");
    const int d = params.dim();

    if (spec.is_product()) {
        const auto& p = spec.product();
        const bool covers_zero = (p.lower.array() <= 0.0).all() && (p.upper.array() >= 0.0).all();
        if (covers_zero) {
            WorstCaseSolution s = detail::finish(Vector::Zero(d),
                                                 project_rho(spec, spec.gamma.midpoint()), 0.0,
                                                 CaseLabel::Numeric);
            s.diagnostics.starts = 0;
            return s;
        }
    }

    const detail::BoxProblem problem(spec, params);
    std::vector<Vector> starts;
    ThetaPoint center{spec.is_product() ? Vector(0.5 * (spec.product().lower + spec.product().upper))
                                        : spec.ellipsoid().b_hat,
                      project_rho(spec, spec.gamma.midpoint())};
    starts.push_back(problem.pack(center));
    if (opt.starts > 1) {
        for (const ThetaPoint& theta : sample(spec, params, opt.starts - 1, opt.seed))
            starts.push_back(problem.pack(theta));
    }

    detail::RunResult best;
    for (const Vector& start : starts) {
        detail::RunResult run = detail::spg_run(problem, start, opt);
        if (run.value < best.value) best = std::move(run);
    }

    const RhoVector rho = problem.rho_of(best.x);
    WorstCaseSolution s;
    if (problem.joint()) {
        Vector b = problem.b_of(best.x);
        const Vector polished = detail::polish_product_drift(b, rho, spec.product(), params);
        const double value = risk_premium(ThetaPoint{polished, rho}, params);
        if (value <= best.value * (1.0 + 1e-12)) {
            b = polished;
            best.value = value;
        }
        s = detail::finish(b, rho, best.value, CaseLabel::Numeric);
    } else {
        const auto& e = spec.ellipsoid();
        const DriftShrink shrink = shrink_drift(e.b_hat, std::sqrt(best.value), e.delta);
        s = detail::finish(shrink.b_star, rho, shrink.r_star, CaseLabel::Numeric);
    }
    s.diagnostics.iterations = best.iterations;
    s.diagnostics.starts = static_cast<int>(starts.size());
    s.diagnostics.converged = best.converged;
    s.diagnostics.residual = best.residual;
    return s;
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

inline WorstCaseSolution solve_full_ambiguity(const Vector& b_hat, double delta,
                                              const MarketParams& params) {
    const int d = params.dim();
    const SharpeProfile profile = sharpe_profile(b_hat, params);
    if (profile.zero_drift) throw ZeroDrift();
    const double beta1 = std::abs(profile.sorted_beta(0));
    if (d >= 2 && !(beta1 > std::abs(profile.sorted_beta(1))))
        throw NoMinimum("the largest absolute Sharpe ratio is shared by several assets; "
                        "the risk premium has no minimum over the correlation cone");

    RhoVector sorted = RhoVector::zeros(d);
    for (int j = 1; j < d; ++j) sorted[RhoVector::index(0, j, d)] = profile.proximity(0, j);
    for (int i = 1; i < d; ++i)
        for (int j = i + 1; j < d; ++j)
            sorted[RhoVector::index(i, j, d)] = profile.proximity(0, i) * profile.proximity(0, j);
    const RhoVector rho = unpermute_rho(sorted, profile.order);
    const Factorization f = factorize(correlation_matrix(rho, d));
    if (!f.ok()) throw NotPositiveDefinite(f.failed_pivot);

    const DriftShrink shrink = shrink_drift(b_hat, beta1, delta);
    return detail::finish(shrink.b_star, rho, shrink.r_star, CaseLabel::FullAmbiguity);
}

inline WorstCaseSolution solve_two_asset(const AmbiguitySpec& spec, const MarketParams& params) {
    detail::require_ellipsoidal(spec);
    if (params.dim() != 2) throw InputError("solve_two_asset requires d = 2");
    if (spec.gamma.full_ambiguity) throw InputError("solve_two_asset requires a bounded box");
    const auto& e = spec.ellipsoid();
    const SharpeProfile profile = sharpe_profile(e.b_hat, params);
    if (profile.zero_drift) throw ZeroDrift();

    const double proximity = profile.proximity(0, 1);
    const double lo = spec.gamma.lower[0], hi = spec.gamma.upper[0];
    double rho = proximity;
    CaseLabel label = CaseLabel::TwoAssetInterior;
    if (hi < proximity) {
        rho = hi;
        label = CaseLabel::TwoAssetUpper;
    } else if (lo > proximity) {
        rho = lo;
        label = CaseLabel::TwoAssetLower;
    }
    const RhoVector rho_star{rho};
    const DriftShrink shrink = solve_ellipsoidal_given_rho(rho_star, e.b_hat, e.delta, params);
    return detail::finish(shrink.b_star, rho_star, shrink.r_star, label);
}

namespace detail {

/// Zero segment of c0 + cx * x + cy * y inside [xl, xh] x [yl, yh].
inline std::optional<std::pair<Eigen::Vector2d, Eigen::Vector2d>> zero_segment(
    double c0, double cx, double cy, double xl, double xh, double yl, double yh) {
    constexpr double slack = 1e-12;
    std::vector<Eigen::Vector2d> pts;
    if (cx == 0.0 && cy == 0.0) {
        if (c0 != 0.0) return std::nullopt;
        return std::make_pair(Eigen::Vector2d(xl, yl), Eigen::Vector2d(xh, yh));
    }
    if (cy != 0.0) {
        for (double x : {xl, xh}) {
            const double y = -(c0 + cx * x) / cy;
            if (y >= yl - slack && y <= yh + slack) pts.emplace_back(x, std::clamp(y, yl, yh));
        }
    }
    if (cx != 0.0) {
        for (double y : {yl, yh}) {
            const double x = -(c0 + cy * y) / cx;
            if (x >= xl - slack && x <= xh + slack) pts.emplace_back(std::clamp(x, xl, xh), y);
        }
    }
    if (pts.empty()) return std::nullopt;
    std::pair<Eigen::Vector2d, Eigen::Vector2d> best{pts[0], pts[0]};
    double widest = -1.0;
    for (std::size_t a = 0; a < pts.size(); ++a)
        for (std::size_t b = a; b < pts.size(); ++b) {
            const double len = (pts[a] - pts[b]).squaredNorm();
            if (len > widest) {
                widest = len;
                best = {pts[a], pts[b]};
            }
        }
    return best;
}

/// Three-asset worker operating in the frame where |beta_1| >= |beta_2| >= |beta_3|.
class SortedThreeAsset {
public:
    SortedThreeAsset(const Vector& b_hat, const MarketParams& params, const GammaBox& box)
        : b_(b_hat), params_(params), box_(box) {}

    static constexpr int kPair12 = 0, kPair13 = 1, kPair23 = 2;

    double lo(int k) const { return box_.lower[k]; }
    double hi(int k) const { return box_.upper[k]; }

    Vector kappa(double r12, double r13, double r23) const {
        return covariance_from(RhoVector{r12, r13, r23}, params_).solve(b_);
    }

    static int pair_of(int i, int j) { return RhoVector::index(std::min(i, j), std::max(i, j), 3); }

    /// Sub-problem obtained by dropping asset z and fixing correlation of
    /// the remaining pair at `fixed`.
    struct Reduced {
        double norm;
        Eigen::Vector2d kappa;
    };
    Reduced reduced(int z, double fixed) const {
        const auto [p, q] = others(z);
        const double sp = params_.sigmas[p], sq = params_.sigmas[q];
        Eigen::Matrix2d sigma;
        sigma << sp * sp, sp * sq * fixed, sp * sq * fixed, sq * sq;
        const Eigen::LLT<Eigen::Matrix2d> llt(sigma);
        const Eigen::Vector2d b2(b_[p], b_[q]);
        const Eigen::Vector2d w = llt.matrixL().solve(b2);
        return {w.norm(), llt.solve(b2)};
    }

    static std::pair<int, int> others(int z) {
        if (z == 0) return {1, 2};
        if (z == 1) return {0, 2};
        return {0, 1};
    }

    /// Root of kappa_z = 0 on the free 2-D face, chosen per the midpoint rule.
    std::optional<RhoVector> root(int z, double fixed) const {
        const auto [p, q] = others(z);
        const Reduced red = reduced(z, fixed);
        const double sz = params_.sigmas[z];
        const int kx = pair_of(p, z), ky = pair_of(q, z);
        const double c0 = b_[z];
        const double cx = -params_.sigmas[p] * sz * red.kappa[0];
        const double cy = -params_.sigmas[q] * sz * red.kappa[1];
        const auto seg = zero_segment(c0, cx, cy, lo(kx), hi(kx), lo(ky), hi(ky));
        if (!seg) return std::nullopt;
        const int kf = pair_of(p, q);
        const Eigen::Vector2d mid = 0.5 * (seg->first + seg->second);
        std::optional<RhoVector> best;
        double best_dist = std::numeric_limits<double>::infinity();
        for (int k = 0; k <= 100; ++k) {
            const Eigen::Vector2d pt = seg->first + (k / 100.0) * (seg->second - seg->first);
            RhoVector rho = RhoVector::zeros(3);
            rho[kf] = fixed;
            rho[kx] = pt[0];
            rho[ky] = pt[1];
            if (!is_positive_definite(rho, 3)) continue;
            const double dist = (pt - mid).norm();
            if (dist < best_dist) {
                best_dist = dist;
                best = rho;
            }
        }
        return best;
    }

private:
    Vector b_;
    MarketParams params_;
    GammaBox box_;
};

}  // namespace detail

inline WorstCaseSolution solve_three_asset(const AmbiguitySpec& spec, const MarketParams& params,
                                           const NumericOptions& fallback = {}) {
    detail::require_ellipsoidal(spec);
    if (params.dim() != 3) throw InputError("solve_three_asset requires d = 3");
    if (spec.gamma.full_ambiguity) throw InputError("solve_three_asset requires a bounded box");
    const auto& e = spec.ellipsoid();
    const SharpeProfile profile = sharpe_profile(e.b_hat, params);
    if (profile.zero_drift) throw ZeroDrift();

    for (int mask = 0; mask < 8; ++mask) {
        RhoVector corner = RhoVector::zeros(3);
        for (int k = 0; k < 3; ++k)
            corner[k] = (mask >> k) & 1 ? spec.gamma.upper[k] : spec.gamma.lower[k];
        if (!is_positive_definite(corner, 3))
            throw BoxNotPD("correlation box corner (" + std::to_string(corner[0]) + ", " +
                           std::to_string(corner[1]) + ", " + std::to_string(corner[2]) +
                           ") is not positive definite");
    }

    const std::vector<int>& order = profile.order;
    const MarketParams sp = permute_params(params, order);
    const Vector bs = permute_vector(e.b_hat, order);
    const GammaBox box = GammaBox::box(permute_rho(spec.gamma.lower, order),
                                       permute_rho(spec.gamma.upper, order));
    const detail::SortedThreeAsset w(bs, sp, box);
    using W = detail::SortedThreeAsset;
    constexpr int P12 = W::kPair12, P13 = W::kPair13, P23 = W::kPair23;
    const double l12 = w.lo(P12), h12 = w.hi(P12);
    const double l13 = w.lo(P13), h13 = w.hi(P13);
    const double l23 = w.lo(P23), h23 = w.hi(P23);
    const double q12 = profile.proximity(0, 1), q13 = profile.proximity(0, 2),
                 q23 = profile.proximity(1, 2);

    auto finish_sorted = [&](const RhoVector& rho_sorted, double norm, CaseLabel label,
                             int zeroed) {
        const DriftShrink shrink = shrink_drift(e.b_hat, norm, e.delta);
        const RhoVector rho = unpermute_rho(rho_sorted, order);
        WorstCaseSolution s = detail::finish(shrink.b_star, rho, shrink.r_star, label);
        if (zeroed >= 0) {
            s.diagnostics.zeroed_component = order[zeroed];
            s.diagnostics.root_residual =
                std::abs(covariance_from(rho, params).solve(e.b_hat)[order[zeroed]]);
        }
        return s;
    };

    // Case 1: both proximities to the leading asset lie inside their ranges.
    if (q12 >= l12 && q12 <= h12 && q13 >= l13 && q13 <= h13) {
        RhoVector rho{q12, q13, 0.5 * (l23 + h23)};
        if (!is_positive_definite(rho, 3)) {
            // (q12, q13, q12 * q13) is always positive definite.
            const double target = q12 * q13;
            double ok = 0.0, fail = 1.0;
            for (int k = 0; k < kPdRepairSteps; ++k) {
                const double mid = 0.5 * (ok + fail);
                const RhoVector trial{q12, q13, target + mid * (rho[2] - target)};
                (is_positive_definite(trial, 3) ? ok : fail) = mid;
            }
            rho[2] = target + ok * (rho[2] - target);
        }
        if (is_positive_definite(rho, 3))
            return finish_sorted(rho, std::abs(profile.sorted_beta(0)), CaseLabel::ThreeAssetCase1,
                                 -1);
    }

    // Cases 2 to 4: one kappa component vanishes.
    struct ZeroCase {
        CaseLabel label;
        int zeroed;
        bool applies;
        double fixed;
    };
    auto k3 = [&](double a, double b, double c) { return w.kappa(a, b, c)[2]; };
    auto k2 = [&](double a, double b, double c) { return w.kappa(a, b, c)[1]; };
    auto k1 = [&](double a, double b, double c) { return w.kappa(a, b, c)[0]; };
    const ZeroCase zero_cases[] = {
        {CaseLabel::ThreeAssetCase2i, 2,
         h12 < q12 && k3(h12, h13, h23) * k3(h12, l13, l23) <= 0.0, h12},
        {CaseLabel::ThreeAssetCase2ii, 2,
         l12 > q12 && k3(l12, l13, h23) * k3(l12, h13, l23) <= 0.0, l12},
        {CaseLabel::ThreeAssetCase3i, 1,
         h13 < q13 && k2(h12, h13, h23) * k2(l12, h13, l23) <= 0.0, h13},
        {CaseLabel::ThreeAssetCase3ii, 1,
         l13 > q13 && k2(l12, l13, h23) * k2(h12, l13, l23) <= 0.0, l13},
        {CaseLabel::ThreeAssetCase4i, 0,
         h23 < q23 && k1(h12, h13, h23) * k1(l12, l13, h23) <= 0.0, h23},
        {CaseLabel::ThreeAssetCase4ii, 0,
         l23 > q23 && k1(l12, h13, l23) * k1(h12, l13, l23) <= 0.0, l23},
    };
    for (const ZeroCase& c : zero_cases) {
        if (!c.applies) continue;
        const std::optional<RhoVector> rho = w.root(c.zeroed, c.fixed);
        if (!rho) continue;
        return finish_sorted(*rho, w.reduced(c.zeroed, c.fixed).norm, c.label, c.zeroed);
    }

    // Case 5: a corner selected by the signs of kappa_1 kappa_2 and kappa_1 kappa_3.
    struct CornerCase {
        CaseLabel label;
        RhoVector corner;
        int sign12;
        int sign13;
    };
    const CornerCase corner_cases[] = {
        {CaseLabel::ThreeAssetCase5i, {h12, h13, h23}, +1, +1},
        {CaseLabel::ThreeAssetCase5ii, {l12, l13, h23}, -1, -1},
        {CaseLabel::ThreeAssetCase5iii, {h12, l13, l23}, +1, -1},
        {CaseLabel::ThreeAssetCase5iv, {l12, h13, l23}, -1, +1},
    };
    for (const CornerCase& c : corner_cases) {
        const Vector k = w.kappa(c.corner[0], c.corner[1], c.corner[2]);
        if (k[0] * k[1] * c.sign12 > 0.0 && k[0] * k[2] * c.sign13 > 0.0) {
            const double norm = covariance_from(c.corner, sp).mahalanobis_norm(bs);
            return finish_sorted(c.corner, norm, c.label, -1);
        }
    }

    WorstCaseSolution s = numeric_minimize(spec, params, fallback);
    s.diagnostics.fallthrough = true;
    return s;
}

// ---------------------------------------------------------------------------
// Product sets and dispatch
// ---------------------------------------------------------------------------

/// Throws BoxNotPD when a corner of the correlation box is not positive
/// definite. Boxes with more than 16 pairs are not enumerated.
inline void check_box_corners(const GammaBox& gamma, int d) {
    if (gamma.full_ambiguity) return;
    const int n = RhoVector::pair_count(d);
    if (n == 0 || n > 16) return;
    for (long mask = 0; mask < (1L << n); ++mask) {
        RhoVector corner = RhoVector::zeros(d);
        for (int k = 0; k < n; ++k) corner[k] = (mask >> k) & 1 ? gamma.upper[k] : gamma.lower[k];
        if (!is_positive_definite(corner, d))
            throw BoxNotPD("a corner of the correlation box is not positive definite");
    }
}

inline WorstCaseSolution solve_product(const AmbiguitySpec& spec, const MarketParams& params,
                                       const NumericOptions& opt = {}) {
    if (!spec.is_product()) throw InputError("solve_product requires a product set");
    spec.validate(params);
    check_box_corners(spec.gamma, params.dim());
    return numeric_minimize(spec, params, opt);
}

inline WorstCaseSolution solve(const AmbiguitySpec& spec, const MarketParams& params,
                               const NumericOptions& opt = {}) {
    params.validate();
    spec.validate(params);
    const int d = params.dim();

    if (spec.is_singleton()) {
        const Vector b = spec.is_product() ? spec.product().lower : spec.ellipsoid().b_hat;
        const ThetaPoint theta{b, spec.gamma.lower};
        return detail::finish(b, theta.rho, risk_premium(theta, params), CaseLabel::Singleton);
    }
    if (spec.is_product()) return solve_product(spec, params, opt);

    const auto& e = spec.ellipsoid();
    if ((e.b_hat.array() == 0.0).all()) throw ZeroDrift();
    if (d == 1 || spec.gamma.is_singleton()) {
        const RhoVector rho = d == 1 ? RhoVector::zeros(1) : spec.gamma.lower;
        const DriftShrink shrink = solve_ellipsoidal_given_rho(rho, e.b_hat, e.delta, params);
        return detail::finish(shrink.b_star, rho, shrink.r_star, CaseLabel::DriftOnly);
    }
    if (spec.gamma.full_ambiguity) return solve_full_ambiguity(e.b_hat, e.delta, params);
    if (d == 2) return solve_two_asset(spec, params);
    if (d == 3) return solve_three_asset(spec, params, opt);
    return numeric_minimize(spec, params, opt);
}

// ---------------------------------------------------------------------------
// Grid oracle
// ---------------------------------------------------------------------------

inline constexpr double kMaxGridNodes = 1e8;

inline WorstCaseSolution grid_oracle(const AmbiguitySpec& spec, const MarketParams& params,
                                     int resolution) {
    spec.validate(params);
    if (resolution < 1) throw InputError("grid resolution must be at least 1");
    const int d = params.dim();
    const int n_rho = RhoVector::pair_count(d);
    const bool joint = spec.is_product();
    const int n_coords = (joint ? d : 0) + n_rho;

    std::vector<double> lo(n_coords), hi(n_coords);
    for (int k = 0; k < n_coords; ++k) {
        if (joint && k < d) {
            lo[k] = spec.product().lower[k];
            hi[k] = spec.product().upper[k];
        } else {
            const int r = joint ? k - d : k;
            lo[k] = spec.gamma.lo(r);
            hi[k] = spec.gamma.hi(r);
        }
    }
    std::vector<int> counts(n_coords);
    double total = 1.0;
    for (int k = 0; k < n_coords; ++k) {
        counts[k] = lo[k] == hi[k] ? 1 : resolution;
        total *= counts[k];
    }
    if (total > kMaxGridNodes)
        throw GridTooLarge("grid would need " + std::to_string(static_cast<long long>(total)) +
                           " nodes (limit 1e8)");

    // The last node is pinned to hi so that rounding never pushes it out of the box.
    auto node = [&](int k, int i) {
        if (counts[k] == 1 || i == 0) return lo[k];
        if (i == counts[k] - 1) return hi[k];
        return std::min(hi[k], lo[k] + (hi[k] - lo[k]) * i / (counts[k] - 1));
    };

    std::vector<int> idx(n_coords, 0);
    ThetaPoint theta{joint ? Vector(d) : spec.ellipsoid().b_hat, RhoVector::zeros(d)};
    ThetaPoint best_theta = theta;
    double best = std::numeric_limits<double>::infinity();
    long long evaluated = 0;
    RhoVector last_rho;
    bool last_pd = false;
    std::optional<CovMatrix> cov;
    for (;;) {
        for (int k = 0; k < n_coords; ++k) {
            const double v = node(k, idx[k]);
            if (joint && k < d)
                theta.b[k] = v;
            else
                theta.rho[joint ? k - d : k] = v;
        }
        if (!(theta.rho == last_rho) || evaluated == 0) {
            last_rho = theta.rho;
            const Factorization f = factorize(correlation_matrix(theta.rho, d));
            last_pd = f.ok() && spec.gamma.in_box(theta.rho);
            if (last_pd) cov.emplace(covariance_from(theta.rho, params));
        }
        ++evaluated;
        if (last_pd) {
            const double value = cov->whiten(theta.b).squaredNorm();
            if (value < best) {
                best = value;
                best_theta = theta;
            }
        }
        int k = n_coords - 1;
        while (k >= 0 && ++idx[k] == counts[k]) idx[k--] = 0;
        if (k < 0) break;
    }
    if (!std::isfinite(best)) throw NoFeasiblePoint("no positive definite grid node");

    WorstCaseSolution s;
    if (joint) {
        s = detail::finish(best_theta.b, best_theta.rho, best, CaseLabel::Oracle);
    } else {
        const auto& e = spec.ellipsoid();
        const DriftShrink shrink = shrink_drift(e.b_hat, std::sqrt(best), e.delta);
        s = detail::finish(shrink.b_star, best_theta.rho, shrink.r_star, CaseLabel::Oracle);
    }
    s.diagnostics.grid_resolution = resolution;
    s.diagnostics.grid_nodes = evaluated;
    return s;
}

// ---------------------------------------------------------------------------
// Saddle verification
// ---------------------------------------------------------------------------

struct SaddleReport {
    int samples = 0;
    double h_star = 0.0;        ///< H(theta*)
    double upper_margin = 0.0;  ///< max over samples of H(b*, rho) - H(theta*); should be <= 0
    double lower_margin = 0.0;  ///< min over samples of H(b, rho*) - H(theta*); should be >= 0
    int violations = 0;
    std::optional<ThetaPoint> offending;
};

class SaddleViolated : public Error {
public:
    explicit SaddleViolated(SaddleReport report)
        : Error(ErrorKind::SaddleViolated,
                "saddle inequality violated (" + std::to_string(report.violations) + " of " +
                    std::to_string(report.samples) + " samples)"),
          report_(std::move(report)) {}
    const SaddleReport& report() const noexcept { return report_; }

private:
    SaddleReport report_;
};

inline constexpr double kSaddleTolerance = 1e-8;

inline SaddleReport verify_saddle(const WorstCaseSolution& solution, const AmbiguitySpec& spec,
                                  const MarketParams& params, int samples, std::uint64_t seed) {
    const ThetaPoint& star = solution.theta_star;
    SaddleReport report;
    report.samples = samples;
    report.h_star = saddle_H(star.b, star.rho, star, params);
    report.upper_margin = -std::numeric_limits<double>::infinity();
    report.lower_margin = std::numeric_limits<double>::infinity();
    for (const ThetaPoint& theta : sample(spec, params, samples, seed)) {
        const double up = saddle_H(star.b, theta.rho, star, params) - report.h_star;
        const double down = saddle_H(theta.b, star.rho, star, params) - report.h_star;
        report.upper_margin = std::max(report.upper_margin, up);
        report.lower_margin = std::min(report.lower_margin, down);
        if (up > kSaddleTolerance || down < -kSaddleTolerance) {
            ++report.violations;
            if (!report.offending) report.offending = theta;
        }
    }
    if (samples == 0) report.upper_margin = report.lower_margin = 0.0;
    if (report.violations > 0) throw SaddleViolated(report);
    return report;
}

}  // namespace robustmv
