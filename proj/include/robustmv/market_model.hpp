/**
 * @file market_model.hpp
 * @brief Correlation and covariance algebra for d assets with known
 *        volatilities and ambiguous correlations.
 *
 * Correlations are stored as the strict upper triangle of C(rho) in
 * row-major order: (1,2), (1,3), ..., (1,d), (2,3), ..., (d-1,d).
 * Nothing here forms an explicit inverse; Sigma^{-1} b is always obtained
 * from two triangular solves against the cached lower factor.
 */
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "robustmv/errors.hpp"

namespace robustmv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Pivots of the correlation factorization must exceed this fraction of the
/// largest diagonal entry for C(rho) to count as positive definite.
inline constexpr double kPdTolerance = 1e-10;

inline Vector make_vector(std::initializer_list<double> values) {
    Vector v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index k = 0;
    for (double x : values) v[k++] = x;
    return v;
}

inline Vector make_vector(const std::vector<double>& values) {
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline std::vector<double> to_std(const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

// ---------------------------------------------------------------------------
// MarketParams
// ---------------------------------------------------------------------------

struct MarketParams {
    Vector sigmas;        ///< marginal volatilities, per sqrt(time)
    double horizon = 1.0; ///< T
    double lambda = 1.0;  ///< risk aversion
    double x0 = 0.0;      ///< initial wealth

    int dim() const { return static_cast<int>(sigmas.size()); }

    void validate() const {
        if (sigmas.size() < 1) throw InputError("market: at least one asset is required");
        for (Eigen::Index i = 0; i < sigmas.size(); ++i) {
            if (!(sigmas[i] > 0.0) || !std::isfinite(sigmas[i]))
                throw InputError("market: sigma_" + std::to_string(i + 1) +
                                 " must be finite and strictly positive");
        }
        if (!(horizon > 0.0) || !std::isfinite(horizon))
            throw InputError("market: horizon T must be positive");
        if (!(lambda > 0.0) || !std::isfinite(lambda))
            throw InputError("market: risk aversion lambda must be positive");
        if (!std::isfinite(x0)) throw InputError("market: x0 must be finite");
    }

    static MarketParams make(Vector sigmas, double horizon, double lambda, double x0) {
        MarketParams p{std::move(sigmas), horizon, lambda, x0};
        p.validate();
        return p;
    }
};

// ---------------------------------------------------------------------------
// RhoVector
// ---------------------------------------------------------------------------

/// Strict upper triangle of a correlation matrix. Membership in the open
/// cone of positive definite correlations is not enforced so that boundary
/// points stay representable.
class RhoVector {
public:
    RhoVector() = default;
    explicit RhoVector(Vector entries) : entries_(std::move(entries)) {}
    RhoVector(std::initializer_list<double> values) : entries_(make_vector(values)) {}

    static RhoVector zeros(int d) { return RhoVector(Vector::Zero(pair_count(d))); }
    static RhoVector constant(int d, double value) {
        return RhoVector(Vector::Constant(pair_count(d), value));
    }

    static constexpr int pair_count(int d) { return d * (d - 1) / 2; }

    /// Position of pair (i, j), zero-based with i < j.
    static constexpr int index(int i, int j, int d) {
        return i * d - i * (i + 1) / 2 + (j - i - 1);
    }

    /// Inverse of index(): the (i, j) pair stored at position k.
    static std::pair<int, int> pair_at(int k, int d) {
        for (int i = 0; i < d - 1; ++i) {
            const int row = d - 1 - i;
            if (k < row) return {i, i + 1 + k};
            k -= row;
        }
        throw InputError("rho index out of range");
    }

    /// Dimension implied by the stored length, or nullopt if the length is
    /// not triangular. An empty vector is reported as d = 1.
    std::optional<int> implied_dim() const {
        const auto n = static_cast<int>(entries_.size());
        for (int d = 1; pair_count(d) <= n; ++d)
            if (pair_count(d) == n) return d;
        return std::nullopt;
    }

    double at(int i, int j, int d) const {
        if (i == j) return 1.0;
        if (i > j) std::swap(i, j);
        return entries_[index(i, j, d)];
    }

    int size() const { return static_cast<int>(entries_.size()); }
    double operator[](int k) const { return entries_[k]; }
    double& operator[](int k) { return entries_[k]; }
    const Vector& entries() const { return entries_; }
    Vector& entries() { return entries_; }

    friend bool operator==(const RhoVector& a, const RhoVector& b) {
        return a.entries_.size() == b.entries_.size() &&
               std::equal(a.entries_.data(), a.entries_.data() + a.entries_.size(),
                          b.entries_.data());
    }

private:
    Vector entries_;
};

struct ThetaPoint {
    Vector b;
    RhoVector rho;

    int dim() const { return static_cast<int>(b.size()); }

    friend bool operator==(const ThetaPoint& x, const ThetaPoint& y) {
        return x.b.size() == y.b.size() &&
               std::equal(x.b.data(), x.b.data() + x.b.size(), y.b.data()) && x.rho == y.rho;
    }
};

inline void check_rho_dim(const RhoVector& rho, int d) {
    if (rho.size() != RhoVector::pair_count(d))
        throw InputError("rho has length " + std::to_string(rho.size()) + ", expected " +
                         std::to_string(RhoVector::pair_count(d)) + " for d = " +
                         std::to_string(d));
}

// ---------------------------------------------------------------------------
// Correlation matrix and positive definiteness
// ---------------------------------------------------------------------------

inline Matrix correlation_matrix(const RhoVector& rho, int d) {
    if (d < 1) throw InputError("dimension must be at least 1");
    check_rho_dim(rho, d);
    Matrix c = Matrix::Identity(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            const double v = rho[RhoVector::index(i, j, d)];
            c(i, j) = v;
            c(j, i) = v;
        }
    }
    return c;
}

/// Outcome of an attempted Cholesky factorization.
struct Factorization {
    Matrix lower;          ///< valid only when failed_pivot < 0
    int failed_pivot = -1; ///< zero-based index of the first bad pivot
    double min_pivot = 0;  ///< smallest pivot value seen (squared diagonal of L)

    bool ok() const { return failed_pivot < 0; }
};

/// Plain lower Cholesky with an explicit pivot floor of
/// kPdTolerance * max(diagonal).
inline Factorization factorize(const Matrix& a) {
    const auto n = a.rows();
    Factorization f;
    f.lower = Matrix::Zero(n, n);
    const double floor = kPdTolerance * a.diagonal().maxCoeff();
    f.min_pivot = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
        double pivot = a(j, j);
        for (Eigen::Index k = 0; k < j; ++k) pivot -= f.lower(j, k) * f.lower(j, k);
        f.min_pivot = std::min(f.min_pivot, pivot);
        if (!(pivot > floor)) {
            f.failed_pivot = static_cast<int>(j);
            return f;
        }
        const double ljj = std::sqrt(pivot);
        f.lower(j, j) = ljj;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (Eigen::Index k = 0; k < j; ++k) s -= f.lower(i, k) * f.lower(j, k);
            f.lower(i, j) = s / ljj;
        }
    }
    return f;
}

inline bool is_positive_definite(const RhoVector& rho, int d) {
    if (rho.size() != RhoVector::pair_count(d)) return false;
    for (int k = 0; k < rho.size(); ++k)
        if (!(std::abs(rho[k]) <= 1.0)) return false;
    return factorize(correlation_matrix(rho, d)).ok();
}

// ---------------------------------------------------------------------------
// Covariance
// ---------------------------------------------------------------------------

/// Sigma(rho) = S C(rho) S together with a lower factor L, L L^T = Sigma.
class CovMatrix {
public:
    CovMatrix(Matrix sigma, Matrix lower) : sigma_(std::move(sigma)), lower_(std::move(lower)) {}

    int dim() const { return static_cast<int>(sigma_.rows()); }
    const Matrix& matrix() const { return sigma_; }
    const Matrix& lower() const { return lower_; }

    /// L^{-1} v; its Euclidean norm equals ||sigma(rho)^{-1} v||_2.
    Vector whiten(const Vector& v) const {
        return lower_.triangularView<Eigen::Lower>().solve(v);
    }

    /// Sigma^{-1} v via forward and backward substitution.
    Vector solve(const Vector& v) const {
        Vector y = whiten(v);
        return lower_.transpose().triangularView<Eigen::Upper>().solve(y);
    }

    double mahalanobis_norm(const Vector& v) const { return whiten(v).norm(); }

private:
    Matrix sigma_;
    Matrix lower_;
};

inline CovMatrix covariance_from(const RhoVector& rho, const MarketParams& params) {
    const int d = params.dim();
    const Matrix c = correlation_matrix(rho, d);
    const Factorization f = factorize(c);
    if (!f.ok()) throw NotPositiveDefinite(f.failed_pivot);
    Matrix sigma(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) sigma(i, j) = params.sigmas[i] * params.sigmas[j] * c(i, j);
    Matrix lower = params.sigmas.asDiagonal() * f.lower;
    return CovMatrix(std::move(sigma), std::move(lower));
}

inline void check_theta_dim(const ThetaPoint& theta, const MarketParams& params) {
    if (theta.dim() != params.dim())
        throw InputError("drift has length " + std::to_string(theta.dim()) + ", expected " +
                         std::to_string(params.dim()));
    check_rho_dim(theta.rho, params.dim());
}

// ---------------------------------------------------------------------------
// Risk premium and friends
// ---------------------------------------------------------------------------

/// R(theta) = b^T Sigma(rho)^{-1} b.
inline double risk_premium(const ThetaPoint& theta, const MarketParams& params) {
    check_theta_dim(theta, params);
    return covariance_from(theta.rho, params).whiten(theta.b).squaredNorm();
}

/// kappa(b, rho) = Sigma(rho)^{-1} b.
inline Vector variance_risk_ratio(const ThetaPoint& theta, const MarketParams& params) {
    check_theta_dim(theta, params);
    return covariance_from(theta.rho, params).solve(theta.b);
}

struct RiskPremiumGradient {
    Vector wrt_b;
    Vector wrt_rho; ///< same ordering as RhoVector
};

/// dR/db_i = 2 kappa_i and dR/drho_ij = -2 sigma_i sigma_j kappa_i kappa_j.
/// rho_ij sits in both (i, j) and (j, i) of C, hence the factor two.
inline RiskPremiumGradient risk_premium_gradients(const ThetaPoint& theta,
                                                  const MarketParams& params) {
    const int d = params.dim();
    const Vector kappa = variance_risk_ratio(theta, params);
    RiskPremiumGradient g;
    g.wrt_b = 2.0 * kappa;
    g.wrt_rho = Vector::Zero(RhoVector::pair_count(d));
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j)
            g.wrt_rho[RhoVector::index(i, j, d)] =
                -2.0 * params.sigmas[i] * params.sigmas[j] * kappa[i] * kappa[j];
    return g;
}

/// Central differences of R in every coordinate, b first then rho.
inline Vector finite_difference_gradient(const ThetaPoint& theta, const MarketParams& params,
                                         double step = 1e-6) {
    const int d = params.dim();
    const int n = RhoVector::pair_count(d);
    Vector g(d + n);
    for (int k = 0; k < d + n; ++k) {
        ThetaPoint up = theta, down = theta;
        if (k < d) {
            up.b[k] += step;
            down.b[k] -= step;
        } else {
            up.rho[k - d] += step;
            down.rho[k - d] -= step;
        }
        g[k] = (risk_premium(up, params) - risk_premium(down, params)) / (2.0 * step);
    }
    return g;
}

/// Analytic gradient stacked as (wrt_b, wrt_rho).
inline Vector stacked_gradient(const ThetaPoint& theta, const MarketParams& params) {
    const RiskPremiumGradient g = risk_premium_gradients(theta, params);
    Vector out(g.wrt_b.size() + g.wrt_rho.size());
    out << g.wrt_b, g.wrt_rho;
    return out;
}

/// H(b, rho) = b^T Sigma(rho*)^{-1} Sigma(rho) Sigma(rho*)^{-1} b*.
inline double saddle_H(const Vector& b, const RhoVector& rho, const ThetaPoint& theta_star,
                       const MarketParams& params) {
    check_theta_dim(theta_star, params);
    check_theta_dim(ThetaPoint{b, rho}, params);
    const CovMatrix cov_star = covariance_from(theta_star.rho, params);
    const CovMatrix cov = covariance_from(rho, params);
    const Vector left = cov_star.solve(b);
    const Vector right = cov_star.solve(theta_star.b);
    return left.dot(cov.matrix() * right);
}

// ---------------------------------------------------------------------------
// Sharpe ratios
// ---------------------------------------------------------------------------

struct SharpeProfile {
    Vector betas;           ///< b_hat_i / sigma_i in input order
    std::vector<int> order; ///< order[k] = input index of the k-th largest |beta|
    RhoVector proximities;  ///< beta_(j) / beta_(i) in the sorted frame, 0 when beta_(i) = 0
    bool zero_drift = false;

    int dim() const { return static_cast<int>(betas.size()); }
    double sorted_beta(int k) const { return betas[order[k]]; }
    double proximity(int i, int j) const {
        return proximities[RhoVector::index(i, j, dim())];
    }
};

inline SharpeProfile sharpe_profile(const Vector& b_hat, const MarketParams& params) {
    const int d = params.dim();
    if (b_hat.size() != d) throw InputError("b_hat dimension mismatch");
    SharpeProfile p;
    p.betas = b_hat.cwiseQuotient(params.sigmas);
    p.order.resize(d);
    std::iota(p.order.begin(), p.order.end(), 0);
    std::stable_sort(p.order.begin(), p.order.end(), [&](int a, int b) {
        return std::abs(p.betas[a]) > std::abs(p.betas[b]);
    });
    p.proximities = RhoVector::zeros(d);
    for (int i = 0; i < d; ++i) {
        const double bi = p.betas[p.order[i]];
        for (int j = i + 1; j < d; ++j)
            p.proximities[RhoVector::index(i, j, d)] =
                bi == 0.0 ? 0.0 : p.betas[p.order[j]] / bi;
    }
    p.zero_drift = (b_hat.array() == 0.0).all();
    return p;
}

// ---------------------------------------------------------------------------
// Asset relabeling helpers
// ---------------------------------------------------------------------------

/// Re-express rho under a relabeling where new asset k is old asset order[k].
inline RhoVector permute_rho(const RhoVector& rho, const std::vector<int>& order) {
    const int d = static_cast<int>(order.size());
    RhoVector out = RhoVector::zeros(d);
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j)
            out[RhoVector::index(i, j, d)] = rho.at(order[i], order[j], d);
    return out;
}

/// Inverse of permute_rho.
inline RhoVector unpermute_rho(const RhoVector& sorted, const std::vector<int>& order) {
    const int d = static_cast<int>(order.size());
    RhoVector out = RhoVector::zeros(d);
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            const int a = std::min(order[i], order[j]);
            const int b = std::max(order[i], order[j]);
            out[RhoVector::index(a, b, d)] = sorted[RhoVector::index(i, j, d)];
        }
    return out;
}

inline Vector permute_vector(const Vector& v, const std::vector<int>& order) {
    Vector out(v.size());
    for (std::size_t k = 0; k < order.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[order[k]];
    return out;
}

inline Vector unpermute_vector(const Vector& sorted, const std::vector<int>& order) {
    Vector out(sorted.size());
    for (std::size_t k = 0; k < order.size(); ++k) out[order[k]] = sorted[static_cast<Eigen::Index>(k)];
    return out;
}

inline MarketParams permute_params(const MarketParams& params, const std::vector<int>& order) {
    MarketParams out = params;
    out.sigmas = permute_vector(params.sigmas, order);
    return out;
}

}  // namespace robustmv
