#pragma once

#include <cmath>
#include <random>

#include "robustmv/robustmv.hpp"

namespace testing_support {

using namespace robustmv;

inline MarketParams unit_market(int d, double lambda = 0.5, double x0 = 1.0) {
    return MarketParams::make(Vector::Ones(d), 1.0, lambda, x0);
}

/// Random correlation built as a normalized Gram matrix, so it is PD by
/// construction without going through the library's factorization.
inline RhoVector random_pd_rho(int d, std::mt19937_64& rng, double spread = 1.0) {
    std::normal_distribution<double> n;
    Matrix a(d, d + 2);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d + 2; ++j) a(i, j) = n(rng) * (j == i ? 1.0 / spread : 1.0);
    const Matrix g = a * a.transpose();
    RhoVector rho = RhoVector::zeros(d);
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j)
            rho[RhoVector::index(i, j, d)] = g(i, j) / std::sqrt(g(i, i) * g(j, j));
    return rho;
}

/// b^T Sigma^{-1} b for d = 2 through the explicit inverse.
inline double premium_2x2(double s1, double s2, double rho, double b1, double b2) {
    const double x = b1 / s1, y = b2 / s2;
    return (x * x - 2.0 * rho * x * y + y * y) / (1.0 - rho * rho);
}

/// Sylvester's criterion with determinants from Eigen's LU.
inline bool sylvester_pd(const Matrix& c) {
    for (Eigen::Index k = 1; k <= c.rows(); ++k)
        if (!(c.topLeftCorner(k, k).determinant() > 0.0)) return false;
    return true;
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

struct Instance {
    MarketParams params;
    AmbiguitySpec spec;
};

/// Random ellipsoidal two-asset instance with a bounded correlation range.
inline Instance random_two_asset(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Vector sig = make_vector({0.1 + 0.5 * u(rng), 0.1 + 0.5 * u(rng)});
    Vector b_hat(2);
    for (int i = 0; i < 2; ++i) b_hat[i] = (u(rng) < 0.5 ? -1 : 1) * (0.02 + 0.3 * u(rng));
    double a = -0.95 + 1.9 * u(rng), b = -0.95 + 1.9 * u(rng);
    if (a > b) std::swap(a, b);
    const double beta = std::max(std::abs(b_hat[0] / sig[0]), std::abs(b_hat[1] / sig[1]));
    const double delta = 0.6 * beta * u(rng);
    return {MarketParams::make(sig, 1.0, 0.5 + u(rng), 1.0),
            make_ellipsoidal(b_hat, delta, GammaBox::box(RhoVector{a}, RhoVector{b}))};
}

/// Random ellipsoidal three-asset instance whose correlation box has PD
/// corners. Roughly a third of the boxes are centred near the proximity
/// point so that the interior case is reachable.
inline Instance random_three_asset(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (;;) {
        Vector sig(3), b_hat(3);
        for (int i = 0; i < 3; ++i) {
            sig[i] = 0.5 + u(rng);
            b_hat[i] = (u(rng) < 0.5 ? -1 : 1) * (0.05 + 0.55 * u(rng));
        }
        const MarketParams params = MarketParams::make(sig, 1.0, 0.5 + u(rng), 1.0);
        const SharpeProfile prof = sharpe_profile(b_hat, params);
        RhoVector centre = RhoVector::zeros(3);
        if (u(rng) < 0.35) {
            const double q12 = prof.proximity(0, 1), q13 = prof.proximity(0, 2);
            const RhoVector sorted{q12, q13, q12 * q13};
            centre = unpermute_rho(sorted, prof.order);
            for (int k = 0; k < 3; ++k)
                centre[k] = std::clamp(centre[k] + 0.1 * (u(rng) - 0.5), -0.9, 0.9);
        } else {
            for (int k = 0; k < 3; ++k) centre[k] = 1.4 * (u(rng) - 0.5);
        }
        RhoVector lo = RhoVector::zeros(3), hi = RhoVector::zeros(3);
        for (int k = 0; k < 3; ++k) {
            const double w = 0.02 + 0.35 * u(rng);
            lo[k] = std::max(-0.95, centre[k] - w);
            hi[k] = std::min(0.95, centre[k] + w);
        }
        bool ok = true;
        for (int mask = 0; mask < 8 && ok; ++mask) {
            RhoVector c = RhoVector::zeros(3);
            for (int k = 0; k < 3; ++k) c[k] = (mask >> k) & 1 ? hi[k] : lo[k];
            ok = is_positive_definite(c, 3) &&
                 Eigen::SelfAdjointEigenSolver<Matrix>(correlation_matrix(c, 3)).eigenvalues().minCoeff() > 1e-3;
        }
        if (!ok) continue;
        const double delta = 0.5 * std::abs(prof.sorted_beta(0)) * u(rng);
        return {params, make_ellipsoidal(b_hat, delta, GammaBox::box(lo, hi))};
    }
}

}  // namespace testing_support
