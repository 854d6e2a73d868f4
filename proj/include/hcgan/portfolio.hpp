#pragma once

// Portfolio moments, Sharpe ratio and the long-only maximum-Sharpe allocation.

#include <Eigen/Dense>

namespace hcgan::pf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Diagonal loading factor: covariance += loading * trace / N * I.
inline constexpr double kDiagonalLoading = 1e-4;
/// Variance floor inside sharpe_ratio.
inline constexpr double kVarianceFloor = 1e-16;
/// Sharpe ratios closer than this are treated as ties.
inline constexpr double kTieTolerance = 1e-9;

struct MomentEstimate {
    Vector mean_returns;  // per-period returns
    Matrix covariance;
    Index sample_count = 0;
};

struct ReturnRisk {
    double ret = 0.0;
    double variance = 0.0;
};

ReturnRisk portfolio_return_risk(const Vector& weights, const MomentEstimate& moments);

/// (v'r - r_f) / sqrt(max(v'Sv, 1e-16)).
double sharpe_ratio(const Vector& weights, const MomentEstimate& moments, double r_f = 0.0);

/// Row means and sample covariance (1/(T-1)) of an N x T return matrix, plus
/// diagonal loading.
MomentEstimate estimate_moments(const Matrix& returns, double loading = kDiagonalLoading);

/// Euclidean projection onto {v >= 0, sum v = 1}.
Vector project_to_simplex(const Vector& x);

bool on_simplex(const Vector& v, double tolerance = 1e-10);

/// Long-only maximum-Sharpe weights. Falls back to min_variance_weights when no
/// asset has mean return above r_f. Among near-equal optima (within
/// kTieTolerance) the one closest to the uniform vector wins.
Vector max_sharpe_weights(const MomentEstimate& moments, double r_f = 0.0);

/// Long-only minimum-variance weights with the same tie-break.
Vector min_variance_weights(const Matrix& covariance);

/// Max-Sharpe weights estimated from an N x h price block (h >= 3).
Vector markowitz_weights(const Matrix& prices, double r_f = 0.0);

}  // namespace hcgan::pf
