#pragma once

// Per-asset 3-sigma price normalization in three regimes:
//   standard   center = mean of the historical segment
//   eavesdrop  center = mean of the whole window (uses future prices; diagnostic only)
//   hybrid     center = proposed surrogate mean
// In every regime scale = 3 * population std of the historical segment, floored at
// 1e-8 * max(1, |historical mean|).

#include <Eigen/Dense>

#include <span>
#include <string>
#include <string_view>

namespace hcgan::norm {

enum class Regime { standard, eavesdrop, hybrid };

std::string_view regime_name(Regime regime);
Regime parse_regime(std::string_view name);

struct NormStats {
    double center = 0.0;
    double scale = 1.0;
    Regime regime = Regime::standard;
};

inline constexpr double kScaleFloor = 1e-8;

/// max(3 sigma, 1e-8 * max(1, |center|)).
double floored_scale(double three_sigma, double center);

NormStats fit_standard(std::span<const double> historical);

/// Requires `allow_forward_bias`; the first `hist` values are the historical segment.
NormStats fit_eavesdrop(std::span<const double> full, std::size_t hist, bool allow_forward_bias);

/// Hybrid stats: `historical_scale` is the (already floored) standard scale.
NormStats make_hybrid_stats(double historical_scale, double proposed_center, std::string_view asset = {});

Eigen::VectorXd normalize(const Eigen::Ref<const Eigen::VectorXd>& series, const NormStats& stats);
Eigen::VectorXd denormalize(const Eigen::Ref<const Eigen::VectorXd>& series, const NormStats& stats);

}  // namespace hcgan::norm
