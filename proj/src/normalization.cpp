#include "hcgan/normalization.hpp"

#include "hcgan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hcgan::norm {

namespace {

double mean_of(std::span<const double> values) {
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double population_std(std::span<const double> values, double mean) {
    double sum_sq = 0.0;
    for (double v : values) sum_sq += (v - mean) * (v - mean);
    return std::sqrt(sum_sq / static_cast<double>(values.size()));
}

void check_stats(const NormStats& stats) {
    if (!std::isfinite(stats.center) || !std::isfinite(stats.scale) || !(stats.scale > 0.0)) {
        throw ValidationError("invalid normalization stats: center " + std::to_string(stats.center) + ", scale " +
                              std::to_string(stats.scale));
    }
}

}  // namespace

std::string_view regime_name(Regime regime) {
    switch (regime) {
        case Regime::standard: return "standard";
        case Regime::eavesdrop: return "eavesdrop";
        case Regime::hybrid: return "hybrid";
    }
    return "unknown";
}

Regime parse_regime(std::string_view name) {
    if (name == "standard") return Regime::standard;
    if (name == "eavesdrop") return Regime::eavesdrop;
    if (name == "hybrid") return Regime::hybrid;
    throw ValidationError("unknown normalization regime '" + std::string(name) + "' (standard|eavesdrop|hybrid)");
}

double floored_scale(double three_sigma, double center) {
    return std::max(three_sigma, kScaleFloor * std::max(1.0, std::abs(center)));
}

NormStats fit_standard(std::span<const double> historical) {
    if (historical.size() < 2) throw ValidationError("fit_standard: need at least 2 historical prices");
    const double mu = mean_of(historical);
    return {mu, floored_scale(3.0 * population_std(historical, mu), mu), Regime::standard};
}

NormStats fit_eavesdrop(std::span<const double> full, std::size_t hist, bool allow_forward_bias) {
    if (!allow_forward_bias) {
        throw ValidationError("eavesdrop normalization reads future prices; pass --allow-forward-bias to run it");
    }
    if (full.size() < 2 || hist < 2 || hist > full.size()) {
        throw ValidationError("fit_eavesdrop: need w >= 2 and 2 <= h <= w");
    }
    const NormStats historical = fit_standard(full.first(hist));
    return {mean_of(full), historical.scale, Regime::eavesdrop};
}

NormStats make_hybrid_stats(double historical_scale, double proposed_center, std::string_view asset) {
    if (!std::isfinite(proposed_center)) {
        throw NumericError("proposer produced a non-finite mean" +
                           (asset.empty() ? std::string() : " for asset " + std::string(asset)));
    }
    if (!std::isfinite(historical_scale) || !(historical_scale > 0.0)) {
        throw ValidationError("make_hybrid_stats: historical scale must be positive");
    }
    return {proposed_center, historical_scale, Regime::hybrid};
}

Eigen::VectorXd normalize(const Eigen::Ref<const Eigen::VectorXd>& series, const NormStats& stats) {
    check_stats(stats);
    return ((series.array() - stats.center) / stats.scale).matrix();
}

Eigen::VectorXd denormalize(const Eigen::Ref<const Eigen::VectorXd>& series, const NormStats& stats) {
    check_stats(stats);
    return (series.array() * stats.scale + stats.center).matrix();
}

}  // namespace hcgan::norm
