#pragma once

// Periodic-rebalancing backtests over a test frame: per-draw GAN schedules,
// the mean strategy, the Markowitz rolling baseline, value series and
// annualized metrics. Day indices are 1-based columns of the test frame.

#include "hcgan/market_data.hpp"
#include "hcgan/scenario_gan.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hcgan::bt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;
using data::DayIndex;

inline constexpr double kTradingDays = 252.0;

/// Named rebalance periods: defensive 10, balanced 15, aggressive 20 days.
Index rebalance_period(std::string_view setting);

struct WeightSchedule {
    std::vector<DayIndex> days;
    std::vector<Vector> weights;

    bool operator==(const WeightSchedule&) const = default;
};

/// h+1, h+1+eta, ... while the day is before `day_count`.
std::vector<DayIndex> rebalance_days(DayIndex day_count, Index hist, Index eta);

/// Value on each day from the first rebalance day through the last column of
/// `prices`, starting at 1. Holdings are fixed share counts between rebalances.
Vector portfolio_value_series(const WeightSchedule& schedule, const Matrix& prices);

struct Metrics {
    double annual_return = 0.0;
    double annual_sharpe = 0.0;
    bool degenerate = false;  // zero volatility; Sharpe reported as 0
};

Metrics annualized_metrics(const Vector& values, double r_f = 0.0);

/// Max-Sharpe schedule for one synthetic path. At rebalance day t the returns
/// come from the generated block starting at the largest inference index
/// s <= t, anchored on the real close of day s-1; when eta > f the
/// ceil(eta/f) blocks ending with that one are concatenated.
WeightSchedule draw_schedule(const Matrix& path, const Matrix& real, Index hist, Index fut, Index eta, double r_f);

std::vector<WeightSchedule> strategy_from_paths(const std::vector<Matrix>& paths, const data::PriceFrame& test_frame,
                                                Index hist, Index fut, Index eta, double r_f, int jobs = 1);

/// Per-date mean of the weight vectors.
WeightSchedule mean_strategy(const std::vector<WeightSchedule>& schedules);

/// Max-Sharpe weights from the trailing h prices A[:, t-h .. t-1] at each rebalance day t.
WeightSchedule markowitz_schedule(const Matrix& prices, Index hist, Index eta, double r_f);

struct BacktestResult {
    std::string label;
    std::vector<std::string> dates;  // one per value
    Vector values;
    Metrics metrics;
    WeightSchedule schedule;
    std::vector<Metrics> draw_scatter;  // GAN runs: one point per draw on real prices
};

BacktestResult evaluate_schedule(const WeightSchedule& schedule, const data::PriceFrame& test_frame, double r_f,
                                 std::string label = {});

BacktestResult run_markowitz(const data::PriceFrame& test_frame, Index hist, Index eta, double r_f);

struct GanRunOptions {
    Index eta = 20;
    std::int64_t n_draws = 1000;
    std::uint64_t seed = 0;
    double r_f = 0.0;
    int jobs = 1;
    bool allow_forward_bias = false;
};

/// Simulates draws, builds per-draw schedules, scores each on real prices and
/// evaluates the mean strategy. `simulation` receives the paths when non-null.
BacktestResult run_gan(const gan::ModelBundle& bundle, const data::PriceFrame& test_frame, const GanRunOptions& options,
                       gan::SimulationResult* simulation = nullptr);

}  // namespace hcgan::bt
