#include "hcgan/backtest.hpp"

#include "hcgan/errors.hpp"
#include "hcgan/portfolio.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

namespace hcgan::bt {

namespace {

template <typename Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, jobs)), count);
    if (workers <= 1) {
        for (std::size_t k = 0; k < count; ++k) fn(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t k = next++; k < count; k = next++) fn(k);
            } catch (...) {
                errors[t] = std::current_exception();
                next = count;
            }
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace

Index rebalance_period(std::string_view setting) {
    if (setting == "defensive") return 10;
    if (setting == "balanced") return 15;
    if (setting == "aggressive") return 20;
    throw ValidationError("unknown rebalance setting '" + std::string(setting) +
                          "' (expected defensive|balanced|aggressive)");
}

std::vector<DayIndex> rebalance_days(DayIndex day_count, Index hist, Index eta) {
    if (eta < 1) throw ValidationError("rebalance period must be >= 1, got " + std::to_string(eta));
    if (hist < 1 || day_count <= hist + 1) {
        throw ValidationError("test frame of " + std::to_string(day_count) + " days leaves no holding period after h = " +
                              std::to_string(hist));
    }
    std::vector<DayIndex> days;
    for (DayIndex t = hist + 1; t < day_count; t += eta) days.push_back(t);
    return days;
}

Vector portfolio_value_series(const WeightSchedule& schedule, const Matrix& prices) {
    if (schedule.days.empty() || schedule.days.size() != schedule.weights.size()) {
        throw ValidationError("schedule needs matching, non-empty days and weights");
    }
    const auto k_days = static_cast<DayIndex>(prices.cols());
    for (std::size_t j = 0; j < schedule.days.size(); ++j) {
        const DayIndex d = schedule.days[j];
        if (d < 1 || d > k_days) {
            throw ValidationError("schedule day " + std::to_string(d) + " outside 1.." + std::to_string(k_days));
        }
        if (j > 0 && d <= schedule.days[j - 1]) throw ValidationError("schedule days must be strictly increasing");
        if (schedule.weights[j].size() != prices.rows()) {
            throw ValidationError("schedule weights have " + std::to_string(schedule.weights[j].size()) +
                                  " entries for " + std::to_string(prices.rows()) + " assets");
        }
        if (!pf::on_simplex(schedule.weights[j], 1e-9)) {
            throw ValidationError("schedule weights on day " + std::to_string(d) + " are not on the simplex");
        }
    }
    const DayIndex first = schedule.days.front();
    Vector values(k_days - first + 1);
    values(0) = 1.0;
    std::size_t next = 1;
    Vector w = schedule.weights.front();
    Index base = static_cast<Index>(first - 1);
    double base_value = 1.0;
    for (DayIndex d = first + 1; d <= k_days; ++d) {
        const Index col = static_cast<Index>(d - 1);
        double v = 0.0;
        for (Index i = 0; i < prices.rows(); ++i) v += w(i) * prices(i, col) / prices(i, base);
        v *= base_value;
        values(d - first) = v;
        if (next < schedule.days.size() && schedule.days[next] == d) {
            base = col;
            base_value = v;
            w = schedule.weights[next];
            ++next;
        }
    }
    return values;
}

Metrics annualized_metrics(const Vector& values, double r_f) {
    if (values.size() < 2) throw ValidationError("annualized_metrics: need at least 2 values");
    if (!values.allFinite() || values.minCoeff() <= 0.0) throw NumericError("annualized_metrics: values must be positive");
    const Vector daily = (values.tail(values.size() - 1).array() / values.head(values.size() - 1).array() - 1.0).matrix();
    const double mean = daily.mean();
    const double sd = std::sqrt((daily.array() - mean).square().mean());
    Metrics m;
    m.annual_return = mean * kTradingDays;
    if (sd <= 1e-14 * std::max(1.0, std::abs(mean))) {
        m.degenerate = true;
        m.annual_sharpe = 0.0;
    } else {
        m.annual_sharpe = (mean - r_f / kTradingDays) / sd * std::sqrt(kTradingDays);
    }
    return m;
}

WeightSchedule draw_schedule(const Matrix& path, const Matrix& real, Index hist, Index fut, Index eta, double r_f) {
    if (path.rows() != real.rows() || path.cols() != real.cols()) {
        throw ValidationError("synthetic path is " + std::to_string(path.rows()) + "x" + std::to_string(path.cols()) +
                              " but the test frame is " + std::to_string(real.rows()) + "x" +
                              std::to_string(real.cols()));
    }
    const auto k_days = static_cast<DayIndex>(real.cols());
    const auto starts = data::inference_index_set(k_days, hist, fut);
    const Index span_blocks = eta > fut ? (eta + fut - 1) / fut : 1;
    WeightSchedule schedule;
    for (DayIndex t : rebalance_days(k_days, hist, eta)) {
        const auto it = std::upper_bound(starts.begin(), starts.end(), t);
        const auto last = static_cast<Index>(it - starts.begin()) - 1;
        const Index first = std::max<Index>(0, last - span_blocks + 1);
        Matrix returns(real.rows(), (last - first + 1) * fut);
        for (Index b = first; b <= last; ++b) {
            const Index col = static_cast<Index>(starts[static_cast<std::size_t>(b)] - 1);
            Matrix block(real.rows(), fut + 1);
            block << real.col(col - 1), path.middleCols(col, fut);
            for (Index i = 0; i < block.rows(); ++i) {
                for (Index c = 1; c <= fut; ++c) {
                    if (!(block(i, c) > 0.0)) {
                        throw NumericError("synthetic path has non-positive price " + std::to_string(block(i, c)) +
                                           " for asset " + std::to_string(i) + " on day " +
                                           std::to_string(col + c));
                    }
                }
            }
            returns.middleCols((b - first) * fut, fut) = data::simple_returns(block);
        }
        schedule.days.push_back(t);
        schedule.weights.push_back(pf::max_sharpe_weights(pf::estimate_moments(returns), r_f));
    }
    return schedule;
}

std::vector<WeightSchedule> strategy_from_paths(const std::vector<Matrix>& paths, const data::PriceFrame& test_frame,
                                                Index hist, Index fut, Index eta, double r_f, int jobs) {
    if (paths.empty()) throw ValidationError("strategy_from_paths: no paths");
    std::vector<WeightSchedule> out(paths.size());
    parallel_for(paths.size(), jobs, [&](std::size_t d) {
        out[d] = draw_schedule(paths[d], test_frame.prices(), hist, fut, eta, r_f);
    });
    return out;
}

WeightSchedule mean_strategy(const std::vector<WeightSchedule>& schedules) {
    if (schedules.empty()) throw ValidationError("mean_strategy: no schedules");
    WeightSchedule out;
    out.days = schedules.front().days;
    for (const auto& s : schedules) {
        if (s.days != out.days || s.weights.size() != s.days.size()) {
            throw ValidationError("mean_strategy: schedules have different rebalance days");
        }
    }
    for (std::size_t j = 0; j < out.days.size(); ++j) {
        Vector acc = Vector::Zero(schedules.front().weights[j].size());
        for (const auto& s : schedules) {
            if (s.weights[j].size() != acc.size()) throw ValidationError("mean_strategy: weight sizes differ");
            acc += s.weights[j];
        }
        acc /= static_cast<double>(schedules.size());
        acc = acc.cwiseMax(0.0);
        out.weights.push_back(acc / acc.sum());
    }
    return out;
}

WeightSchedule markowitz_schedule(const Matrix& prices, Index hist, Index eta, double r_f) {
    WeightSchedule schedule;
    for (DayIndex t : rebalance_days(static_cast<DayIndex>(prices.cols()), hist, eta)) {
        schedule.days.push_back(t);
        schedule.weights.push_back(pf::markowitz_weights(prices.middleCols(static_cast<Index>(t - 1 - hist), hist), r_f));
    }
    return schedule;
}

BacktestResult evaluate_schedule(const WeightSchedule& schedule, const data::PriceFrame& test_frame, double r_f,
                                 std::string label) {
    BacktestResult r;
    r.label = std::move(label);
    r.schedule = schedule;
    r.values = portfolio_value_series(schedule, test_frame.prices());
    r.metrics = annualized_metrics(r.values, r_f);
    const auto first = static_cast<std::size_t>(schedule.days.front() - 1);
    r.dates.assign(test_frame.dates().begin() + static_cast<std::ptrdiff_t>(first), test_frame.dates().end());
    return r;
}

BacktestResult run_markowitz(const data::PriceFrame& test_frame, Index hist, Index eta, double r_f) {
    return evaluate_schedule(markowitz_schedule(test_frame.prices(), hist, eta, r_f), test_frame, r_f, "markowitz");
}

BacktestResult run_gan(const gan::ModelBundle& bundle, const data::PriceFrame& test_frame, const GanRunOptions& options,
                       gan::SimulationResult* simulation) {
    gan::SimulationResult sim = gan::simulate_paths(bundle, test_frame, options.n_draws, options.seed,
                                                    {options.jobs, options.allow_forward_bias});
    const Index h = bundle.config.hist;
    const Index f = bundle.config.fut;
    const auto schedules = strategy_from_paths(sim.paths, test_frame, h, f, options.eta, options.r_f, options.jobs);
    BacktestResult result =
        evaluate_schedule(mean_strategy(schedules), test_frame, options.r_f, std::string(gan::model_kind_name(bundle.config.kind)));
    result.draw_scatter.resize(schedules.size());
    parallel_for(schedules.size(), options.jobs, [&](std::size_t d) {
        result.draw_scatter[d] = annualized_metrics(portfolio_value_series(schedules[d], test_frame.prices()), options.r_f);
    });
    if (simulation) *simulation = std::move(sim);
    return result;
}

}  // namespace hcgan::bt
