#pragma once

// Price frames, train/test splitting and the window index sets used for
// training and inference.
//
// Day indices in this API are 1-based: day 1 is the first column of a frame.
// Column c (0-based) of the underlying matrix holds day c + 1.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hcgan::data {

using Matrix = Eigen::MatrixXd;
using DayIndex = std::int64_t;

/// Adjusted close prices for N assets over D trading days (N x D).
class PriceFrame {
public:
    PriceFrame() = default;
    /// Validates shape, strictly increasing ISO dates, finite positive prices.
    PriceFrame(std::vector<std::string> tickers, std::vector<std::string> dates, Matrix prices);

    const std::vector<std::string>& tickers() const { return tickers_; }
    const std::vector<std::string>& dates() const { return dates_; }
    const Matrix& prices() const { return prices_; }

    Eigen::Index asset_count() const { return prices_.rows(); }
    Eigen::Index day_count() const { return prices_.cols(); }

    /// Columns [first_day, last_day] (1-based, inclusive) as a new frame.
    PriceFrame slice_days(DayIndex first_day, DayIndex last_day) const;

private:
    std::vector<std::string> tickers_;
    std::vector<std::string> dates_;
    Matrix prices_;
};

/// One w = h + f column slice of a frame.
class WindowSample {
public:
    WindowSample(Matrix full, Eigen::Index hist, DayIndex start_day);

    const Matrix& full() const { return full_; }
    auto historical() const { return full_.leftCols(hist_); }
    auto future() const { return full_.rightCols(full_.cols() - hist_); }

    Eigen::Index hist_length() const { return hist_; }
    Eigen::Index fut_length() const { return full_.cols() - hist_; }
    DayIndex start_day() const { return start_day_; }

private:
    Matrix full_;
    Eigen::Index hist_;
    DayIndex start_day_;
};

/// Reads `date,<ticker1>,...,<tickerN>`. With `expected_tickers`, columns are
/// reordered to match and unknown names are rejected.
PriceFrame load_price_csv(const std::filesystem::path& path,
                          const std::optional<std::vector<std::string>>& expected_tickers = std::nullopt);

/// Writes prices with 10 significant digits.
void write_price_csv(const PriceFrame& frame, const std::filesystem::path& path);

/// First frame: dates <= split_date; second: dates > split_date. Both must be non-empty.
std::pair<PriceFrame, PriceFrame> split_train_test(const PriceFrame& frame, const std::string& split_date);

/// {1, ..., D - w + 1}.
std::vector<DayIndex> training_index_set(DayIndex day_count, DayIndex window);

/// {h + 1, h + f + 1, ...}, (K - h) / f entries. Requires (K - h) % f == 0.
std::vector<DayIndex> inference_index_set(DayIndex day_count, DayIndex hist, DayIndex fut);

/// Columns [start, start + h + f - 1] of the frame.
WindowSample extract_window(const PriceFrame& frame, DayIndex start, Eigen::Index hist, Eigen::Index fut);

/// (i, t) -> prices(i, t + 1) / prices(i, t) - 1.
Matrix simple_returns(const Matrix& prices);

/// True for YYYY-MM-DD with plausible month/day ranges.
bool is_iso_date(const std::string& text);

}  // namespace hcgan::data
