#pragma once

// SVG rendering of backtest exports: value series, return/Sharpe scatter and
// stacked weights over time.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace hcgan::report {

struct Series {
    std::string label;
    std::vector<double> values;
};

std::string value_series_svg(const std::vector<std::string>& dates, const std::vector<Series>& series);

/// One circle per (annual_return, annual_sharpe) point.
std::string scatter_svg(const std::vector<std::pair<double, double>>& points);

/// weights[d][i]: weight of ticker i on date d; each column of rects spans the
/// full plot height when the weights sum to one.
std::string stacked_weights_svg(const std::vector<std::string>& dates, const std::vector<std::string>& tickers,
                                const std::vector<std::vector<double>>& weights);

/// Renders every recognized export in `run_dir` and returns the written files.
/// Throws ValidationError when the directory holds nothing to render.
std::vector<std::filesystem::path> render_run(const std::filesystem::path& run_dir);

}  // namespace hcgan::report
