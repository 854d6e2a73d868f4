#include "hcgan/errors.hpp"
#include "hcgan/report.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace hcgan;

namespace {

std::size_t count(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
    return n;
}

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("hcgan_report_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST(Report, ValueSeriesHasOnePolylinePerSeries) {
    const auto svg = report::value_series_svg({"2020-01-01", "2020-01-02", "2020-01-03"},
                                              {{"gan", {1.0, 1.1, 1.05}}, {"markowitz", {1.0, 0.9, 0.95}}});
    EXPECT_EQ(count(svg, "<polyline class=\"series\""), 2u);
    EXPECT_NE(svg.find("data-label=\"markowitz\""), std::string::npos);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
}

TEST(Report, ScatterHasOneCirclePerDraw) {
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 37; ++i) pts.emplace_back(0.01 * i, -1.0 + 0.05 * i);
    EXPECT_EQ(count(report::scatter_svg(pts), "<circle class=\"draw\""), 37u);
    EXPECT_EQ(count(report::scatter_svg({{0.1, 0.1}}), "<circle class=\"draw\""), 1u);
}

TEST(Report, StackedWeightsHasOneRectPerCell) {
    const auto svg = report::stacked_weights_svg({"d1", "d2"}, {"A", "B", "C"}, {{0.2, 0.3, 0.5}, {1.0, 0.0, 0.0}});
    EXPECT_EQ(count(svg, "<rect class=\"weight\""), 6u);
    EXPECT_NE(svg.find("data-ticker=\"C\""), std::string::npos);
}

TEST(Report, RenderRunWritesEveryExport) {
    const auto dir = fresh_dir("full");
    std::ofstream(dir / "value_series.csv") << "date,markowitz\n2020-01-01,1\n2020-01-02,1.02\n";
    std::ofstream(dir / "scatter.csv") << "draw,annual_return,annual_sharpe\n1,0.1,0.5\n2,0.2,0.7\n";
    std::ofstream(dir / "weights_markowitz.csv") << "date,ticker,weight\n2020-01-01,A,0.4\n2020-01-01,B,0.6\n";
    const auto written = report::render_run(dir);
    EXPECT_EQ(written.size(), 3u);
    for (const auto& p : written) EXPECT_TRUE(std::filesystem::exists(p)) << p;
    EXPECT_TRUE(std::filesystem::exists(dir / "weights_markowitz.svg"));
}

TEST(Report, RenderRunErrors) {
    EXPECT_THROW(report::render_run(std::filesystem::temp_directory_path() / "hcgan_report_missing_dir"),
                 ValidationError);
    EXPECT_THROW(report::render_run(fresh_dir("empty")), ValidationError);
    const auto dir = fresh_dir("bad");
    std::ofstream(dir / "scatter.csv") << "draw,annual_return,annual_sharpe\n1,abc,0.5\n";
    EXPECT_THROW(report::render_run(dir), ValidationError);
}
