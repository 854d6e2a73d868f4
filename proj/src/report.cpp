#include "hcgan/report.hpp"

#include "hcgan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace hcgan::report {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 400.0;
constexpr double kMargin = 50.0;
constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.4f", v);
    return buffer;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string header(const std::string& title) {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
        << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n"
        << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
        << "</text>\n";
    return out.str();
}

struct Range {
    double lo = 0.0;
    double hi = 1.0;
    double map(double v, double out_lo, double out_hi) const {
        const double span = hi > lo ? hi - lo : 1.0;
        return out_lo + (v - lo) / span * (out_hi - out_lo);
    }
};

Range range_of(const std::vector<double>& values) {
    Range r{values.empty() ? 0.0 : values.front(), values.empty() ? 1.0 : values.front()};
    for (double v : values) {
        r.lo = std::min(r.lo, v);
        r.hi = std::max(r.hi, v);
    }
    if (r.hi - r.lo < 1e-12) {
        r.lo -= 0.5;
        r.hi += 0.5;
    }
    return r;
}

std::string axes(const Range& x, const Range& y, const std::string& x_label, const std::string& y_label) {
    std::ostringstream out;
    const double left = kMargin;
    const double right = kWidth - kMargin;
    const double top = kMargin;
    const double bottom = kHeight - kMargin;
    out << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right << "\" y2=\"" << bottom
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << bottom
        << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << left << "\" y=\"" << bottom + 15 << "\" font-size=\"10\">" << num(x.lo) << "</text>\n"
        << "<text x=\"" << right << "\" y=\"" << bottom + 15 << "\" font-size=\"10\" text-anchor=\"end\">"
        << num(x.hi) << "</text>\n"
        << "<text x=\"" << left - 4 << "\" y=\"" << bottom << "\" font-size=\"10\" text-anchor=\"end\">" << num(y.lo)
        << "</text>\n"
        << "<text x=\"" << left - 4 << "\" y=\"" << top + 10 << "\" font-size=\"10\" text-anchor=\"end\">"
        << num(y.hi) << "</text>\n"
        << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 10 << "\" font-size=\"12\" text-anchor=\"middle\">"
        << escape(x_label) << "</text>\n"
        << "<text x=\"14\" y=\"" << kHeight / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << kHeight / 2
        << ")\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
    return out.str();
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty() && item.back() == '\r') item.pop_back();
        out.push_back(item);
    }
    return out;
}

double to_number(const std::string& s, const std::filesystem::path& file) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw ValidationError(file.string() + ": non-numeric value '" + s + "'");
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path.string() + "'");
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) rows.push_back(split_csv(line));
    }
    if (rows.empty()) throw ValidationError("'" + path.string() + "' is empty");
    return rows;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot write '" + path.string() + "'");
    out << text;
}

}  // namespace

std::string value_series_svg(const std::vector<std::string>& dates, const std::vector<Series>& series) {
    std::vector<double> all;
    for (const auto& s : series) all.insert(all.end(), s.values.begin(), s.values.end());
    const Range y = range_of(all);
    const Range x{0.0, static_cast<double>(std::max<std::size_t>(dates.size(), 2) - 1)};
    std::ostringstream out;
    out << header("Portfolio value")
        << axes(x, y, dates.empty() ? "day" : dates.front() + " .. " + dates.back(), "value");
    for (std::size_t k = 0; k < series.size(); ++k) {
        out << "<polyline class=\"series\" data-label=\"" << escape(series[k].label) << "\" fill=\"none\" stroke=\""
            << kPalette[k % 10] << "\" points=\"";
        for (std::size_t t = 0; t < series[k].values.size(); ++t) {
            out << num(x.map(static_cast<double>(t), kMargin, kWidth - kMargin)) << ','
                << num(y.map(series[k].values[t], kHeight - kMargin, kMargin)) << ' ';
        }
        out << "\"/>\n"
            << "<text x=\"" << kWidth - kMargin + 2 << "\" y=\"" << kMargin + 14.0 * static_cast<double>(k)
            << "\" font-size=\"10\" fill=\"" << kPalette[k % 10] << "\">" << escape(series[k].label) << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

std::string scatter_svg(const std::vector<std::pair<double, double>>& points) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& [r, s] : points) {
        xs.push_back(r);
        ys.push_back(s);
    }
    const Range x = range_of(xs);
    const Range y = range_of(ys);
    std::ostringstream out;
    out << header("Annual return vs Sharpe ratio per draw") << axes(x, y, "annual return", "annual Sharpe ratio");
    for (const auto& [r, s] : points) {
        out << "<circle class=\"draw\" cx=\"" << num(x.map(r, kMargin, kWidth - kMargin)) << "\" cy=\""
            << num(y.map(s, kHeight - kMargin, kMargin)) << "\" r=\"2.5\" fill=\"#1f77b4\" fill-opacity=\"0.6\"/>\n";
    }
    out << "</svg>\n";
    return out.str();
}

std::string stacked_weights_svg(const std::vector<std::string>& dates, const std::vector<std::string>& tickers,
                                const std::vector<std::vector<double>>& weights) {
    const double plot_h = kHeight - 2 * kMargin;
    const double plot_w = kWidth - 2 * kMargin - 60.0;
    const double bar_w = dates.empty() ? plot_w : plot_w / static_cast<double>(dates.size());
    std::ostringstream out;
    out << header("Weights over time");
    for (std::size_t d = 0; d < dates.size(); ++d) {
        double y = kHeight - kMargin;
        for (std::size_t i = 0; i < tickers.size(); ++i) {
            const double h = weights[d][i] * plot_h;
            y -= h;
            out << "<rect class=\"weight\" data-date=\"" << escape(dates[d]) << "\" data-ticker=\""
                << escape(tickers[i]) << "\" x=\"" << num(kMargin + bar_w * static_cast<double>(d)) << "\" y=\""
                << num(y) << "\" width=\"" << num(bar_w) << "\" height=\"" << num(h) << "\" fill=\""
                << kPalette[i % 10] << "\"/>\n";
        }
    }
    for (std::size_t i = 0; i < tickers.size(); ++i) {
        out << "<text x=\"" << kWidth - kMargin - 50.0 << "\" y=\"" << kMargin + 14.0 * static_cast<double>(i)
            << "\" font-size=\"10\" fill=\"" << kPalette[i % 10] << "\">" << escape(tickers[i]) << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

std::vector<std::filesystem::path> render_run(const std::filesystem::path& run_dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(run_dir)) throw ValidationError("run directory '" + run_dir.string() + "' does not exist");
    std::vector<fs::path> written;

    const fs::path values_csv = run_dir / "value_series.csv";
    if (fs::exists(values_csv)) {
        const auto rows = read_csv(values_csv);
        std::vector<Series> series;
        for (std::size_t c = 1; c < rows.front().size(); ++c) series.push_back({rows.front()[c], {}});
        std::vector<std::string> dates;
        for (std::size_t r = 1; r < rows.size(); ++r) {
            if (rows[r].size() != rows.front().size()) throw ValidationError(values_csv.string() + ": ragged row");
            dates.push_back(rows[r][0]);
            for (std::size_t c = 1; c < rows[r].size(); ++c) series[c - 1].values.push_back(to_number(rows[r][c], values_csv));
        }
        write_text(run_dir / "value_series.svg", value_series_svg(dates, series));
        written.push_back(run_dir / "value_series.svg");
    }

    const fs::path scatter_csv = run_dir / "scatter.csv";
    if (fs::exists(scatter_csv)) {
        const auto rows = read_csv(scatter_csv);
        std::vector<std::pair<double, double>> points;
        for (std::size_t r = 1; r < rows.size(); ++r) {
            if (rows[r].size() != 3) throw ValidationError(scatter_csv.string() + ": expected draw,annual_return,annual_sharpe");
            points.emplace_back(to_number(rows[r][1], scatter_csv), to_number(rows[r][2], scatter_csv));
        }
        write_text(run_dir / "scatter.svg", scatter_svg(points));
        written.push_back(run_dir / "scatter.svg");
    }

    std::vector<fs::path> weight_files;
    for (const auto& entry : fs::directory_iterator(run_dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("weights_", 0) == 0 && entry.path().extension() == ".csv") weight_files.push_back(entry.path());
    }
    std::sort(weight_files.begin(), weight_files.end());
    for (const auto& file : weight_files) {
        const auto rows = read_csv(file);
        std::vector<std::string> dates;
        std::vector<std::string> tickers;
        std::map<std::string, std::map<std::string, double>> table;
        for (std::size_t r = 1; r < rows.size(); ++r) {
            if (rows[r].size() != 3) throw ValidationError(file.string() + ": expected date,ticker,weight");
            const auto& date = rows[r][0];
            const auto& ticker = rows[r][1];
            if (dates.empty() || dates.back() != date) dates.push_back(date);
            if (std::find(tickers.begin(), tickers.end(), ticker) == tickers.end()) tickers.push_back(ticker);
            table[date][ticker] = to_number(rows[r][2], file);
        }
        std::vector<std::vector<double>> weights;
        for (const auto& d : dates) {
            std::vector<double> row;
            for (const auto& t : tickers) row.push_back(table[d].count(t) ? table[d][t] : 0.0);
            weights.push_back(row);
        }
        fs::path svg = file;
        svg.replace_extension(".svg");
        write_text(svg, stacked_weights_svg(dates, tickers, weights));
        written.push_back(svg);
    }
    if (written.empty()) {
        throw ValidationError("run directory '" + run_dir.string() +
                              "' has no value_series.csv, scatter.csv or weights_*.csv to render");
    }
    return written;
}

}  // namespace hcgan::report
