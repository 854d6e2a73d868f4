#include "hcgan/market_data.hpp"

#include "hcgan/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace hcgan::data {

namespace {

std::string trim(std::string_view text) {
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && is_space(text[begin])) ++begin;
    while (end > begin && is_space(text[end - 1])) --end;
    return std::string(text.substr(begin, end - begin));
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    std::istringstream stream(line);
    while (std::getline(stream, current, ',')) fields.push_back(trim(current));
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::optional<double> parse_decimal(const std::string& text) {
    if (text.empty()) return std::nullopt;
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    return value;
}

}  // namespace

bool is_iso_date(const std::string& text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return false;
    for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9}) {
        if (text[i] < '0' || text[i] > '9') return false;
    }
    const int month = std::stoi(text.substr(5, 2));
    const int day = std::stoi(text.substr(8, 2));
    return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

PriceFrame::PriceFrame(std::vector<std::string> tickers, std::vector<std::string> dates, Matrix prices)
    : tickers_(std::move(tickers)), dates_(std::move(dates)), prices_(std::move(prices)) {
    if (static_cast<Eigen::Index>(tickers_.size()) != prices_.rows()) {
        throw ValidationError("price frame: " + std::to_string(tickers_.size()) + " tickers but " +
                              std::to_string(prices_.rows()) + " price rows");
    }
    if (static_cast<Eigen::Index>(dates_.size()) != prices_.cols()) {
        throw ValidationError("price frame: " + std::to_string(dates_.size()) + " dates but " +
                              std::to_string(prices_.cols()) + " price columns");
    }
    for (std::size_t i = 0; i < dates_.size(); ++i) {
        if (!is_iso_date(dates_[i])) throw ValidationError("price frame: date '" + dates_[i] + "' is not YYYY-MM-DD");
        if (i > 0 && !(dates_[i - 1] < dates_[i])) {
            throw ValidationError("price frame: dates not strictly increasing at " + dates_[i - 1] + " -> " + dates_[i]);
        }
    }
    for (Eigen::Index t = 0; t < prices_.cols(); ++t) {
        for (Eigen::Index i = 0; i < prices_.rows(); ++i) {
            const double p = prices_(i, t);
            if (!std::isfinite(p) || p <= 0.0) {
                throw ValidationError("price frame: non-positive or non-finite price for " + tickers_[i] + " on " +
                                      dates_[t]);
            }
        }
    }
}

PriceFrame PriceFrame::slice_days(DayIndex first_day, DayIndex last_day) const {
    if (first_day < 1 || last_day > day_count() || first_day > last_day) {
        throw ValidationError("slice_days: [" + std::to_string(first_day) + ", " + std::to_string(last_day) +
                              "] outside 1.." + std::to_string(day_count()));
    }
    const auto begin = static_cast<std::ptrdiff_t>(first_day - 1);
    const auto count = static_cast<Eigen::Index>(last_day - first_day + 1);
    std::vector<std::string> dates(dates_.begin() + begin, dates_.begin() + begin + count);
    return PriceFrame(tickers_, std::move(dates), prices_.middleCols(begin, count));
}

WindowSample::WindowSample(Matrix full, Eigen::Index hist, DayIndex start_day)
    : full_(std::move(full)), hist_(hist), start_day_(start_day) {
    if (hist_ < 1 || hist_ >= full_.cols()) {
        throw ValidationError("window: historical length " + std::to_string(hist_) + " incompatible with width " +
                              std::to_string(full_.cols()));
    }
}

PriceFrame load_price_csv(const std::filesystem::path& path,
                          const std::optional<std::vector<std::string>>& expected_tickers) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open price file '" + path.string() + "'");

    std::string line;
    if (!std::getline(in, line)) throw ValidationError("price file '" + path.string() + "' is empty");
    const auto header = split_fields(line);
    if (header.size() < 2 || header.front() != "date") {
        throw ValidationError("price file header must be 'date,<ticker1>,...'; got '" + trim(line) + "'");
    }
    std::vector<std::string> file_tickers(header.begin() + 1, header.end());
    {
        std::unordered_map<std::string, int> seen;
        for (const auto& t : file_tickers) {
            if (t.empty()) throw ValidationError("price file header has an empty ticker name");
            if (seen[t]++) throw ValidationError("price file header repeats ticker '" + t + "'");
        }
    }

    std::vector<std::size_t> columns;  // header column (0-based among tickers) for each output row
    std::vector<std::string> tickers;
    if (expected_tickers) {
        for (const auto& want : *expected_tickers) {
            auto it = std::find(file_tickers.begin(), file_tickers.end(), want);
            if (it == file_tickers.end()) {
                std::string available;
                for (const auto& t : file_tickers) available += (available.empty() ? "" : ",") + t;
                throw ValidationError("unknown ticker '" + want + "'; available: " + available);
            }
            columns.push_back(static_cast<std::size_t>(it - file_tickers.begin()));
        }
        tickers = *expected_tickers;
    } else {
        for (std::size_t c = 0; c < file_tickers.size(); ++c) columns.push_back(c);
        tickers = file_tickers;
    }
    if (tickers.size() < 2) throw ValidationError("price frame needs at least 2 tickers");

    std::vector<std::string> dates;
    std::vector<std::vector<double>> rows;
    std::size_t data_row = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ++data_row;
        const auto fields = split_fields(line);
        const std::string where = "row " + std::to_string(data_row) + " (line " + std::to_string(line_no) + ")";
        if (fields.size() != header.size()) {
            throw ValidationError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                                  std::to_string(fields.size()));
        }
        if (!is_iso_date(fields[0])) throw ValidationError(where + ": date '" + fields[0] + "' is not YYYY-MM-DD");
        if (!dates.empty() && !(dates.back() < fields[0])) {
            throw ValidationError(where + ": date " + fields[0] + " does not follow " + dates.back());
        }
        std::vector<double> values(file_tickers.size());
        for (std::size_t c = 0; c < file_tickers.size(); ++c) {
            const std::string& cell = fields[c + 1];
            auto value = parse_decimal(cell);
            if (!value || !std::isfinite(*value)) {
                throw ValidationError(where + ", ticker " + file_tickers[c] + ": missing or non-numeric value '" +
                                      cell + "'");
            }
            if (*value <= 0.0) {
                throw ValidationError(where + ", ticker " + file_tickers[c] + ": price must be positive, got " + cell);
            }
            values[c] = *value;
        }
        dates.push_back(fields[0]);
        rows.push_back(std::move(values));
    }
    if (dates.empty()) throw ValidationError("price file '" + path.string() + "' has no data rows");

    Matrix prices(static_cast<Eigen::Index>(tickers.size()), static_cast<Eigen::Index>(dates.size()));
    for (std::size_t t = 0; t < rows.size(); ++t) {
        for (std::size_t i = 0; i < columns.size(); ++i) {
            prices(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = rows[t][columns[i]];
        }
    }
    return PriceFrame(std::move(tickers), std::move(dates), std::move(prices));
}

void write_price_csv(const PriceFrame& frame, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path.string() + "'");
    out << "date";
    for (const auto& t : frame.tickers()) out << ',' << t;
    out << '\n';
    char buffer[64];
    for (Eigen::Index t = 0; t < frame.day_count(); ++t) {
        out << frame.dates()[static_cast<std::size_t>(t)];
        for (Eigen::Index i = 0; i < frame.asset_count(); ++i) {
            std::snprintf(buffer, sizeof buffer, "%.10g", frame.prices()(i, t));
            out << ',' << buffer;
        }
        out << '\n';
    }
}

std::pair<PriceFrame, PriceFrame> split_train_test(const PriceFrame& frame, const std::string& split_date) {
    const auto& dates = frame.dates();
    if (dates.empty() || split_date < dates.front() || split_date > dates.back()) {
        throw ValidationError("split date " + split_date + " outside frame range " +
                              (dates.empty() ? std::string("(empty)") : dates.front() + ".." + dates.back()));
    }
    const auto train_days = static_cast<DayIndex>(std::upper_bound(dates.begin(), dates.end(), split_date) - dates.begin());
    if (train_days == frame.day_count()) {
        throw ValidationError("split date " + split_date + " leaves an empty test set");
    }
    return {frame.slice_days(1, train_days), frame.slice_days(train_days + 1, frame.day_count())};
}

std::vector<DayIndex> training_index_set(DayIndex day_count, DayIndex window) {
    if (window < 1 || day_count < window) {
        throw ValidationError("training index set: day count " + std::to_string(day_count) +
                              " shorter than window " + std::to_string(window));
    }
    std::vector<DayIndex> indices(static_cast<std::size_t>(day_count - window + 1));
    for (std::size_t k = 0; k < indices.size(); ++k) indices[k] = static_cast<DayIndex>(k) + 1;
    return indices;
}

std::vector<DayIndex> inference_index_set(DayIndex day_count, DayIndex hist, DayIndex fut) {
    if (hist < 1 || fut < 1) throw ValidationError("inference index set: h and f must be positive");
    if (day_count < hist + fut) {
        throw ValidationError("inference index set: " + std::to_string(day_count) + " days cannot hold h + f = " +
                              std::to_string(hist + fut));
    }
    if ((day_count - hist) % fut != 0) {
        const DayIndex usable = hist + ((day_count - hist) / fut) * fut;
        throw ValidationError("inference index set: K - h = " + std::to_string(day_count - hist) +
                              " is not divisible by f = " + std::to_string(fut) + "; truncate the test frame to " +
                              std::to_string(usable) + " days");
    }
    std::vector<DayIndex> indices;
    for (DayIndex i = hist + 1; i + fut - 1 <= day_count; i += fut) indices.push_back(i);
    return indices;
}

WindowSample extract_window(const PriceFrame& frame, DayIndex start, Eigen::Index hist, Eigen::Index fut) {
    const DayIndex last = start + hist + fut - 1;
    if (start < 1 || last > frame.day_count()) {
        throw ValidationError("window starting at day " + std::to_string(start) + " needs day " +
                              std::to_string(last) + " but frame has " + std::to_string(frame.day_count()));
    }
    return WindowSample(frame.prices().middleCols(static_cast<Eigen::Index>(start - 1), hist + fut), hist, start);
}

Matrix simple_returns(const Matrix& prices) {
    if (prices.cols() < 2) throw ValidationError("simple_returns: need at least 2 prices per asset");
    if (!(prices.array() > 0.0).all()) throw ValidationError("simple_returns: prices must be positive");
    const Eigen::Index steps = prices.cols() - 1;
    return (prices.rightCols(steps).array() / prices.leftCols(steps).array() - 1.0).matrix();
}

}  // namespace hcgan::data
