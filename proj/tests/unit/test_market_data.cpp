#include "hcgan/errors.hpp"
#include "hcgan/market_data.hpp"
#include "support/synthetic.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace hcgan;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& body) {
    const fs::path p = fs::temp_directory_path() / ("hcgan_md_" + name + ".csv");
    std::ofstream(p) << body;
    return p;
}

}  // namespace

TEST(MarketData, LoadsAndReordersColumns) {
    const auto p = write_temp("reorder", "date,AAA,BBB,CCC\n2020-01-02,1,2,3\n2020-01-03,1.5,2.5,3.5\n");
    const auto frame = data::load_price_csv(p, std::vector<std::string>{"CCC", "AAA"});
    ASSERT_EQ(frame.asset_count(), 2);
    EXPECT_EQ(frame.tickers()[0], "CCC");
    EXPECT_DOUBLE_EQ(frame.prices()(0, 1), 3.5);
    EXPECT_DOUBLE_EQ(frame.prices()(1, 0), 1.0);
}

TEST(MarketData, RejectsBadInput) {
    EXPECT_THROW(data::load_price_csv(write_temp("neg", "date,A,B\n2020-01-02,1,-2\n")), ValidationError);
    EXPECT_THROW(data::load_price_csv(write_temp("order", "date,A,B\n2020-01-03,1,2\n2020-01-02,1,2\n")),
                 ValidationError);
    EXPECT_THROW(data::load_price_csv(write_temp("date", "date,A,B\n2020-13-02,1,2\n")), ValidationError);
    EXPECT_THROW(data::load_price_csv(write_temp("gap", "date,A,B\n2020-01-02,1,\n")), ValidationError);
    EXPECT_THROW(data::load_price_csv(write_temp("dup", "date,A,A\n2020-01-02,1,2\n")), ValidationError);
    EXPECT_THROW(data::load_price_csv(write_temp("unknown", "date,A,B\n2020-01-02,1,2\n"),
                                      std::vector<std::string>{"A", "Z"}),
                 ValidationError);
    EXPECT_THROW(data::load_price_csv(fs::temp_directory_path() / "hcgan_missing_file.csv"), ValidationError);
}

TEST(MarketData, WriteReadRoundTrip) {
    const auto frame = synthetic::random_walk_frame(3, 50, 7);
    const fs::path p = fs::temp_directory_path() / "hcgan_md_roundtrip.csv";
    data::write_price_csv(frame, p);
    const auto back = data::load_price_csv(p);
    EXPECT_EQ(back.tickers(), frame.tickers());
    EXPECT_EQ(back.dates(), frame.dates());
    EXPECT_LT((back.prices() - frame.prices()).cwiseAbs().maxCoeff() / frame.prices().maxCoeff(), 1e-9);
}

TEST(MarketData, SplitIsDisjointAndComplete) {
    const auto frame = synthetic::random_walk_frame(2, 30, 1);
    const auto [train, test] = data::split_train_test(frame, frame.dates()[19]);
    EXPECT_EQ(train.day_count(), 20);
    EXPECT_EQ(test.day_count(), 10);
    EXPECT_EQ(test.dates().front(), frame.dates()[20]);
    EXPECT_THROW(data::split_train_test(frame, frame.dates().back()), ValidationError);
    EXPECT_THROW(data::split_train_test(frame, "1999-01-01"), ValidationError);
}

TEST(MarketData, IndexSetSizes) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto h = std::uniform_int_distribution<int>(1, 30)(rng);
        const auto f = std::uniform_int_distribution<int>(1, 20)(rng);
        const auto d = std::uniform_int_distribution<int>(h + f, 400)(rng);
        const auto s1 = data::training_index_set(d, h + f);
        ASSERT_EQ(static_cast<int>(s1.size()), d - (h + f) + 1);
        EXPECT_EQ(s1.front(), 1);
        EXPECT_EQ(s1.back() + h + f - 1, d);

        const auto blocks = std::uniform_int_distribution<int>(1, 10)(rng);
        const auto k = h + blocks * f;
        const auto s2 = data::inference_index_set(k, h, f);
        ASSERT_EQ(static_cast<int>(s2.size()), (k - h) / f);
        for (std::size_t j = 0; j < s2.size(); ++j) EXPECT_EQ(s2[j], h + 1 + static_cast<int>(j) * f);
    }
    EXPECT_THROW(data::inference_index_set(45, 40, 20), ValidationError);
}

TEST(MarketData, WindowAndReturns) {
    const auto frame = synthetic::make_frame(2, 10, [](Eigen::Index i, Eigen::Index t) {
        return static_cast<double>(10 * (i + 1) + t);
    });
    const auto w = data::extract_window(frame, 3, 4, 2);
    EXPECT_EQ(w.full().cols(), 6);
    EXPECT_DOUBLE_EQ(w.historical()(0, 0), 12.0);
    EXPECT_DOUBLE_EQ(w.future()(1, 1), 27.0);
    EXPECT_THROW(data::extract_window(frame, 6, 4, 2), ValidationError);

    const auto r = data::simple_returns(frame.prices());
    EXPECT_EQ(r.cols(), 9);
    EXPECT_DOUBLE_EQ(r(0, 0), 11.0 / 10.0 - 1.0);
}
