#include "hcgan/archive.hpp"
#include "hcgan/errors.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

using namespace hcgan;

namespace {

gan::TrainConfig small_config(gan::ModelKind kind) {
    gan::TrainConfig c;
    c.kind = kind;
    c.regime = gan::default_regime(kind);
    c.hist = 8;
    c.fut = 4;
    c.latent = 6;
    c.epochs = 3;
    c.seed = 99;
    c.lambda2 = 0.1 + 1.0 / 3.0;
    c.adam.lr = 1.0 / 7.0;
    return c;
}

gan::ModelBundle sample_bundle(gan::ModelKind kind) {
    auto b = gan::init_bundle(small_config(kind), {"AAA", "BBB"});
    b.trained = true;
    b.log.push_back({1, -0.25, 0.5, 0.125, std::nullopt});
    b.log.push_back({2, -0.3, 0.45, 0.2, 0.01});
    b.proposer_log.push_back({1, 3.5, 4.25});
    b.counters = {10, 10, 10};
    return b;
}

std::string bytes_of(const gan::ModelBundle& b) {
    std::ostringstream out(std::ios::binary);
    archive::write_bundle(out, b);
    return out.str();
}

}  // namespace

TEST(Archive, ConfigTextRoundTripsExactly) {
    auto c = small_config(gan::ModelKind::hybrid_acgan);
    c.proposer.adam.lr = 0.1 + 0.2;
    c.hybrid_output_scale = 1.0;
    c.copy_mean_proposer = true;
    EXPECT_EQ(archive::config_from_text(archive::config_to_text(c)), c);
    EXPECT_THROW(archive::config_from_text("model_kind=cgan\n"), ValidationError);
    EXPECT_THROW(archive::config_from_text(archive::config_to_text(c) + "bogus=1\n"), ValidationError);
}

TEST(Archive, BundleRoundTripsForEveryKind) {
    for (auto kind : {gan::ModelKind::cgan, gan::ModelKind::acgan, gan::ModelKind::hybrid_cgan,
                      gan::ModelKind::hybrid_acgan}) {
        const auto b = sample_bundle(kind);
        const auto bytes = bytes_of(b);
        std::istringstream in(bytes, std::ios::binary);
        const auto back = archive::read_bundle(in);
        EXPECT_TRUE(back == b) << gan::model_kind_name(kind);
        EXPECT_EQ(bytes_of(back), bytes);
    }
}

TEST(Archive, FileRoundTrip) {
    const auto b = sample_bundle(gan::ModelKind::acgan);
    const auto path = std::filesystem::temp_directory_path() / "hcgan_archive_test.bin";
    archive::save_bundle(b, path);
    EXPECT_TRUE(archive::load_bundle(path) == b);
    EXPECT_THROW(archive::load_bundle(path.string() + ".missing"), ValidationError);
}

TEST(Archive, NetworkRecordKeepsSeed) {
    const auto b = sample_bundle(gan::ModelKind::cgan);
    std::stringstream s(std::ios::in | std::ios::out | std::ios::binary);
    archive::write_network(s, b.simulator, 1234);
    std::uint64_t seed = 0;
    const auto net = archive::read_network(s, &seed);
    EXPECT_EQ(seed, 1234u);
    EXPECT_TRUE(net == b.simulator);
}

TEST(Archive, RejectsCorruption) {
    const auto bytes = bytes_of(sample_bundle(gan::ModelKind::cgan));
    {
        auto bad = bytes;
        bad[0] = 'X';
        std::istringstream in(bad, std::ios::binary);
        EXPECT_THROW(archive::read_bundle(in), ValidationError);
    }
    {
        std::istringstream in(bytes.substr(0, bytes.size() / 2), std::ios::binary);
        EXPECT_THROW(archive::read_bundle(in), ValidationError);
    }
    {
        auto bad = bytes;
        bad[8] = static_cast<char>(archive::kFormatVersion + 1);
        std::istringstream in(bad, std::ios::binary);
        EXPECT_THROW(archive::read_bundle(in), ValidationError);
    }
    {
        auto bad = bytes;
        bad[bad.size() - 1] = '?';
        std::istringstream in(bad, std::ios::binary);
        EXPECT_THROW(archive::read_bundle(in), ValidationError);
    }
}
