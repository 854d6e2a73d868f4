#include "hcgan/errors.hpp"
#include "hcgan/scenario_gan.hpp"
#include "support/synthetic.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace hcgan;
using gan::Matrix;
using gan::ModelKind;

namespace {

gan::TrainConfig toy_config(ModelKind kind) {
    gan::TrainConfig c;
    c.kind = kind;
    c.regime = gan::default_regime(kind);
    c.hist = 8;
    c.fut = 4;
    c.latent = 6;
    c.epochs = 2;
    c.seed = 17;
    c.proposer.epochs = 3;
    return c;
}

gan::ModelBundle ready_bundle(const gan::TrainConfig& c) {
    auto b = gan::init_bundle(c, synthetic::tickers(2));
    b.trained = true;
    return b;
}

}  // namespace

TEST(ScenarioGan, StreamsAreIndependentAndReproducible) {
    auto a = gan::make_stream(1, 2, 3);
    auto b = gan::make_stream(1, 2, 3);
    auto c = gan::make_stream(1, 2, 4);
    auto d = gan::make_stream(1, 3, 3);
    const auto x = a();
    EXPECT_EQ(x, b());
    EXPECT_NE(x, c());
    EXPECT_NE(x, d());
}

TEST(ScenarioGan, FlattenIsAssetMajorAndInvertible) {
    const Matrix block = (Matrix(2, 3) << 1, 2, 3, 4, 5, 6).finished();
    const Matrix row = gan::flatten_assets(block);
    ASSERT_EQ(row.rows(), 1);
    EXPECT_EQ(row(0, 2), 3.0);
    EXPECT_EQ(row(0, 3), 4.0);
    EXPECT_TRUE(gan::unflatten_assets(row, 2) == block);
    EXPECT_THROW(gan::unflatten_assets(Matrix::Zero(1, 5), 2), ValidationError);
}

TEST(ScenarioGan, ProposerInputLayout) {
    const Matrix hist = (Matrix(2, 4) << 1, 2, 3, 4, 10, 10, 10, 10).finished();
    const Matrix in = gan::proposer_input(hist);
    ASSERT_EQ(in.cols(), 10);
    EXPECT_DOUBLE_EQ(in(0, 8), 2.5);
    EXPECT_DOUBLE_EQ(in(0, 9), 10.0);
    EXPECT_NEAR(in(0, 0), -1.5 / (3.0 * std::sqrt(1.25)), 1e-15);
    EXPECT_EQ(in(0, 4), 0.0);
}

TEST(ScenarioGan, WindowStatsPerRegime) {
    const Matrix full = (Matrix(2, 6) << 1, 2, 3, 4, 9, 11, 5, 5, 6, 6, 7, 7).finished();
    const auto st = gan::window_stats(full, 4, norm::Regime::standard, false, nullptr, false);
    EXPECT_DOUBLE_EQ(st[0].center, 2.5);
    EXPECT_THROW(gan::window_stats(full, 4, norm::Regime::eavesdrop, false, nullptr, false), ValidationError);
    const auto ev = gan::window_stats(full, 4, norm::Regime::eavesdrop, true, nullptr, false);
    EXPECT_DOUBLE_EQ(ev[0].center, 5.0);
    EXPECT_DOUBLE_EQ(ev[0].scale, st[0].scale);
    const auto hy = gan::window_stats(full, 4, norm::Regime::hybrid, false, nullptr, true);
    EXPECT_EQ(hy[1].center, st[1].center);
    EXPECT_EQ(hy[1].scale, st[1].scale);
    EXPECT_THROW(gan::window_stats(full, 4, norm::Regime::hybrid, false, nullptr, false), ValidationError);
    const Matrix back = gan::denormalize_block(gan::normalize_block(full, ev), ev);
    EXPECT_LT((back - full).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ScenarioGan, PenaltyOfLinearCriticIsClosedForm) {
    for (Eigen::Index d : {1, 4, 24, 60}) {
        ad::Tape tape;
        std::mt19937_64 rng(static_cast<std::uint64_t>(d));
        const auto real = tape.constant(synthetic::random_matrix(3, d, rng));
        const auto fake = tape.constant(synthetic::random_matrix(3, d, rng));
        const gan::Critic critic = [](const ad::Tensor& x) { return ad::sum_cols(x); };
        const Matrix eps = (Matrix(3, 1) << 0.1, 0.5, 0.9).finished();
        const double expected = std::pow(std::sqrt(static_cast<double>(d)) - 1.0, 2.0);
        EXPECT_NEAR(gan::gradient_penalty(critic, real, fake, eps).item(), expected, 1e-12);
    }
}

TEST(ScenarioGan, CriticLossCombinesTerms) {
    ad::Tape tape;
    const auto real = tape.constant(Matrix::Constant(2, 3, 2.0));
    const auto fake = tape.constant(Matrix::Constant(2, 3, 1.0));
    const gan::Critic critic = [](const ad::Tensor& x) { return ad::sum_cols(x); };
    const auto l = gan::critic_loss(critic, real, fake, Matrix::Constant(2, 1, 0.5), 10.0);
    EXPECT_DOUBLE_EQ(l.wasserstein.item(), 3.0);
    const double pen = std::pow(std::sqrt(3.0) - 1.0, 2.0);
    EXPECT_NEAR(l.penalty.item(), pen, 1e-14);
    EXPECT_NEAR(l.loss.item(), -3.0 + 10.0 * pen, 1e-13);
}

TEST(ScenarioGan, GeneratorLossAddsWeightedReconstruction) {
    const auto c = toy_config(ModelKind::acgan);
    const auto b = ready_bundle(c);
    std::mt19937_64 rng(4);
    const Matrix cond = synthetic::random_matrix(2, 16, rng, 0.3);
    const Matrix z = synthetic::random_matrix(2, 6, rng);
    ad::Tape tape;
    const auto bc = nn::bind(tape, b.conditioner, true);
    const auto bs = nn::bind(tape, b.simulator, true);
    const auto bd = nn::bind(tape, *b.decoder, true);
    const auto bdisc = nn::bind(tape, b.discriminator, false);
    const auto l = gan::generator_loss(bc, bs, &bd, bdisc, tape.constant(cond), tape.constant(z), 3.0,
                                       nn::Mode::infer, {});
    ASSERT_TRUE(l.ap.has_value());
    const Matrix code = b.conditioner.infer(cond);
    const double mse = (b.decoder->infer(code) - cond).array().square().mean();
    EXPECT_NEAR(l.ap->item(), mse, 1e-12);
    EXPECT_NEAR(l.loss.item(), l.adversarial.item() + 3.0 * mse, 1e-12);

    const Matrix fut = gan::generate_futures(b.conditioner, b.simulator, cond, z, nn::Mode::infer, nullptr);
    Matrix window(2, 24);
    window << cond, fut;
    EXPECT_NEAR(l.adversarial.item(), -b.discriminator.infer(window).mean(), 1e-12);
}

TEST(ScenarioGan, SimulationKeepsRealPrefixAndIgnoresFuture) {
    const auto c = toy_config(ModelKind::cgan);
    const auto b = ready_bundle(c);
    const auto test = synthetic::random_walk_frame(2, 8 + 3 * 4, 12);
    const auto sim = gan::simulate_paths(b, test, 3, 5);
    ASSERT_EQ(sim.paths.size(), 3u);
    for (const auto& p : sim.paths) {
        EXPECT_TRUE(p.leftCols(8) == test.prices().leftCols(8));
        EXPECT_TRUE(p.allFinite());
    }
    EXPECT_GT(sim.normalized_min, -1.0);
    EXPECT_LT(sim.normalized_max, 1.0);

    // Perturb everything from day 13 on; the block at index 13 must not change.
    Matrix prices = test.prices();
    prices.rightCols(prices.cols() - 12).array() *= 1.5;
    const data::PriceFrame perturbed(test.tickers(), test.dates(), prices);
    const auto sim2 = gan::simulate_paths(b, perturbed, 3, 5);
    for (std::size_t d = 0; d < 3; ++d) {
        EXPECT_TRUE(sim.paths[d].middleCols(8, 8) == sim2.paths[d].middleCols(8, 8));
        EXPECT_FALSE(sim.paths[d].rightCols(4) == sim2.paths[d].rightCols(4));
    }
}

TEST(ScenarioGan, SimulationIsDeterministicAcrossJobCounts) {
    const auto b = ready_bundle(toy_config(ModelKind::hybrid_acgan));
    const auto test = synthetic::random_walk_frame(2, 16, 2);
    const auto a = gan::simulate_paths(b, test, 6, 9, {1, false});
    const auto c = gan::simulate_paths(b, test, 6, 9, {3, false});
    for (std::size_t d = 0; d < 6; ++d) EXPECT_TRUE(a.paths[d] == c.paths[d]);
    const auto other = gan::simulate_paths(b, test, 6, 10, {1, false});
    EXPECT_FALSE(a.paths[0] == other.paths[0]);
}

TEST(ScenarioGan, SimulationPreconditions) {
    auto c = toy_config(ModelKind::cgan);
    auto b = gan::init_bundle(c, synthetic::tickers(2));
    const auto test = synthetic::random_walk_frame(2, 16, 2);
    EXPECT_THROW(gan::simulate_paths(b, test, 1, 0), ValidationError);
    b.trained = true;
    EXPECT_THROW(gan::simulate_paths(b, synthetic::random_walk_frame(3, 16, 2), 1, 0), ValidationError);
    EXPECT_THROW(gan::simulate_paths(b, synthetic::random_walk_frame(2, 15, 2), 1, 0), ValidationError);

    c.regime = norm::Regime::eavesdrop;
    c.allow_forward_bias = true;
    const auto e = ready_bundle(c);
    EXPECT_THROW(gan::simulate_paths(e, test, 1, 0), ValidationError);
    EXPECT_NO_THROW(gan::simulate_paths(e, test, 1, 0, {1, true}));
}

TEST(ScenarioGan, ConfigValidation) {
    auto c = toy_config(ModelKind::cgan);
    EXPECT_NO_THROW(gan::validate(c));
    c.regime = norm::Regime::hybrid;
    EXPECT_THROW(gan::validate(c), ValidationError);
    c = toy_config(ModelKind::cgan);
    c.regime = norm::Regime::eavesdrop;
    EXPECT_THROW(gan::validate(c), ValidationError);
    c.allow_forward_bias = true;
    EXPECT_NO_THROW(gan::validate(c));
    c = toy_config(ModelKind::hybrid_cgan);
    c.regime = norm::Regime::standard;
    EXPECT_THROW(gan::validate(c), ValidationError);
    c = toy_config(ModelKind::cgan);
    c.lambda1 = -1.0;
    EXPECT_THROW(gan::validate(c), ValidationError);
    c = toy_config(ModelKind::cgan);
    c.fut = 0;
    EXPECT_THROW(gan::validate(c), ValidationError);
    EXPECT_THROW(gan::parse_model_kind("wgan"), ValidationError);
}

TEST(ScenarioGan, TrainingIsDeterministicAndLogsEveryEpoch) {
    const auto frame = synthetic::sinusoid_drift_frame(30);
    const auto c = toy_config(ModelKind::hybrid_acgan);
    int calls = 0;
    const auto a = gan::train(frame, c, [&](const gan::EpochRecord&) { ++calls; });
    const auto b = gan::train(frame, c);
    EXPECT_EQ(calls, 2);
    EXPECT_TRUE(a == b);
    ASSERT_EQ(a.log.size(), 2u);
    EXPECT_EQ(a.proposer_log.size(), 3u);
    EXPECT_TRUE(a.log[0].ap_loss.has_value());
    EXPECT_EQ(a.counters.windows_visited, 2 * (30 - 12 + 1));
    for (const auto& r : a.log) {
        EXPECT_TRUE(std::isfinite(r.critic_loss));
        EXPECT_TRUE(std::isfinite(r.generator_loss));
    }
    EXPECT_FALSE(a.simulator == gan::init_bundle(c, frame.tickers()).simulator);
}

TEST(ScenarioGan, ProposerPreconditionsAndErrors) {
    const auto frame = synthetic::sinusoid_drift_frame(30);
    EXPECT_THROW(gan::train_proposer(frame, toy_config(ModelKind::cgan)), ValidationError);
    EXPECT_THROW(gan::train_proposer(synthetic::sinusoid_drift_frame(12), toy_config(ModelKind::hybrid_cgan)),
                 ValidationError);

    auto b = ready_bundle(toy_config(ModelKind::hybrid_cgan));
    b.proposer->affine_params().back().bias(0, 1) = std::nan("");
    const Matrix hist = frame.prices().leftCols(8);
    try {
        gan::propose_mean(*b.proposer, hist);
        ADD_FAILURE() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("asset 1"), std::string::npos);
    }
}

TEST(ScenarioGan, ConstantPriceProposerLearnsCopy) {
    const auto frame = synthetic::make_frame(2, 40, [](Eigen::Index i, Eigen::Index) { return 5.0 + static_cast<double>(i); });
    auto c = toy_config(ModelKind::hybrid_cgan);
    c.proposer.epochs = 300;
    const auto r = gan::train_proposer(frame, c);
    EXPECT_LT(r.validation_mse, 1e-2);
    EXPECT_LT(r.validation_mse, r.log.front().validation_mse);
}
