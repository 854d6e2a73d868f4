#pragma once

// Conditional Wasserstein GAN variants (CGAN, ACGAN and their hybrid-proposer
// forms): proposer training, adversarial training over all training windows,
// and synthesis of future price blocks on a test frame.
//
// Windows are flattened asset-major: an N x L block becomes one row holding
// asset 0's L values, then asset 1's, and so on. The critic sees
// [flat(X_h) | flat(X_f)] in normalized units.

#include "hcgan/autodiff.hpp"
#include "hcgan/market_data.hpp"
#include "hcgan/networks.hpp"
#include "hcgan/normalization.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hcgan::gan {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class ModelKind { cgan, acgan, hybrid_cgan, hybrid_acgan };

std::string_view model_kind_name(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);
bool is_hybrid(ModelKind kind);
bool uses_autoencoder(ModelKind kind);

struct ProposerSettings {
    std::int64_t epochs = 1000;
    /// Windows per Adam step; 0 uses every training window.
    std::int64_t batch_size = 0;
    nn::AdamSettings adam{3e-4, 0.9, 0.999, 1e-8};
    /// Chronologically last fraction of training windows held out for validation.
    double validation_fraction = 0.1;

    bool operator==(const ProposerSettings&) const = default;
};

struct TrainConfig {
    ModelKind kind = ModelKind::cgan;
    /// standard or eavesdrop for non-hybrid kinds; hybrid for hybrid kinds.
    norm::Regime regime = norm::Regime::standard;
    bool allow_forward_bias = false;
    Index hist = 40;
    Index fut = 20;
    Index latent = 100;
    std::int64_t epochs = 1000;
    double lambda1 = 10.0;
    double lambda2 = 3.0;
    nn::AdamSettings adam;
    std::uint64_t seed = 0;
    std::int64_t critic_steps = 1;
    std::int64_t batch_size = 1;
    double hybrid_output_scale = nn::kHybridOutputScale;
    ProposerSettings proposer;
    /// Hybrid kinds only: use mu~ := mu instead of a trained proposer.
    bool copy_mean_proposer = false;

    Index window() const { return hist + fut; }
    bool operator==(const TrainConfig&) const = default;
};

/// Throws ValidationError describing the first inconsistent field.
void validate(const TrainConfig& config);

/// Regime implied by the model kind when none is chosen explicitly.
norm::Regime default_regime(ModelKind kind);

struct EpochRecord {
    std::int64_t epoch = 0;
    double critic_loss = 0.0;
    double generator_loss = 0.0;
    double wasserstein = 0.0;
    std::optional<double> ap_loss;

    bool operator==(const EpochRecord&) const = default;
};

struct ProposerRecord {
    std::int64_t epoch = 0;
    double train_mse = 0.0;
    double validation_mse = 0.0;

    bool operator==(const ProposerRecord&) const = default;
};

struct TrainingCounters {
    std::int64_t windows_visited = 0;
    std::int64_t generator_steps = 0;
    std::int64_t critic_steps = 0;

    bool operator==(const TrainingCounters&) const = default;
};

struct ModelBundle {
    TrainConfig config;
    std::vector<std::string> tickers;
    nn::MlpNetwork conditioner;
    std::optional<nn::MlpNetwork> decoder;
    nn::MlpNetwork simulator;
    nn::MlpNetwork discriminator;
    std::optional<nn::MlpNetwork> proposer;
    bool trained = false;
    std::vector<EpochRecord> log;
    std::vector<ProposerRecord> proposer_log;
    TrainingCounters counters;

    Index assets() const { return static_cast<Index>(tickers.size()); }
    nn::NetworkDims dims() const;
    bool operator==(const ModelBundle&) const = default;
};

/// Networks built for `config` and initialized from per-role seeds.
ModelBundle init_bundle(const TrainConfig& config, const std::vector<std::string>& tickers);

/// Independent random stream for (seed, tag, index).
nn::Rng make_stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0);

/// N x L block -> 1 x (N*L), asset-major.
Matrix flatten_assets(const Matrix& block);
/// Inverse of flatten_assets.
Matrix unflatten_assets(const Matrix& row, Index assets);

/// Proposer input row [flat(standard-normalized X_h) | mu].
Matrix proposer_input(const Matrix& hist_raw);

/// Per-asset surrogate means P(X_h, mu) in inference mode.
Vector propose_mean(const nn::MlpNetwork& proposer, const Matrix& hist_raw);

struct ProposerResult {
    nn::MlpNetwork network;
    double validation_mse = 0.0;
    std::vector<ProposerRecord> log;
};

/// Trains a proposer to predict each asset's whole-window mean.
ProposerResult train_proposer(const data::PriceFrame& train_frame, const TrainConfig& config);

/// Per-asset normalization stats for one window. `full_raw` holds at least the
/// h historical columns; eavesdrop needs all w columns. Hybrid needs `proposer`
/// unless `copy_mean` is set.
std::vector<norm::NormStats> window_stats(const Matrix& full_raw, Index hist, norm::Regime regime,
                                          bool allow_forward_bias, const nn::MlpNetwork* proposer,
                                          bool copy_mean, const std::vector<std::string>& tickers = {});

/// Applies per-asset stats to each row of `block`.
Matrix normalize_block(const Matrix& block, std::span<const norm::NormStats> stats);
Matrix denormalize_block(const Matrix& block, std::span<const norm::NormStats> stats);

using Critic = std::function<ad::Tensor(const ad::Tensor&)>;

/// Mean over rows of (||grad D(xbar)||_2 - 1)^2 with xbar = eps*real + (1-eps)*fake,
/// eps one value per row (rows x 1). Differentiable w.r.t. the critic's
/// parameters. `real` and `fake` must be on the same tape.
ad::Tensor gradient_penalty(const Critic& critic, const ad::Tensor& real, const ad::Tensor& fake,
                            const Matrix& eps);

struct CriticLoss {
    ad::Tensor loss;         // -(mean D(real) - mean D(fake)) + lambda1 * penalty
    ad::Tensor wasserstein;  // mean D(real) - mean D(fake)
    ad::Tensor penalty;
};

/// Evaluates the critic once on the stacked rows [real; fake; xbar]; the
/// critic must treat rows independently. `real` and `fake` enter as data, so
/// the loss is differentiable w.r.t. the critic's parameters only.
CriticLoss critic_loss(const Critic& critic, const ad::Tensor& real, const ad::Tensor& fake, const Matrix& eps,
                       double lambda1);

/// Dropout sources for one loss evaluation; null entries are allowed in infer mode.
struct DropoutStreams {
    nn::Rng* conditioner = nullptr;
    nn::Rng* decoder = nullptr;
    nn::Rng* discriminator = nullptr;
};

struct GeneratorLoss {
    ad::Tensor loss;         // -mean D([X_h | G]) + lambda2 * ap
    ad::Tensor adversarial;  // -mean D([X_h | G])
    std::optional<ad::Tensor> ap;
};

/// Generator objective for condition rows (N*h wide) and latent rows. With a
/// decoder the autoencoding penalty MSE(F(E(X_h)), X_h) is added with weight
/// lambda2, reusing the code that conditions the simulator.
GeneratorLoss generator_loss(const nn::BoundNetwork& conditioner, const nn::BoundNetwork& simulator,
                             const nn::BoundNetwork* decoder, const nn::BoundNetwork& discriminator,
                             const ad::Tensor& condition, const ad::Tensor& latent, double lambda2, nn::Mode mode,
                             const DropoutStreams& streams);

/// Normalized generated futures G(z, E(X_h)) as plain values (1 row per condition row).
Matrix generate_futures(const nn::MlpNetwork& conditioner, const nn::MlpNetwork& simulator, const Matrix& condition,
                        const Matrix& latent, nn::Mode mode, nn::Rng* conditioner_dropout);

struct GeneratorStepResult {
    double loss = 0.0;
    double adversarial = 0.0;
    std::optional<double> ap_loss;  // unweighted reconstruction MSE
};

struct CriticStepResult {
    double loss = 0.0;
    double wasserstein = 0.0;
    double penalty = 0.0;
};

/// Normalized training windows for one bundle.
struct PreparedWindow {
    data::DayIndex start = 0;
    Matrix condition;  // 1 x N*h
    Matrix real;       // 1 x N*w
};

/// Stateful Algorithm-1 training driver: owns optimizer state and random
/// streams for one bundle. The bundle must outlive the trainer.
class Trainer {
public:
    Trainer(ModelBundle& bundle, const data::PriceFrame& train_frame);

    const std::vector<PreparedWindow>& windows() const { return windows_; }

    /// Draws a batch of latent rows from the latent stream.
    Matrix sample_latent(Index rows);

    /// One Adam step on conditioner + simulator (+ decoder) for windows `batch`.
    GeneratorStepResult generator_step(std::span<const std::size_t> batch, const Matrix& latent);
    /// One Adam step on the discriminator for windows `batch`.
    CriticStepResult critic_step(std::span<const std::size_t> batch, const Matrix& latent);

    /// One pass over the shuffled training index set.
    EpochRecord run_epoch(std::int64_t epoch);

private:
    ModelBundle& bundle_;
    std::vector<PreparedWindow> windows_;
    nn::AdamState conditioner_adam_;
    std::optional<nn::AdamState> decoder_adam_;
    nn::AdamState simulator_adam_;
    nn::AdamState discriminator_adam_;
    nn::Rng latent_rng_;
    nn::Rng interpolation_rng_;
    nn::Rng conditioner_dropout_;
    nn::Rng decoder_dropout_;
    nn::Rng discriminator_dropout_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains the proposer (hybrid kinds) and then the GAN for config.epochs.
ModelBundle train(const data::PriceFrame& train_frame, const TrainConfig& config, const EpochCallback& on_epoch = {});

struct SimulationOptions {
    int jobs = 1;
    bool allow_forward_bias = false;
};

struct SimulationResult {
    std::vector<Matrix> paths;  // one N x K matrix per draw
    double normalized_min = 0.0;
    double normalized_max = 0.0;
};

/// Synthetic test-period paths: the first h columns copy the test frame, each
/// block at an inference index is generated from the real history before it.
SimulationResult simulate_paths(const ModelBundle& bundle, const data::PriceFrame& test_frame, std::int64_t n_draws,
                                std::uint64_t seed, const SimulationOptions& options = {});

}  // namespace hcgan::gan
