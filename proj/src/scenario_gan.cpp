#include "hcgan/scenario_gan.hpp"

#include "hcgan/errors.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

namespace hcgan::gan {

namespace {

enum StreamTag : std::uint64_t {
    init_conditioner = 1,
    init_decoder = 2,
    init_simulator = 3,
    init_discriminator = 4,
    init_proposer = 5,
    latent_stream = 10,
    interpolation_stream = 11,
    epoch_shuffle = 12,
    proposer_shuffle = 13,
    conditioner_dropout = 20,
    decoder_dropout = 21,
    discriminator_dropout = 22,
    proposer_dropout = 23,
    simulation_stream = 30,
};

std::vector<double> row_values(const Matrix& m, Index row, Index first, Index count) {
    std::vector<double> out(static_cast<std::size_t>(count));
    for (Index c = 0; c < count; ++c) out[static_cast<std::size_t>(c)] = m(row, first + c);
    return out;
}

Matrix stack_rows(const std::vector<PreparedWindow>& windows, std::span<const std::size_t> batch,
                  Matrix PreparedWindow::*field) {
    const Index cols = (windows[batch.front()].*field).cols();
    Matrix out(static_cast<Index>(batch.size()), cols);
    for (std::size_t r = 0; r < batch.size(); ++r) out.row(static_cast<Index>(r)) = (windows.at(batch[r]).*field).row(0);
    return out;
}

std::vector<Matrix> gradient_values(ad::Tape& tape, const ad::Tensor& loss, const std::vector<ad::Tensor>& inputs) {
    std::vector<Matrix> out;
    out.reserve(inputs.size());
    for (const auto& g : tape.gradient(loss, inputs)) out.push_back(g.value());
    return out;
}

std::vector<ad::Tensor> concat_params(std::initializer_list<const nn::BoundNetwork*> nets) {
    std::vector<ad::Tensor> out;
    for (const auto* n : nets) {
        if (n) out.insert(out.end(), n->params.begin(), n->params.end());
    }
    return out;
}

void apply_adam(nn::MlpNetwork& net, std::span<const Matrix> grads, nn::AdamState& state) {
    auto params = net.parameters();
    nn::adam_step(params, grads, state);
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::string_view model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::cgan: return "cgan";
        case ModelKind::acgan: return "acgan";
        case ModelKind::hybrid_cgan: return "hybrid_cgan";
        case ModelKind::hybrid_acgan: return "hybrid_acgan";
    }
    return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
    for (ModelKind k : {ModelKind::cgan, ModelKind::acgan, ModelKind::hybrid_cgan, ModelKind::hybrid_acgan}) {
        if (model_kind_name(k) == name) return k;
    }
    throw ValidationError("unknown model kind '" + std::string(name) + "' (expected cgan|acgan|hybrid_cgan|hybrid_acgan)");
}

bool is_hybrid(ModelKind kind) { return kind == ModelKind::hybrid_cgan || kind == ModelKind::hybrid_acgan; }
bool uses_autoencoder(ModelKind kind) { return kind == ModelKind::acgan || kind == ModelKind::hybrid_acgan; }

norm::Regime default_regime(ModelKind kind) { return is_hybrid(kind) ? norm::Regime::hybrid : norm::Regime::standard; }

void validate(const TrainConfig& c) {
    auto fail = [](const std::string& msg) { throw ValidationError("train config: " + msg); };
    if (c.hist < 2) fail("hist must be >= 2, got " + std::to_string(c.hist));
    if (c.fut < 1) fail("fut must be >= 1, got " + std::to_string(c.fut));
    if (c.latent < 1) fail("latent must be >= 1, got " + std::to_string(c.latent));
    if (c.epochs < 1) fail("epochs must be >= 1, got " + std::to_string(c.epochs));
    if (!(c.lambda1 >= 0.0) || !std::isfinite(c.lambda1)) fail("lambda1 must be finite and >= 0");
    if (!(c.lambda2 >= 0.0) || !std::isfinite(c.lambda2)) fail("lambda2 must be finite and >= 0");
    if (c.critic_steps < 1) fail("critic_steps must be >= 1");
    if (c.batch_size < 1) fail("batch_size must be >= 1");
    if (!(c.adam.lr > 0.0) || !(c.proposer.adam.lr > 0.0)) fail("learning rates must be positive");
    for (double b : {c.adam.beta1, c.adam.beta2, c.proposer.adam.beta1, c.proposer.adam.beta2}) {
        if (!(b >= 0.0 && b < 1.0)) fail("Adam betas must lie in [0,1)");
    }
    if (!std::isfinite(c.hybrid_output_scale) || c.hybrid_output_scale == 0.0) {
        fail("hybrid_output_scale must be finite and nonzero");
    }
    if (!(c.proposer.validation_fraction > 0.0 && c.proposer.validation_fraction < 1.0)) {
        fail("proposer validation fraction must lie in (0,1)");
    }
    if (c.proposer.epochs < 1) fail("proposer epochs must be >= 1");
    if (c.proposer.batch_size < 0) fail("proposer batch_size must be >= 0");
    if (is_hybrid(c.kind)) {
        if (c.regime != norm::Regime::hybrid) {
            fail(std::string(model_kind_name(c.kind)) + " requires regime hybrid, got " +
                 std::string(norm::regime_name(c.regime)));
        }
    } else {
        if (c.regime == norm::Regime::hybrid) fail("regime hybrid requires a hybrid model kind");
        if (c.copy_mean_proposer) fail("copy_mean_proposer applies to hybrid model kinds only");
        if (c.regime == norm::Regime::eavesdrop && !c.allow_forward_bias) {
            fail("regime eavesdrop uses future prices; pass --allow-forward-bias to run this diagnostic");
        }
    }
}

nn::NetworkDims ModelBundle::dims() const { return {assets(), config.hist, config.fut, config.latent}; }

nn::Rng make_stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    return nn::Rng(seq);
}

ModelBundle init_bundle(const TrainConfig& config, const std::vector<std::string>& tickers) {
    validate(config);
    if (tickers.size() < 2) throw ValidationError("model needs at least 2 assets");
    ModelBundle b;
    b.config = config;
    b.tickers = tickers;
    const auto dims = b.dims();
    auto make = [&](nn::Role role, std::uint64_t tag) {
        nn::MlpNetwork net = nn::build_network(role, dims, {config.hybrid_output_scale});
        auto rng = make_stream(config.seed, tag);
        nn::init_parameters(net, rng);
        return net;
    };
    b.conditioner = make(nn::Role::conditioner, init_conditioner);
    if (uses_autoencoder(config.kind)) b.decoder = make(nn::Role::decoder, init_decoder);
    b.simulator = make(is_hybrid(config.kind) ? nn::Role::hybrid_simulator : nn::Role::simulator, init_simulator);
    b.discriminator = make(nn::Role::discriminator, init_discriminator);
    if (is_hybrid(config.kind) && !config.copy_mean_proposer) b.proposer = make(nn::Role::proposer, init_proposer);
    return b;
}

Matrix flatten_assets(const Matrix& block) {
    Matrix row(1, block.size());
    for (Index a = 0; a < block.rows(); ++a) row.middleCols(a * block.cols(), block.cols()) = block.row(a);
    return row;
}

Matrix unflatten_assets(const Matrix& row, Index assets) {
    if (row.rows() != 1 || assets < 1 || row.cols() % assets != 0) {
        throw ValidationError("unflatten_assets: width " + std::to_string(row.cols()) + " not divisible into " +
                              std::to_string(assets) + " assets");
    }
    const Index len = row.cols() / assets;
    Matrix block(assets, len);
    for (Index a = 0; a < assets; ++a) block.row(a) = row.middleCols(a * len, len);
    return block;
}

Matrix proposer_input(const Matrix& hist_raw) {
    const Index n = hist_raw.rows();
    const Index h = hist_raw.cols();
    Matrix normalized(n, h);
    Matrix mu(1, n);
    for (Index a = 0; a < n; ++a) {
        const auto values = row_values(hist_raw, a, 0, h);
        const auto stats = norm::fit_standard(values);
        normalized.row(a) = norm::normalize(hist_raw.row(a).transpose(), stats).transpose();
        mu(0, a) = stats.center;
    }
    Matrix out(1, n * (h + 1));
    out << flatten_assets(normalized), mu;
    return out;
}

Vector propose_mean(const nn::MlpNetwork& proposer, const Matrix& hist_raw) {
    if (proposer.role() != nn::Role::proposer) throw ValidationError("propose_mean needs a proposer network");
    const Matrix out = proposer.infer(proposer_input(hist_raw));
    for (Index a = 0; a < out.cols(); ++a) {
        if (!std::isfinite(out(0, a))) {
            throw NumericError("proposer produced a non-finite mean for asset " + std::to_string(a));
        }
    }
    return out.row(0).transpose();
}

std::vector<norm::NormStats> window_stats(const Matrix& full_raw, Index hist, norm::Regime regime,
                                          bool allow_forward_bias, const nn::MlpNetwork* proposer, bool copy_mean,
                                          const std::vector<std::string>& tickers) {
    if (hist < 2 || full_raw.cols() < hist) {
        throw ValidationError("window_stats: window of " + std::to_string(full_raw.cols()) +
                              " columns cannot hold history " + std::to_string(hist));
    }
    const Index n = full_raw.rows();
    auto asset_name = [&](Index a) {
        return static_cast<std::size_t>(a) < tickers.size() ? tickers[static_cast<std::size_t>(a)]
                                                            : "asset " + std::to_string(a);
    };
    Vector proposed;
    if (regime == norm::Regime::hybrid && !copy_mean) {
        if (!proposer) throw ValidationError("hybrid normalization needs a proposer");
        proposed = proposer->infer(proposer_input(full_raw.leftCols(hist))).row(0).transpose();
    }
    std::vector<norm::NormStats> out;
    out.reserve(static_cast<std::size_t>(n));
    for (Index a = 0; a < n; ++a) {
        const auto hist_values = row_values(full_raw, a, 0, hist);
        switch (regime) {
            case norm::Regime::standard:
                out.push_back(norm::fit_standard(hist_values));
                break;
            case norm::Regime::eavesdrop: {
                if (full_raw.cols() == hist) throw ValidationError("eavesdrop normalization needs the full window");
                const auto all = row_values(full_raw, a, 0, full_raw.cols());
                out.push_back(norm::fit_eavesdrop(all, static_cast<std::size_t>(hist), allow_forward_bias));
                break;
            }
            case norm::Regime::hybrid: {
                const auto base = norm::fit_standard(hist_values);
                const double center = copy_mean ? base.center : proposed(a);
                out.push_back(norm::make_hybrid_stats(base.scale, center, asset_name(a)));
                break;
            }
        }
    }
    return out;
}

Matrix normalize_block(const Matrix& block, std::span<const norm::NormStats> stats) {
    if (static_cast<Index>(stats.size()) != block.rows()) throw ValidationError("normalize_block: stats/asset count mismatch");
    Matrix out(block.rows(), block.cols());
    for (Index a = 0; a < block.rows(); ++a) {
        out.row(a) = norm::normalize(block.row(a).transpose(), stats[static_cast<std::size_t>(a)]).transpose();
    }
    return out;
}

Matrix denormalize_block(const Matrix& block, std::span<const norm::NormStats> stats) {
    if (static_cast<Index>(stats.size()) != block.rows()) {
        throw ValidationError("denormalize_block: stats/asset count mismatch");
    }
    Matrix out(block.rows(), block.cols());
    for (Index a = 0; a < block.rows(); ++a) {
        out.row(a) = norm::denormalize(block.row(a).transpose(), stats[static_cast<std::size_t>(a)]).transpose();
    }
    return out;
}

namespace {

void check_penalty_inputs(const ad::Tensor& real, const ad::Tensor& fake, const Matrix& eps) {
    if (real.tape() == nullptr || real.tape() != fake.tape()) {
        throw ValidationError("gradient_penalty: real and fake must live on the same tape");
    }
    if (real.rows() != fake.rows() || real.cols() != fake.cols()) {
        throw ValidationError("gradient_penalty: real " + std::to_string(real.rows()) + "x" +
                              std::to_string(real.cols()) + " vs fake " + std::to_string(fake.rows()) + "x" +
                              std::to_string(fake.cols()));
    }
    if (eps.rows() != real.rows() || eps.cols() != 1) {
        throw ValidationError("gradient_penalty: eps must be rows x 1");
    }
}

Matrix interpolate(const Matrix& real, const Matrix& fake, const Matrix& eps) {
    const Matrix e = eps.replicate(1, real.cols());
    return (e.array() * real.array() + (1.0 - e.array()) * fake.array()).matrix();
}

// Weighted sum of (||grad row|| - 1)^2 with one weight per row.
ad::Tensor weighted_penalty(const ad::Tensor& grad, const Matrix& weights) {
    const ad::Tensor gap = ad::square(ad::affine_scalar(ad::row_l2_norm(grad), 1.0, -1.0));
    return ad::matmul(grad.tape()->constant(weights), gap);
}

}  // namespace

ad::Tensor gradient_penalty(const Critic& critic, const ad::Tensor& real, const ad::Tensor& fake, const Matrix& eps) {
    check_penalty_inputs(real, fake, eps);
    ad::Tape& tape = *real.tape();
    const ad::Tensor xbar = tape.variable(interpolate(real.value(), fake.value(), eps));
    const ad::Tensor score = critic(xbar);
    if (score.rows() != real.rows() || score.cols() != 1) {
        throw ValidationError("gradient_penalty: critic must return one score per row");
    }
    const std::array<ad::Tensor, 1> inputs{xbar};
    const ad::Tensor grad = tape.gradient(ad::sum(score), inputs, true)[0];
    return weighted_penalty(grad, Matrix::Constant(1, real.rows(), 1.0 / static_cast<double>(real.rows())));
}

CriticLoss critic_loss(const Critic& critic, const ad::Tensor& real, const ad::Tensor& fake, const Matrix& eps,
                       double lambda1) {
    check_penalty_inputs(real, fake, eps);
    ad::Tape& tape = *real.tape();
    const Index rows = real.rows();
    Matrix stacked(3 * rows, real.cols());
    stacked << real.value(), fake.value(), interpolate(real.value(), fake.value(), eps);
    const ad::Tensor x = tape.variable(std::move(stacked));
    const ad::Tensor score = critic(x);
    if (score.rows() != 3 * rows || score.cols() != 1) {
        throw ValidationError("critic_loss: critic must return one score per row");
    }
    const double inv = 1.0 / static_cast<double>(rows);
    Matrix mean_gap = Matrix::Zero(1, 3 * rows);
    mean_gap.leftCols(rows).setConstant(inv);
    mean_gap.middleCols(rows, rows).setConstant(-inv);
    Matrix on_mixed = Matrix::Zero(1, 3 * rows);
    on_mixed.rightCols(rows).setConstant(inv);

    // Rows pass through the critic independently, so the gradient of the
    // summed score holds each interpolate's own input gradient.
    const std::array<ad::Tensor, 1> inputs{x};
    const ad::Tensor grad = tape.gradient(ad::sum(score), inputs, true)[0];

    CriticLoss out;
    out.wasserstein = ad::matmul(tape.constant(std::move(mean_gap)), score);
    out.penalty = weighted_penalty(grad, on_mixed);
    out.loss = ad::add(ad::scale(out.wasserstein, -1.0), ad::scale(out.penalty, lambda1));
    return out;
}

GeneratorLoss generator_loss(const nn::BoundNetwork& conditioner, const nn::BoundNetwork& simulator,
                             const nn::BoundNetwork* decoder, const nn::BoundNetwork& discriminator,
                             const ad::Tensor& condition, const ad::Tensor& latent, double lambda2, nn::Mode mode,
                             const DropoutStreams& streams) {
    GeneratorLoss out;
    const ad::Tensor code = nn::forward(conditioner, condition, mode, streams.conditioner);
    const ad::Tensor future = nn::forward(simulator, ad::concat_cols({latent, code}), mode, nullptr);
    const ad::Tensor score = nn::forward(discriminator, ad::concat_cols({condition, future}), mode, streams.discriminator);
    out.adversarial = ad::scale(ad::mean(score), -1.0);
    out.loss = out.adversarial;
    if (decoder) {
        const ad::Tensor recon = nn::forward(*decoder, code, mode, streams.decoder);
        out.ap = ad::mean(ad::square(ad::sub(recon, condition)));
        out.loss = ad::add(out.adversarial, ad::scale(*out.ap, lambda2));
    }
    return out;
}

Matrix generate_futures(const nn::MlpNetwork& conditioner, const nn::MlpNetwork& simulator, const Matrix& condition,
                        const Matrix& latent, nn::Mode mode, nn::Rng* conditioner_dropout) {
    if (mode == nn::Mode::infer) {
        Matrix input(condition.rows(), latent.cols() + nn::kCodeWidth);
        input << latent, conditioner.infer(condition);
        return simulator.infer(input);
    }
    ad::Tape tape;
    const auto cond = nn::bind(tape, conditioner, false);
    const auto sim = nn::bind(tape, simulator, false);
    const ad::Tensor code = nn::forward(cond, tape.constant_ref(condition), mode, conditioner_dropout);
    return nn::forward(sim, ad::concat_cols({tape.constant_ref(latent), code}), mode, nullptr).value();
}

// ---------------------------------------------------------------------------

namespace {

std::vector<Matrix> proposer_targets_and_inputs(const data::PriceFrame& frame, Index h, Index w,
                                                std::vector<Matrix>& targets) {
    std::vector<Matrix> inputs;
    for (data::DayIndex start : data::training_index_set(frame.day_count(), w)) {
        const Matrix full = frame.prices().middleCols(static_cast<Index>(start - 1), w);
        inputs.push_back(proposer_input(full.leftCols(h)));
        targets.push_back(full.rowwise().mean().transpose());
    }
    return inputs;
}

}  // namespace

ProposerResult train_proposer(const data::PriceFrame& train_frame, const TrainConfig& config) {
    validate(config);
    if (!is_hybrid(config.kind)) {
        throw ValidationError("proposer training applies to hybrid model kinds only, got " +
                              std::string(model_kind_name(config.kind)));
    }
    const Index w = config.window();
    if (train_frame.day_count() < w + 1) {
        throw ValidationError("proposer training needs at least 2 windows: " + std::to_string(train_frame.day_count()) +
                              " days for window " + std::to_string(w));
    }
    std::vector<Matrix> targets;
    const std::vector<Matrix> inputs = proposer_targets_and_inputs(train_frame, config.hist, w, targets);
    const auto total = inputs.size();
    auto n_val = static_cast<std::size_t>(std::llround(config.proposer.validation_fraction * static_cast<double>(total)));
    n_val = std::clamp<std::size_t>(n_val, 1, total - 1);
    const std::size_t n_train = total - n_val;

    const nn::NetworkDims dims{train_frame.asset_count(), config.hist, config.fut, config.latent};
    ProposerResult result;
    result.network = nn::build_network(nn::Role::proposer, dims);
    {
        auto rng = make_stream(config.seed, init_proposer);
        nn::init_parameters(result.network, rng);
    }
    nn::AdamState adam = nn::make_adam_state(result.network, config.proposer.adam);
    nn::Rng dropout = make_stream(config.seed, proposer_dropout);

    auto validation_mse = [&]() {
        double acc = 0.0;
        for (std::size_t k = n_train; k < total; ++k) {
            acc += (result.network.infer(inputs[k]) - targets[k]).array().square().mean();
        }
        return acc / static_cast<double>(n_val);
    };

    const auto batch = config.proposer.batch_size < 1
                           ? n_train
                           : std::min<std::size_t>(n_train, static_cast<std::size_t>(config.proposer.batch_size));
    const Index in_width = inputs.front().cols();
    const Index out_width = targets.front().cols();
    std::vector<std::size_t> order(n_train);
    for (std::int64_t epoch = 1; epoch <= config.proposer.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto shuffle_rng = make_stream(config.seed + static_cast<std::uint64_t>(epoch), proposer_shuffle);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double train_acc = 0.0;
        for (std::size_t first = 0; first < n_train; first += batch) {
            const std::size_t rows = std::min(batch, n_train - first);
            Matrix x(static_cast<Index>(rows), in_width);
            Matrix y(static_cast<Index>(rows), out_width);
            for (std::size_t r = 0; r < rows; ++r) {
                x.row(static_cast<Index>(r)) = inputs[order[first + r]];
                y.row(static_cast<Index>(r)) = targets[order[first + r]];
            }
            std::vector<Matrix> grads;
            {
                ad::Tape tape;
                const auto bound = nn::bind(tape, result.network, true);
                const ad::Tensor out = nn::forward(bound, tape.constant_ref(x), nn::Mode::train, &dropout);
                const ad::Tensor loss = ad::mean(ad::square(ad::sub(out, tape.constant_ref(y))));
                if (!std::isfinite(loss.item())) {
                    throw NumericError("proposer training diverged at epoch " + std::to_string(epoch));
                }
                train_acc += loss.item() * static_cast<double>(rows);
                grads = gradient_values(tape, loss, bound.params);
            }
            apply_adam(result.network, grads, adam);
        }
        const double val = validation_mse();
        if (!std::isfinite(val)) throw NumericError("proposer validation MSE non-finite at epoch " + std::to_string(epoch));
        result.log.push_back({epoch, train_acc / static_cast<double>(n_train), val});
    }
    result.validation_mse = result.log.back().validation_mse;
    return result;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(ModelBundle& bundle, const data::PriceFrame& train_frame)
    : bundle_(bundle),
      latent_rng_(make_stream(bundle.config.seed, latent_stream)),
      interpolation_rng_(make_stream(bundle.config.seed, interpolation_stream)),
      conditioner_dropout_(make_stream(bundle.config.seed, conditioner_dropout)),
      decoder_dropout_(make_stream(bundle.config.seed, decoder_dropout)),
      discriminator_dropout_(make_stream(bundle.config.seed, discriminator_dropout)) {
    const TrainConfig& c = bundle.config;
    validate(c);
    if (train_frame.tickers() != bundle.tickers) throw ValidationError("training frame tickers differ from the bundle");
    if (is_hybrid(c.kind) && !c.copy_mean_proposer && !bundle.proposer) {
        throw ValidationError("hybrid training needs a proposer");
    }
    const Index h = c.hist;
    const Index f = c.fut;
    const Index w = c.window();
    for (data::DayIndex start : data::training_index_set(train_frame.day_count(), w)) {
        const Matrix full = train_frame.prices().middleCols(static_cast<Index>(start - 1), w);
        const auto stats = window_stats(full, h, c.regime, c.allow_forward_bias,
                                        bundle.proposer ? &*bundle.proposer : nullptr, c.copy_mean_proposer,
                                        bundle.tickers);
        const Matrix normalized = normalize_block(full, stats);
        PreparedWindow pw;
        pw.start = start;
        pw.condition = flatten_assets(normalized.leftCols(h));
        pw.real.resize(1, normalized.size());
        pw.real << pw.condition, flatten_assets(normalized.rightCols(f));
        windows_.push_back(std::move(pw));
    }
    conditioner_adam_ = nn::make_adam_state(bundle.conditioner, c.adam);
    if (bundle.decoder) decoder_adam_ = nn::make_adam_state(*bundle.decoder, c.adam);
    simulator_adam_ = nn::make_adam_state(bundle.simulator, c.adam);
    discriminator_adam_ = nn::make_adam_state(bundle.discriminator, c.adam);
}

Matrix Trainer::sample_latent(Index rows) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix z(rows, bundle_.config.latent);
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < z.cols(); ++c) z(r, c) = normal(latent_rng_);
    }
    return z;
}

GeneratorStepResult Trainer::generator_step(std::span<const std::size_t> batch, const Matrix& latent) {
    if (batch.empty() || latent.rows() != static_cast<Index>(batch.size())) {
        throw ValidationError("generator_step: batch and latent rows disagree");
    }
    const Matrix condition = stack_rows(windows_, batch, &PreparedWindow::condition);
    GeneratorStepResult result;
    std::vector<Matrix> grads;
    std::size_t n_cond = 0;
    std::size_t n_sim = 0;
    {
        ad::Tape tape;
        const auto cond = nn::bind(tape, bundle_.conditioner, true);
        const auto sim = nn::bind(tape, bundle_.simulator, true);
        const auto disc = nn::bind(tape, bundle_.discriminator, false);
        std::optional<nn::BoundNetwork> dec;
        if (bundle_.decoder) dec = nn::bind(tape, *bundle_.decoder, true);
        const DropoutStreams streams{&conditioner_dropout_, &decoder_dropout_, &discriminator_dropout_};
        const auto loss = generator_loss(cond, sim, dec ? &*dec : nullptr, disc, tape.constant_ref(condition),
                                         tape.constant_ref(latent), bundle_.config.lambda2, nn::Mode::train, streams);
        result.loss = loss.loss.item();
        result.adversarial = loss.adversarial.item();
        if (loss.ap) result.ap_loss = loss.ap->item();
        if (!std::isfinite(result.loss)) throw NumericError("non-finite generator loss");
        n_cond = cond.params.size();
        n_sim = sim.params.size();
        grads = gradient_values(tape, loss.loss, concat_params({&cond, &sim, dec ? &*dec : nullptr}));
    }
    const std::span<const Matrix> all(grads);
    apply_adam(bundle_.conditioner, all.subspan(0, n_cond), conditioner_adam_);
    apply_adam(bundle_.simulator, all.subspan(n_cond, n_sim), simulator_adam_);
    if (bundle_.decoder) apply_adam(*bundle_.decoder, all.subspan(n_cond + n_sim), *decoder_adam_);
    bundle_.counters.generator_steps += 1;
    return result;
}

CriticStepResult Trainer::critic_step(std::span<const std::size_t> batch, const Matrix& latent) {
    if (batch.empty() || latent.rows() != static_cast<Index>(batch.size())) {
        throw ValidationError("critic_step: batch and latent rows disagree");
    }
    const Matrix condition = stack_rows(windows_, batch, &PreparedWindow::condition);
    const Matrix real = stack_rows(windows_, batch, &PreparedWindow::real);
    const Matrix future = generate_futures(bundle_.conditioner, bundle_.simulator, condition, latent, nn::Mode::train,
                                           &conditioner_dropout_);
    Matrix fake(real.rows(), real.cols());
    fake << condition, future;
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    Matrix eps(real.rows(), 1);
    for (Index r = 0; r < eps.rows(); ++r) eps(r, 0) = uniform(interpolation_rng_);

    CriticStepResult result;
    std::vector<Matrix> grads;
    {
        ad::Tape tape;
        const auto disc = nn::bind(tape, bundle_.discriminator, true);
        const Critic critic = [&](const ad::Tensor& x) {
            return nn::forward(disc, x, nn::Mode::train, &discriminator_dropout_);
        };
        const auto loss = critic_loss(critic, tape.constant_ref(real), tape.constant_ref(fake), eps,
                                      bundle_.config.lambda1);
        result.loss = loss.loss.item();
        result.wasserstein = loss.wasserstein.item();
        result.penalty = loss.penalty.item();
        if (!std::isfinite(result.loss)) throw NumericError("non-finite critic loss");
        grads = gradient_values(tape, loss.loss, disc.params);
    }
    apply_adam(bundle_.discriminator, grads, discriminator_adam_);
    bundle_.counters.critic_steps += 1;
    return result;
}

EpochRecord Trainer::run_epoch(std::int64_t epoch) {
    const TrainConfig& c = bundle_.config;
    std::vector<std::size_t> order(windows_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto shuffle_rng = make_stream(c.seed + static_cast<std::uint64_t>(epoch), epoch_shuffle);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    std::vector<double> gen_losses;
    std::vector<double> critic_losses;
    std::vector<double> distances;
    std::vector<double> ap_losses;
    const auto batch_size = static_cast<std::size_t>(c.batch_size);
    for (std::size_t first = 0; first < order.size(); first += batch_size) {
        const std::span<const std::size_t> batch(order.data() + first, std::min(batch_size, order.size() - first));
        try {
            const Matrix z = sample_latent(static_cast<Index>(batch.size()));
            const auto g = generator_step(batch, z);
            gen_losses.push_back(g.loss);
            if (g.ap_loss) ap_losses.push_back(*g.ap_loss);
            for (std::int64_t k = 0; k < c.critic_steps; ++k) {
                const auto cr = critic_step(batch, k == 0 ? z : sample_latent(static_cast<Index>(batch.size())));
                critic_losses.push_back(cr.loss);
                distances.push_back(cr.wasserstein);
            }
        } catch (const NumericError& e) {
            throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", window starting day " +
                               std::to_string(windows_[batch.front()].start) + ": " + e.what());
        }
        bundle_.counters.windows_visited += static_cast<std::int64_t>(batch.size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.generator_loss = mean_of(gen_losses);
    rec.critic_loss = mean_of(critic_losses);
    rec.wasserstein = mean_of(distances);
    if (bundle_.decoder) rec.ap_loss = mean_of(ap_losses);
    return rec;
}

ModelBundle train(const data::PriceFrame& train_frame, const TrainConfig& config, const EpochCallback& on_epoch) {
    validate(config);
    if (train_frame.day_count() < config.window()) {
        throw ValidationError("training frame has " + std::to_string(train_frame.day_count()) +
                              " days, fewer than the window " + std::to_string(config.window()));
    }
    ModelBundle bundle = init_bundle(config, train_frame.tickers());
    if (bundle.proposer) {
        auto result = train_proposer(train_frame, config);
        bundle.proposer = std::move(result.network);
        bundle.proposer_log = std::move(result.log);
    }
    Trainer trainer(bundle, train_frame);
    for (std::int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
        bundle.log.push_back(trainer.run_epoch(epoch));
        if (on_epoch) on_epoch(bundle.log.back());
    }
    bundle.trained = true;
    return bundle;
}

// ---------------------------------------------------------------------------

SimulationResult simulate_paths(const ModelBundle& bundle, const data::PriceFrame& test_frame, std::int64_t n_draws,
                                std::uint64_t seed, const SimulationOptions& options) {
    if (!bundle.trained) throw ValidationError("simulate_paths: bundle is untrained");
    if (n_draws < 1) throw ValidationError("simulate_paths: n_draws must be >= 1");
    if (test_frame.tickers() != bundle.tickers) {
        throw ValidationError("simulate_paths: test frame tickers differ from the bundle's");
    }
    const TrainConfig& c = bundle.config;
    if (c.regime == norm::Regime::eavesdrop && !options.allow_forward_bias) {
        throw ValidationError("eavesdrop regime reads future prices; pass --allow-forward-bias to run it");
    }
    const Index n = bundle.assets();
    const Index h = c.hist;
    const Index f = c.fut;
    const Index k_days = test_frame.day_count();
    const auto starts = data::inference_index_set(k_days, h, f);
    const Matrix& prices = test_frame.prices();

    struct Block {
        Index column = 0;  // 0-based first generated column
        std::vector<norm::NormStats> stats;
        Matrix code;  // 1 x 16
    };
    std::vector<Block> blocks;
    for (data::DayIndex i : starts) {
        Block b;
        b.column = static_cast<Index>(i - 1);
        const Index first = b.column - h;
        const Index cols = c.regime == norm::Regime::eavesdrop ? h + f : h;
        const Matrix window = prices.middleCols(first, cols);
        b.stats = window_stats(window, h, c.regime, options.allow_forward_bias,
                               bundle.proposer ? &*bundle.proposer : nullptr, c.copy_mean_proposer, bundle.tickers);
        b.code = bundle.conditioner.infer(flatten_assets(normalize_block(window.leftCols(h), b.stats)));
        blocks.push_back(std::move(b));
    }

    SimulationResult result;
    result.paths.resize(static_cast<std::size_t>(n_draws));
    std::vector<double> lows(result.paths.size(), std::numeric_limits<double>::infinity());
    std::vector<double> highs(result.paths.size(), -std::numeric_limits<double>::infinity());

    auto run_draw = [&](std::size_t d) {
        nn::Rng rng = make_stream(seed, simulation_stream, d);
        std::normal_distribution<double> normal(0.0, 1.0);
        Matrix path(n, k_days);
        path.leftCols(h) = prices.leftCols(h);
        Matrix input(1, c.latent + nn::kCodeWidth);
        for (const Block& b : blocks) {
            for (Index j = 0; j < c.latent; ++j) input(0, j) = normal(rng);
            input.rightCols(nn::kCodeWidth) = b.code;
            const Matrix out = bundle.simulator.infer(input);
            if (!out.allFinite()) {
                throw NumericError("simulator produced non-finite values in draw " + std::to_string(d) +
                                   " at day " + std::to_string(b.column + 1));
            }
            lows[d] = std::min(lows[d], out.minCoeff());
            highs[d] = std::max(highs[d], out.maxCoeff());
            path.middleCols(b.column, f) = denormalize_block(unflatten_assets(out, n), b.stats);
        }
        result.paths[d] = std::move(path);
    };

    const auto jobs = static_cast<std::size_t>(std::max(1, options.jobs));
    if (jobs == 1 || result.paths.size() == 1) {
        for (std::size_t d = 0; d < result.paths.size(); ++d) run_draw(d);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(jobs);
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < std::min(jobs, result.paths.size()); ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t d = next++; d < result.paths.size(); d = next++) run_draw(d);
                } catch (...) {
                    errors[t] = std::current_exception();
                    next = result.paths.size();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (const auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    result.normalized_min = *std::min_element(lows.begin(), lows.end());
    result.normalized_max = *std::max_element(highs.begin(), highs.end());
    return result;
}

}  // namespace hcgan::gan
