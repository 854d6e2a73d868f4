// Acceptance suite: one PASS/FAIL line per criterion. Optional arguments
// select criteria by name.

#include "hcgan/autodiff.hpp"
#include "hcgan/backtest.hpp"
#include "hcgan/errors.hpp"
#include "hcgan/market_data.hpp"
#include "hcgan/networks.hpp"
#include "hcgan/normalization.hpp"
#include "hcgan/portfolio.hpp"
#include "hcgan/run_config.hpp"
#include "hcgan/scenario_gan.hpp"
#include "support/synthetic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

using namespace hcgan;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Eigen::Index;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            if (!pass) detail << "; ";
            else detail.str("");
            pass = false;
            detail << what;
        }
    }
    void note(const std::string& what) {
        if (pass) detail << (detail.tellp() > 0 ? "; " : "") << what;
    }
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

bool same_params(const nn::MlpNetwork& a, const nn::MlpNetwork& b) {
    const auto pa = a.parameters();
    const auto pb = b.parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t k = 0; k < pa.size(); ++k) {
        if (pa[k]->rows() != pb[k]->rows() || pa[k]->cols() != pb[k]->cols() || *pa[k] != *pb[k]) return false;
    }
    return true;
}

bool same_log(const gan::ModelBundle& a, const gan::ModelBundle& b) {
    if (a.log.size() != b.log.size()) return false;
    for (std::size_t k = 0; k < a.log.size(); ++k) {
        const auto& x = a.log[k];
        const auto& y = b.log[k];
        if (x.critic_loss != y.critic_loss || x.generator_loss != y.generator_loss || x.wasserstein != y.wasserstein) {
            return false;
        }
    }
    return true;
}

gan::TrainConfig toy_config(gan::ModelKind kind) {
    gan::TrainConfig c;
    c.kind = kind;
    c.regime = gan::default_regime(kind);
    c.hist = 8;
    c.fut = 4;
    c.latent = 6;
    c.seed = 2024;
    return c;
}

// Initialized networks with nonzero biases.
gan::ModelBundle random_bundle(gan::ModelKind kind, std::uint64_t seed) {
    auto b = gan::init_bundle(toy_config(kind), synthetic::tickers(2));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    auto jitter = [&](nn::MlpNetwork& net) {
        for (auto& p : net.affine_params()) p.bias = p.bias.unaryExpr([&](double) { return u(rng); });
    };
    jitter(b.conditioner);
    jitter(b.simulator);
    jitter(b.discriminator);
    if (b.decoder) jitter(*b.decoder);
    if (b.proposer) jitter(*b.proposer);
    b.trained = true;
    return b;
}

nn::BoundNetwork bound_from(const nn::MlpNetwork& net, std::span<const ad::Tensor> vars, std::size_t& offset) {
    nn::BoundNetwork b{&net, {}};
    const auto count = net.parameters().size();
    b.params.assign(vars.begin() + static_cast<std::ptrdiff_t>(offset),
                    vars.begin() + static_cast<std::ptrdiff_t>(offset + count));
    offset += count;
    return b;
}

void append_params(std::vector<Matrix*>& out, nn::MlpNetwork& net) {
    for (auto* p : net.parameters()) out.push_back(p);
}

// ---------------------------------------------------------------------------

void gradient_correctness(Outcome& o) {
    constexpr std::uint64_t kDropoutSeed = 77;
    ad::FiniteDifferenceOptions fd;
    fd.step = 1e-5;
    fd.max_entries_per_param = 12;
    fd.sample_seed = 5;

    std::mt19937_64 rng(31);
    const Index rows = 3;
    const Matrix cond = synthetic::random_matrix(rows, 16, rng, 0.3);
    const Matrix z = synthetic::random_matrix(rows, 6, rng);
    const Matrix eps = (Matrix(rows, 1) << 0.2, 0.55, 0.9).finished();
    Matrix real(rows, 24);
    real << cond, synthetic::random_matrix(rows, 8, rng, 0.3);

    double worst = 0.0;
    std::size_t checked = 0;
    auto record = [&](const std::string& name, const ad::FiniteDifferenceReport& r) {
        checked += r.entries_checked;
        worst = std::max(worst, r.max_relative_error);
        o.require(r.max_relative_error < 1e-4, name + " rel err " + fmt(r.max_relative_error) + " (tape " +
                                                   fmt(r.worst_tape) + ", numeric " + fmt(r.worst_numeric) + ")");
    };

    for (auto kind : {gan::ModelKind::acgan, gan::ModelKind::hybrid_acgan}) {
        auto b = random_bundle(kind, kind == gan::ModelKind::acgan ? 1 : 2);
        const std::string tag(gan::model_kind_name(kind));
        Matrix fake(rows, 24);
        fake << cond, gan::generate_futures(b.conditioner, b.simulator, cond, z, nn::Mode::infer, nullptr);

        // Critic objective, including the gradient penalty, over discriminator parameters.
        {
            std::vector<Matrix*> params;
            append_params(params, b.discriminator);
            const ad::ScalarFn fn = [&](ad::Tape& tape, std::span<const ad::Tensor> vars) {
                std::size_t off = 0;
                const auto disc = bound_from(b.discriminator, vars, off);
                nn::Rng drop(kDropoutSeed);
                const gan::Critic critic = [&](const ad::Tensor& x) {
                    return nn::forward(disc, x, nn::Mode::train, &drop);
                };
                return gan::critic_loss(critic, tape.constant(real), tape.constant(fake), eps, 10.0).loss;
            };
            record(tag + " critic", ad::finite_difference_check(fn, params, fd));
        }

        // Generator objectives: plain adversarial (CGAN form) and with the autoencoding penalty.
        for (bool with_decoder : {false, true}) {
            std::vector<Matrix*> params;
            append_params(params, b.conditioner);
            append_params(params, b.simulator);
            if (with_decoder) append_params(params, *b.decoder);
            const ad::ScalarFn fn = [&](ad::Tape& tape, std::span<const ad::Tensor> vars) {
                std::size_t off = 0;
                const auto bc = bound_from(b.conditioner, vars, off);
                const auto bs = bound_from(b.simulator, vars, off);
                std::optional<nn::BoundNetwork> bd;
                if (with_decoder) bd = bound_from(*b.decoder, vars, off);
                const auto disc = nn::bind(tape, b.discriminator, false);
                nn::Rng c_drop(kDropoutSeed);
                nn::Rng d_drop(kDropoutSeed + 1);
                nn::Rng x_drop(kDropoutSeed + 2);
                return gan::generator_loss(bc, bs, bd ? &*bd : nullptr, disc, tape.constant(cond), tape.constant(z),
                                           with_decoder ? 3.0 : 0.0, nn::Mode::train, {&c_drop, &d_drop, &x_drop})
                    .loss;
            };
            record(tag + (with_decoder ? " generator+ap" : " generator"), ad::finite_difference_check(fn, params, fd));
        }

        if (b.proposer) {
            std::vector<Matrix*> params;
            append_params(params, *b.proposer);
            const Matrix in = synthetic::random_matrix(rows, b.proposer->input_width(), rng, 0.5);
            const Matrix target = synthetic::random_matrix(rows, b.proposer->output_width(), rng, 0.5);
            const ad::ScalarFn fn = [&](ad::Tape& tape, std::span<const ad::Tensor> vars) {
                std::size_t off = 0;
                const auto bp = bound_from(*b.proposer, vars, off);
                nn::Rng drop(kDropoutSeed);
                const auto out = nn::forward(bp, tape.constant(in), nn::Mode::train, &drop);
                return ad::mean(ad::square(ad::sub(out, tape.constant(target))));
            };
            record(tag + " proposer", ad::finite_difference_check(fn, params, fd));
        }
    }
    o.note(std::to_string(checked) + " entries, max rel err " + fmt(worst));
}

void double_backprop(Outcome& o) {
    double worst_closed = 0.0;
    for (Index d : {1, 2, 5, 24, 60, 600}) {
        ad::Tape tape;
        std::mt19937_64 rng(static_cast<std::uint64_t>(d));
        const auto real = tape.constant(synthetic::random_matrix(4, d, rng));
        const auto fake = tape.constant(synthetic::random_matrix(4, d, rng));
        const Matrix eps = (Matrix(4, 1) << 0.0, 0.3, 0.7, 1.0).finished();
        const gan::Critic critic = [](const ad::Tensor& x) { return ad::sum_cols(x); };
        const double expected = std::pow(std::sqrt(static_cast<double>(d)) - 1.0, 2.0);
        worst_closed = std::max(worst_closed, std::abs(gan::gradient_penalty(critic, real, fake, eps).item() - expected));
    }
    o.require(worst_closed <= 1e-12, "sum critic penalty off by " + fmt(worst_closed));

    double worst_fd = 0.0;
    for (int trial = 0; trial < 6; ++trial) {
        std::mt19937_64 rng(100 + static_cast<std::uint64_t>(trial));
        const Index d = 6;
        const Index k = 5;
        Matrix w1 = synthetic::random_matrix(d, k, rng, 0.7);
        Matrix b1 = synthetic::random_matrix(1, k, rng, 0.3);
        Matrix w2 = synthetic::random_matrix(k, 1, rng, 0.7);
        Matrix b2 = synthetic::random_matrix(1, 1, rng, 0.3);
        const Matrix real = synthetic::random_matrix(4, d, rng);
        const Matrix fake = synthetic::random_matrix(4, d, rng);
        const Matrix eps = (Matrix(4, 1) << 0.1, 0.4, 0.6, 0.85).finished();
        const bool smooth = trial % 2 == 0;
        const ad::ScalarFn fn = [&](ad::Tape& tape, std::span<const ad::Tensor> v) {
            const gan::Critic critic = [&](const ad::Tensor& x) {
                const auto hidden = ad::affine(x, v[0], v[1]);
                return ad::affine(smooth ? ad::tanh(hidden) : ad::leaky_relu(hidden, 0.2), v[2], v[3]);
            };
            return gan::gradient_penalty(critic, tape.constant(real), tape.constant(fake), eps);
        };
        std::vector<Matrix*> params{&w1, &b1, &w2, &b2};
        worst_fd = std::max(worst_fd, ad::finite_difference_check(fn, params).max_relative_error);
    }
    o.require(worst_fd < 1e-4, "2-layer penalty rel err " + fmt(worst_fd));
    o.note("closed form err " + fmt(worst_closed) + ", 2-layer rel err " + fmt(worst_fd));
}

void normalization(Outcome& o) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_int_distribution<int> pick_n(1, 4);
    std::uniform_int_distribution<int> pick_h(2, 40);
    std::uniform_int_distribution<int> pick_f(1, 20);
    double worst = 0.0;
    bool bit_equal = true;
    for (int trial = 0; trial < 10000; ++trial) {
        const Index n = pick_n(rng);
        const Index h = pick_h(rng);
        const Index f = pick_f(rng);
        Matrix window(n, h + f);
        for (Index i = 0; i < n; ++i) {
            double p = std::exp(3.0 * g(rng));
            const double vol = trial % 97 == 0 ? 0.0 : 0.03 * std::abs(g(rng));
            for (Index t = 0; t < h + f; ++t) {
                window(i, t) = p;
                p *= std::exp(vol * g(rng));
            }
        }
        const auto standard = gan::window_stats(window, h, norm::Regime::standard, false, nullptr, false);
        const auto eavesdrop = gan::window_stats(window, h, norm::Regime::eavesdrop, true, nullptr, false);
        std::vector<norm::NormStats> hybrid;
        for (const auto& s : standard) hybrid.push_back(norm::make_hybrid_stats(s.scale, s.center * (1.0 + 0.1 * g(rng))));
        const std::vector<norm::NormStats>* regimes[] = {&standard, &eavesdrop, &hybrid};
        for (const auto* stats : regimes) {
            const Matrix back = gan::denormalize_block(gan::normalize_block(window, *stats), *stats);
            const double err = ((back - window).array().abs() / window.array().abs().max(1.0)).maxCoeff();
            worst = std::max(worst, err);
        }
        const auto copied = gan::window_stats(window, h, norm::Regime::hybrid, false, nullptr, true);
        for (Index i = 0; i < n; ++i) {
            const auto& s = standard[static_cast<std::size_t>(i)];
            const auto& c = copied[static_cast<std::size_t>(i)];
            bit_equal = bit_equal && s.center == c.center && s.scale == c.scale;
        }
        bit_equal = bit_equal && gan::normalize_block(window, copied) == gan::normalize_block(window, standard);
    }
    o.require(worst < 1e-10, "round-trip error " + fmt(worst));
    o.require(bit_equal, "hybrid with copied mean differs from standard");
    o.note("10000 windows, worst round-trip " + fmt(worst) + ", copy-mean hybrid bit-equal");
}

// Best Sharpe ratio over the simplex grid with the given step count.
double grid_oracle(const pf::MomentEstimate& m, int steps) {
    const Index n = m.mean_returns.size();
    const double h = 1.0 / steps;
    double best = -std::numeric_limits<double>::infinity();
    Vector u = Vector::Zero(n);
    Vector d = Vector::Zero(n);
    d(n - 2) = h;
    d(n - 1) = -h;
    const double dsd = d.dot(m.covariance * d);
    const double dr = d.dot(m.mean_returns);
    std::function<void(Index, int)> walk = [&](Index pos, int left) {
        if (pos == n - 2) {
            u(n - 2) = 0.0;
            u(n - 1) = left * h;
            const Vector su = m.covariance * u;
            const double usu = u.dot(su);
            const double usd = su.dot(d);
            const double ur = u.dot(m.mean_returns);
            for (int k = 0; k <= left; ++k) {
                const double t = k;
                const double v = usu + 2.0 * t * usd + t * t * dsd;
                const double r = ur + t * dr;
                if (v > 0.0) best = std::max(best, r / std::sqrt(v));
            }
            return;
        }
        for (int k = 0; k <= left; ++k) {
            u(pos) = k * h;
            walk(pos + 1, left - k);
        }
        u(pos) = 0.0;
    };
    walk(0, steps);
    return best;
}

void max_sharpe(Outcome& o) {
    std::mt19937_64 rng(12);
    double worst_gap = -std::numeric_limits<double>::infinity();
    double worst_scale = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const Index n = 2 + trial % 3;
        const Matrix a = synthetic::random_matrix(n, n, rng, 0.1);
        pf::MomentEstimate m;
        m.covariance = a * a.transpose() + 1e-3 * Matrix::Identity(n, n);
        do {
            m.mean_returns = synthetic::random_matrix(n, 1, rng, 0.05);
        } while (m.mean_returns.maxCoeff() <= 0.0);
        m.sample_count = 100;
        const Vector w = pf::max_sharpe_weights(m);
        o.require(pf::on_simplex(w, 1e-10), "solver left the simplex");
        const double gap = grid_oracle(m, 1000) - pf::sharpe_ratio(w, m);
        worst_gap = std::max(worst_gap, gap);
        o.require(gap <= 1e-3, "instance " + std::to_string(trial) + " trails grid by " + fmt(gap));
        for (double factor : {1e-3, 42.0}) {
            pf::MomentEstimate scaled = m;
            scaled.covariance *= factor;
            worst_scale = std::max(worst_scale, (pf::max_sharpe_weights(scaled) - w).cwiseAbs().maxCoeff());
        }
    }
    o.require(worst_scale < 1e-6, "covariance scaling moved weights by " + fmt(worst_scale));

    pf::MomentEstimate two;
    two.mean_returns = (Vector(2) << 0.01, 0.01).finished();
    two.covariance = (Matrix(2, 2) << 2e-4, 0.0, 0.0, 1e-4).finished();
    two.sample_count = 100;
    const Vector w2 = pf::max_sharpe_weights(two);
    const double closed = std::max(std::abs(w2(0) - 1.0 / 3.0), std::abs(w2(1) - 2.0 / 3.0));
    o.require(closed < 1e-4, "two-asset tangency off by " + fmt(closed));
    o.note("worst grid gap " + fmt(worst_gap) + ", scale drift " + fmt(worst_scale) + ", tangency err " + fmt(closed));
}

void accounting(Outcome& o) {
    for (data::DayIndex d = 12; d <= 80; d += 17) {
        o.require(static_cast<data::DayIndex>(data::training_index_set(d, 12).size()) == d - 12 + 1,
                  "|S1| wrong for D=" + std::to_string(d));
    }
    for (data::DayIndex k = 12; k <= 40; k += 4) {
        o.require(static_cast<data::DayIndex>(data::inference_index_set(k, 8, 4).size()) == (k - 8) / 4,
                  "|S2| wrong for K=" + std::to_string(k));
    }
    {
        auto c = toy_config(gan::ModelKind::acgan);
        c.epochs = 1;
        const auto frame = synthetic::sinusoid_drift_frame(37);
        const auto trained = gan::train(frame, c);
        o.require(trained.counters.windows_visited == 37 - 12 + 1, "epoch did not visit every training window");
    }

    const auto test = synthetic::random_walk_frame(2, 8 + 5 * 4, 21, 0.02);
    const auto starts = data::inference_index_set(test.day_count(), 8, 4);
    std::size_t perturbations = 0;
    for (auto kind : {gan::ModelKind::cgan, gan::ModelKind::acgan, gan::ModelKind::hybrid_cgan,
                      gan::ModelKind::hybrid_acgan}) {
        const auto b = random_bundle(kind, 3);
        const auto base = gan::simulate_paths(b, test, 4, 8);
        for (const auto& p : base.paths) {
            o.require(p.cols() == test.day_count(), "path length");
            o.require(p.leftCols(8) == test.prices().leftCols(8), "prefix differs from real prices");
        }
        for (const auto s : starts) {
            Matrix prices = test.prices();
            const Index from = static_cast<Index>(s - 1);
            prices.rightCols(prices.cols() - from).array() *= 1.37;
            prices.rightCols(prices.cols() - from).row(1).array() += 4.0;
            const auto moved = gan::simulate_paths(b, data::PriceFrame(test.tickers(), test.dates(), prices), 4, 8);
            const Index keep = from + 4;
            for (std::size_t d = 0; d < base.paths.size(); ++d) {
                o.require(moved.paths[d].leftCols(keep) == base.paths[d].leftCols(keep),
                          std::string(gan::model_kind_name(kind)) + " block at day " + std::to_string(s) +
                              " saw later prices");
            }
            ++perturbations;
        }
    }
    o.note("index sets, prefix and " + std::to_string(perturbations) + " perturbations checked");
}

void reductions(Outcome& o) {
    const auto frame = synthetic::sinusoid_drift_frame(40);
    auto base_config = [](gan::ModelKind kind) {
        auto c = toy_config(kind);
        c.epochs = 3;
        c.proposer.epochs = 2;
        return c;
    };

    auto ac = base_config(gan::ModelKind::acgan);
    ac.lambda2 = 0.0;
    const auto cgan = gan::train(frame, base_config(gan::ModelKind::cgan));
    const auto acgan0 = gan::train(frame, ac);
    o.require(same_log(cgan, acgan0), "ACGAN(lambda2=0) losses differ from CGAN");
    o.require(same_params(cgan.conditioner, acgan0.conditioner) && same_params(cgan.simulator, acgan0.simulator) &&
                  same_params(cgan.discriminator, acgan0.discriminator),
              "ACGAN(lambda2=0) parameters differ from CGAN");

    const auto acgan = gan::train(frame, base_config(gan::ModelKind::acgan));
    const std::pair<gan::ModelKind, const gan::ModelBundle*> pairs[] = {{gan::ModelKind::hybrid_cgan, &cgan},
                                                                        {gan::ModelKind::hybrid_acgan, &acgan}};
    for (const auto& [kind, plain] : pairs) {
        auto c = base_config(kind);
        c.copy_mean_proposer = true;
        c.hybrid_output_scale = 1.0;
        const auto hybrid = gan::train(frame, c);
        const std::string name(gan::model_kind_name(kind));
        o.require(same_log(hybrid, *plain), name + " with copied mean: losses differ");
        o.require(same_params(hybrid.conditioner, plain->conditioner) && same_params(hybrid.simulator, plain->simulator) &&
                      same_params(hybrid.discriminator, plain->discriminator),
                  name + " with copied mean: parameters differ");
        if (plain->decoder) o.require(same_params(*hybrid.decoder, *plain->decoder), name + ": decoder differs");
    }
    o.require(!same_log(cgan, acgan), "autoencoding penalty had no effect");
    o.note("3-epoch trajectories bit-identical");
}

void proposer_learning(Outcome& o) {
    const double slope = 1.0;
    const auto frame = synthetic::linear_drift_frame(2, 200, slope);
    gan::TrainConfig c;
    c.kind = gan::ModelKind::hybrid_cgan;
    c.regime = norm::Regime::hybrid;
    c.seed = 11;
    const auto r = gan::train_proposer(frame, c);

    // Copy-mean baseline on the same held-out windows.
    const auto starts = data::training_index_set(frame.day_count(), c.window());
    const auto val = static_cast<std::size_t>(std::ceil(c.proposer.validation_fraction * static_cast<double>(starts.size())));
    double baseline = 0.0;
    for (std::size_t k = starts.size() - val; k < starts.size(); ++k) {
        const Matrix w = frame.prices().middleCols(static_cast<Index>(starts[k] - 1), c.window());
        const Vector err = w.rowwise().mean() - w.leftCols(c.hist).rowwise().mean();
        baseline += err.squaredNorm() / static_cast<double>(err.size());
    }
    baseline /= static_cast<double>(val);
    const double bound = 0.25 * std::pow(slope * static_cast<double>(c.fut) / 2.0, 2.0);
    o.require(std::abs(baseline - 4.0 * bound) < 1e-9, "copy-mean baseline " + fmt(baseline));
    o.require(r.validation_mse < bound, "validation MSE " + fmt(r.validation_mse) + " >= " + fmt(bound));
    o.note("validation MSE " + fmt(r.validation_mse) + " vs bound " + fmt(bound) + " (copy-mean " + fmt(baseline) + ")");
}

void smoke(Outcome& o) {
    // 40 training days (29 windows) keep two 200-epoch runs inside the time budget on one core.
    const auto all = synthetic::sinusoid_drift_frame(80);
    const auto [train_frame, test_frame] = data::split_train_test(all, all.dates()[39]);
    for (auto kind : {gan::ModelKind::acgan, gan::ModelKind::hybrid_cgan}) {
        const std::string name(gan::model_kind_name(kind));
        auto c = toy_config(kind);
        c.epochs = 200;
        c.proposer.epochs = 200;
        const auto bundle = gan::train(train_frame, c);
        bool finite = bundle.log.size() == 200;
        for (const auto& r : bundle.log) {
            finite = finite && std::isfinite(r.critic_loss) && std::isfinite(r.generator_loss) &&
                     std::isfinite(r.wasserstein) && (!r.ap_loss || std::isfinite(*r.ap_loss));
        }
        for (const auto& r : bundle.proposer_log) finite = finite && std::isfinite(r.validation_mse);
        o.require(finite, name + ": non-finite loss");

        bt::GanRunOptions opt;
        opt.eta = 4;
        opt.n_draws = 50;
        opt.seed = 3;
        gan::SimulationResult sim;
        const auto run = bt::run_gan(bundle, test_frame, opt, &sim);
        o.require(sim.paths.size() == 50, name + ": wrong number of draws");
        if (!gan::is_hybrid(kind)) {
            o.require(sim.normalized_min > -1.0 && sim.normalized_max < 1.0,
                      name + ": normalized output outside (-1,1)");
        }
        for (const auto& w : run.schedule.weights) {
            o.require(std::abs(w.sum() - 1.0) <= 1e-12 && w.minCoeff() >= -1e-12, name + ": mean weights off simplex");
        }
        o.require(run.draw_scatter.size() == 50 && run.values.allFinite(), name + ": incomplete GAN backtest");
        o.note(name + " sharpe " + fmt(run.metrics.annual_sharpe));
    }
    const auto mk = bt::run_markowitz(test_frame, 8, 4, 0.0);
    o.require(!mk.schedule.days.empty() && mk.values.allFinite(), "Markowitz baseline missing");
    o.note("markowitz sharpe " + fmt(mk.metrics.annual_sharpe));
}

void backtest_oracles(Outcome& o) {
    {
        const auto frame = synthetic::make_frame(2, 50, [](Index i, Index t) {
            return i == 0 ? 40.0 + 40.0 * static_cast<double>(t) / 49.0 : 10.0 + std::sin(static_cast<double>(t));
        });
        const bt::WeightSchedule hold{{1}, {(Vector(2) << 1.0, 0.0).finished()}};
        const auto v = bt::portfolio_value_series(hold, frame.prices());
        o.require(v(v.size() - 1) == 2.0, "doubling asset ends at " + fmt(v(v.size() - 1)));
    }

    std::mt19937_64 rng(77);
    std::exponential_distribution<double> e(1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 300; ++trial) {
        const Index n = 2 + trial % 4;
        const auto frame = synthetic::random_walk_frame(n, 80, 1000 + static_cast<std::uint64_t>(trial), 0.02);
        const Matrix& p = frame.prices();
        bt::WeightSchedule s;
        for (data::DayIndex d = 1 + trial % 7; d <= 80; d += 1 + static_cast<data::DayIndex>(rng() % 12)) {
            Vector w(n);
            for (Index i = 0; i < n; ++i) w(i) = e(rng);
            s.days.push_back(d);
            s.weights.push_back(w / w.sum());
        }
        const auto v = bt::portfolio_value_series(s, p);
        // Self-financing: value carried into each day equals the shares held
        // since the last rebalance, marked at that day's prices.
        Vector shares = Vector::Zero(n);
        std::size_t next = 0;
        for (data::DayIndex d = s.days.front(); d <= 80; ++d) {
            const Vector price = p.col(d - 1);
            const double value = v(d - s.days.front());
            if (next > 0) worst = std::max(worst, std::abs(shares.dot(price) - value) / value);
            if (next < s.days.size() && s.days[next] == d) {
                shares = (s.weights[next].array() * value / price.array()).matrix();
                ++next;
            }
        }
    }
    o.require(worst < 1e-12, "self-financing violated by " + fmt(worst));

    const auto test = synthetic::random_walk_frame(3, 8 + 6 * 4, 5, 0.02);
    const auto mk = bt::markowitz_schedule(test.prices(), 8, 4, 0.0);
    const auto bundle = random_bundle(gan::ModelKind::acgan, 4);
    const auto draws = [&](const data::PriceFrame& f) {
        const auto sim = gan::simulate_paths(bundle, f, 3, 6);
        return bt::strategy_from_paths(sim.paths, f, 8, 4, 4, 0.0);
    };
    std::size_t checks = 0;
    const auto test2 = synthetic::random_walk_frame(2, 8 + 6 * 4, 5, 0.02);
    const auto gan_base = draws(test2);
    for (std::size_t j = 0; j < mk.days.size(); ++j) {
        const auto t = mk.days[j];
        Matrix p3 = test.prices();
        p3.rightCols(p3.cols() - (t - 1)).array() *= 0.61;
        p3.rightCols(p3.cols() - (t - 1)).row(2).array() *= 2.3;
        const auto mk2 = bt::markowitz_schedule(p3, 8, 4, 0.0);
        for (std::size_t k = 0; k <= j; ++k) o.require(mk2.weights[k] == mk.weights[k], "Markowitz used later prices");

        Matrix p2 = test2.prices();
        p2.rightCols(p2.cols() - (t - 1)).array() *= 1.45;
        p2.rightCols(p2.cols() - (t - 1)).row(0).array() *= 0.5;
        const auto moved = draws(data::PriceFrame(test2.tickers(), test2.dates(), p2));
        for (std::size_t d = 0; d < gan_base.size(); ++d) {
            for (std::size_t k = 0; k <= j; ++k) {
                o.require(moved[d].weights[k] == gan_base[d].weights[k], "GAN draw schedule used later prices");
            }
        }
        ++checks;
    }
    o.note("doubling exact, self-financing err " + fmt(worst) + ", " + std::to_string(checks) +
           " perturbation days per strategy");
}

void protocol_constants(Outcome& o) {
    cli::RunConfig rc;
    cli::finalize(rc);
    const gan::TrainConfig& t = rc.train;
    const gan::TrainConfig raw;
    const bt::GanRunOptions g;
    o.require(t == raw, "run configuration alters training defaults");
    o.require(t.hist == 40 && t.fut == 20 && t.window() == 60, "window lengths");
    o.require(t.latent == 100, "latent dimension");
    o.require(t.epochs == 1000, "epochs");
    o.require(t.lambda1 == 10.0 && t.lambda2 == 3.0, "loss weights");
    o.require(t.adam.lr == 2e-5 && t.adam.beta1 == 0.5 && t.adam.beta2 == 0.999, "Adam settings");
    o.require(rc.r_f == 0.0 && g.r_f == 0.0, "risk-free rate");
    o.require(bt::rebalance_period("defensive") == 10 && bt::rebalance_period("balanced") == 15 &&
                  bt::rebalance_period("aggressive") == 20,
              "rebalance periods");
    o.require(rc.eta == 20 && g.eta == 20, "default rebalance period");
    o.require(rc.n_draws == 1000 && g.n_draws == 1000, "draw count");
    o.note("h=40 f=20 w=60 m=100 T=1000 lambda1=10 lambda2=3 lr=2e-5 betas=(0.5,0.999) r_f=0 eta={10,15,20} "
           "n_draws=1000");
}

struct Criterion {
    const char* name;
    double limit_seconds;  // 0: no runtime bound
    void (*run)(Outcome&);
};

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
    // Keep large matrices on the heap instead of fresh mmap pages per allocation.
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    const Criterion criteria[] = {
        {"gradient-correctness", 60.0, gradient_correctness},
        {"double-backprop-penalty", 0.0, double_backprop},
        {"normalization", 0.0, normalization},
        {"max-sharpe-solver", 0.0, max_sharpe},
        {"window-accounting", 0.0, accounting},
        {"reductions", 0.0, reductions},
        {"proposer-learning", 300.0, proposer_learning},
        {"end-to-end-smoke", 600.0, smoke},
        {"backtest-oracles", 0.0, backtest_oracles},
        {"protocol-constants", 0.0, protocol_constants},
    };
    const std::vector<std::string> only(argv + 1, argv + argc);
    int failures = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
        Outcome o;
        const auto start = std::chrono::steady_clock::now();
        try {
            c.run(o);
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.limit_seconds > 0.0) {
            o.require(secs < c.limit_seconds, "runtime " + fmt(secs) + " s exceeds " + fmt(c.limit_seconds) + " s");
        }
        if (!o.pass) ++failures;
        std::printf("%s %s: %s [%.1f s%s]\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.str().c_str(), secs,
                    c.limit_seconds > 0.0 ? (", limit " + fmt(c.limit_seconds) + " s").c_str() : "");
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
