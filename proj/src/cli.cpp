#include "hcgan/cli.hpp"

#include "hcgan/archive.hpp"
#include "hcgan/backtest.hpp"
#include "hcgan/errors.hpp"
#include "hcgan/market_data.hpp"
#include "hcgan/report.hpp"
#include "hcgan/run_config.hpp"
#include "hcgan/scenario_gan.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>

namespace hcgan::cli {

namespace fs = std::filesystem;

namespace {

std::string g10(double v) {
    char buffer[40];
    std::snprintf(buffer, sizeof buffer, "%.10g", v);
    return buffer;
}

std::string g15(double v) {
    char buffer[40];
    std::snprintf(buffer, sizeof buffer, "%.15g", v);
    return buffer;
}

std::string flag_name(const std::string& key) {
    std::string s = key;
    std::replace(s.begin(), s.end(), '_', '-');
    return "--" + s;
}

struct CommandOptions {
    std::string config_file;
    std::map<std::string, std::string> values;
    std::vector<std::string> sets;
    bool allow_forward_bias = false;
};

void add_config_options(CLI::App* sub, CommandOptions& opts) {
    sub->add_option("--config", opts.config_file, "key=value configuration file");
    for (const auto& key : config_keys()) {
        if (key == "allow_forward_bias") continue;
        sub->add_option(flag_name(key), opts.values[key], "override config key " + key);
    }
    sub->add_flag("--allow-forward-bias", opts.allow_forward_bias, "permit the eavesdrop diagnostic regime");
    sub->add_option("--set", opts.sets, "extra key=value override")->take_all();
}

RunConfig resolve(CLI::App* sub, const CommandOptions& opts) {
    RunConfig config;
    if (!opts.config_file.empty()) {
        for (const auto& [k, v] : read_config_file(opts.config_file)) apply_setting(config, k, v);
    }
    for (const auto& key : config_keys()) {
        if (key == "allow_forward_bias") continue;
        if (sub->count(flag_name(key)) > 0) apply_setting(config, key, opts.values.at(key));
    }
    for (const auto& kv : opts.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
        apply_setting(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (opts.allow_forward_bias) config.train.allow_forward_bias = true;
    finalize(config);
    return config;
}

data::PriceFrame load_frame(const RunConfig& c) {
    if (c.data.empty()) throw ValidationError("no price file given (set data= or --data)");
    std::optional<std::vector<std::string>> tickers;
    if (!c.tickers.empty()) tickers = c.tickers;
    return data::load_price_csv(c.data, tickers);
}

data::PriceFrame train_segment(const RunConfig& c) {
    auto frame = load_frame(c);
    if (c.split_date.empty()) return frame;
    return data::split_train_test(frame, c.split_date).first;
}

data::PriceFrame test_segment(const RunConfig& c) {
    auto frame = load_frame(c);
    if (!c.split_date.empty()) frame = data::split_train_test(frame, c.split_date).second;
    if (c.test_days > 0) {
        if (c.test_days > frame.day_count()) {
            throw ValidationError("test_days " + std::to_string(c.test_days) + " exceeds the " +
                                  std::to_string(frame.day_count()) + " available test days");
        }
        frame = frame.slice_days(1, c.test_days);
    }
    return frame;
}

fs::path prepare_out(const RunConfig& c) {
    const fs::path dir(c.out);
    fs::create_directories(dir);
    std::ofstream cfg(dir / "effective_config.txt", std::ios::trunc);
    if (!cfg) throw ValidationError("cannot write to output directory '" + dir.string() + "'");
    cfg << effective_config_text(c);
    return dir;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot write '" + path.string() + "'");
    return out;
}

gan::ModelBundle load_bundle_for(const RunConfig& c) {
    const fs::path path = c.bundle.empty() ? fs::path(c.out) / "model.bin" : fs::path(c.bundle);
    if (!fs::exists(path)) throw ValidationError("model archive '" + path.string() + "' not found (set bundle=)");
    return archive::load_bundle(path);
}

void write_training_log(const gan::ModelBundle& b, const fs::path& path) {
    auto out = open_out(path);
    out << "epoch,critic_loss,generator_loss,ap_loss,proposer_mse,wasserstein\n";
    const std::size_t rows = std::max(b.log.size(), b.proposer_log.size());
    for (std::size_t k = 0; k < rows; ++k) {
        out << (k + 1) << ',';
        if (k < b.log.size()) {
            const auto& r = b.log[k];
            out << g10(r.critic_loss) << ',' << g10(r.generator_loss) << ',' << (r.ap_loss ? g10(*r.ap_loss) : "");
        } else {
            out << ",,";
        }
        out << ',' << (k < b.proposer_log.size() ? g10(b.proposer_log[k].validation_mse) : "") << ',';
        if (k < b.log.size()) out << g10(b.log[k].wasserstein);
        out << '\n';
    }
}

int cmd_ingest(const RunConfig& c, bool write_copy, std::ostream& out) {
    const auto frame = load_frame(c);
    out << "N=" << frame.asset_count() << " D=" << frame.day_count() << " first=" << frame.dates().front()
        << " last=" << frame.dates().back() << '\n';
    out << "tickers=";
    for (std::size_t i = 0; i < frame.tickers().size(); ++i) out << (i ? "," : "") << frame.tickers()[i];
    out << '\n';
    if (write_copy) {
        fs::create_directories(c.out);
        data::write_price_csv(frame, fs::path(c.out) / "prices.csv");
        out << "wrote " << (fs::path(c.out) / "prices.csv").string() << '\n';
    }
    return kExitOk;
}

int cmd_train(const RunConfig& c, std::ostream& out) {
    const auto frame = train_segment(c);
    const auto dir = prepare_out(c);
    out << "training " << gan::model_kind_name(c.train.kind) << " on N=" << frame.asset_count()
        << " D=" << frame.day_count() << " for " << c.train.epochs << " epochs\n";
    const auto report_every = std::max<std::int64_t>(1, c.train.epochs / 10);
    const auto bundle = gan::train(frame, c.train, [&](const gan::EpochRecord& r) {
        if (r.epoch % report_every == 0 || r.epoch == c.train.epochs) {
            out << "epoch " << r.epoch << " critic " << g10(r.critic_loss) << " generator " << g10(r.generator_loss)
                << '\n';
        }
    });
    archive::save_bundle(bundle, dir / "model.bin");
    write_training_log(bundle, dir / "training_log.csv");
    out << "wrote " << (dir / "model.bin").string() << " and " << (dir / "training_log.csv").string() << '\n';
    return kExitOk;
}

int cmd_simulate(const RunConfig& c, std::ostream& out) {
    const auto bundle = load_bundle_for(c);
    const auto frame = test_segment(c);
    const auto dir = prepare_out(c);
    const auto sim = gan::simulate_paths(bundle, frame, c.n_draws, c.train.seed, {c.jobs, c.train.allow_forward_bias});
    {
        auto paths = open_out(dir / "paths.csv");
        paths << "draw,date";
        for (const auto& t : frame.tickers()) paths << ',' << t;
        paths << '\n';
        for (std::size_t d = 0; d < sim.paths.size(); ++d) {
            for (Eigen::Index day = 0; day < frame.day_count(); ++day) {
                paths << (d + 1) << ',' << frame.dates()[static_cast<std::size_t>(day)];
                for (Eigen::Index i = 0; i < frame.asset_count(); ++i) paths << ',' << g10(sim.paths[d](i, day));
                paths << '\n';
            }
        }
    }
    {
        const std::size_t shown = std::min<std::size_t>(5, sim.paths.size());
        auto overlay = open_out(dir / "overlay.csv");
        overlay << "date,ticker,real";
        for (std::size_t d = 0; d < shown; ++d) overlay << ",draw_" << (d + 1);
        overlay << '\n';
        for (Eigen::Index i = 0; i < frame.asset_count(); ++i) {
            for (Eigen::Index day = 0; day < frame.day_count(); ++day) {
                overlay << frame.dates()[static_cast<std::size_t>(day)] << ','
                        << frame.tickers()[static_cast<std::size_t>(i)] << ',' << g10(frame.prices()(i, day));
                for (std::size_t d = 0; d < shown; ++d) overlay << ',' << g10(sim.paths[d](i, day));
                overlay << '\n';
            }
        }
    }
    out << "simulated " << sim.paths.size() << " draws over " << frame.day_count() << " days; wrote "
        << (dir / "paths.csv").string() << " and " << (dir / "overlay.csv").string() << '\n';
    return kExitOk;
}

void write_weights(const bt::BacktestResult& r, const data::PriceFrame& frame, const fs::path& path) {
    auto out = open_out(path);
    out << "date,ticker,weight\n";
    for (std::size_t j = 0; j < r.schedule.days.size(); ++j) {
        const auto& date = frame.dates()[static_cast<std::size_t>(r.schedule.days[j] - 1)];
        for (Eigen::Index i = 0; i < frame.asset_count(); ++i) {
            out << date << ',' << frame.tickers()[static_cast<std::size_t>(i)] << ',' << g15(r.schedule.weights[j](i))
                << '\n';
        }
    }
}

int cmd_backtest(const RunConfig& c, std::ostream& out) {
    const auto frame = test_segment(c);
    std::vector<bt::BacktestResult> results;
    std::optional<gan::ModelBundle> bundle;
    if (!c.bundle.empty()) bundle = load_bundle_for(c);
    const auto dir = prepare_out(c);
    if (bundle) {
        bt::GanRunOptions options;
        options.eta = c.eta;
        options.n_draws = c.n_draws;
        options.seed = c.train.seed;
        options.r_f = c.r_f;
        options.jobs = c.jobs;
        options.allow_forward_bias = c.train.allow_forward_bias;
        results.push_back(bt::run_gan(*bundle, frame, options));
    }
    const auto hist = bundle ? bundle->config.hist : c.train.hist;
    results.push_back(bt::run_markowitz(frame, hist, c.eta, c.r_f));

    {
        auto vs = open_out(dir / "value_series.csv");
        vs << "date";
        for (const auto& r : results) vs << ',' << r.label;
        vs << '\n';
        for (std::size_t t = 0; t < results.front().dates.size(); ++t) {
            vs << results.front().dates[t];
            for (const auto& r : results) vs << ',' << g15(r.values(static_cast<Eigen::Index>(t)));
            vs << '\n';
        }
    }
    if (bundle) {
        auto sc = open_out(dir / "scatter.csv");
        sc << "draw,annual_return,annual_sharpe\n";
        const auto& scatter = results.front().draw_scatter;
        for (std::size_t d = 0; d < scatter.size(); ++d) {
            sc << (d + 1) << ',' << g15(scatter[d].annual_return) << ',' << g15(scatter[d].annual_sharpe) << '\n';
        }
    }
    auto summary = open_out(dir / "summary.csv");
    summary << "label,annual_return,annual_sharpe,degenerate,final_value\n";
    for (const auto& r : results) {
        write_weights(r, frame, dir / ("weights_" + r.label + ".csv"));
        summary << r.label << ',' << g15(r.metrics.annual_return) << ',' << g15(r.metrics.annual_sharpe) << ','
                << (r.metrics.degenerate ? 1 : 0) << ',' << g15(r.values(r.values.size() - 1)) << '\n';
        out << r.label << ": annual return " << g10(r.metrics.annual_return) << ", annual Sharpe "
            << g10(r.metrics.annual_sharpe) << (r.metrics.degenerate ? " (degenerate)" : "") << '\n';
    }
    out << "wrote backtest exports to " << dir.string() << '\n';
    return kExitOk;
}

int cmd_report(const std::string& run_dir, std::ostream& out) {
    for (const auto& file : report::render_run(run_dir)) out << "wrote " << file.string() << '\n';
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Conditional GAN scenario generation and max-Sharpe backtesting", "hcgan"};
    app.require_subcommand(1);

    CommandOptions ingest_opts;
    bool ingest_write = false;
    auto* ingest = app.add_subcommand("ingest", "validate a price file and print a summary");
    add_config_options(ingest, ingest_opts);
    ingest->add_flag("--write", ingest_write, "also write the selected columns to <out>/prices.csv");

    CommandOptions train_opts;
    auto* train = app.add_subcommand("train", "train a model bundle");
    add_config_options(train, train_opts);

    CommandOptions sim_opts;
    auto* simulate = app.add_subcommand("simulate", "generate synthetic test-period paths");
    add_config_options(simulate, sim_opts);

    CommandOptions bt_opts;
    auto* backtest = app.add_subcommand("backtest", "backtest the mean strategy and the Markowitz baseline");
    add_config_options(backtest, bt_opts);

    std::string report_dir;
    auto* report_cmd = app.add_subcommand("report", "render SVG plots from a run directory");
    report_cmd->add_option("run_dir", report_dir, "directory holding backtest exports")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    }

    try {
        if (ingest->parsed()) return cmd_ingest(resolve(ingest, ingest_opts), ingest_write, out);
        if (train->parsed()) return cmd_train(resolve(train, train_opts), out);
        if (simulate->parsed()) return cmd_simulate(resolve(simulate, sim_opts), out);
        if (backtest->parsed()) return cmd_backtest(resolve(backtest, bt_opts), out);
        if (report_cmd->parsed()) return cmd_report(report_dir, out);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const NumericError& e) {
        err << "numeric fault: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return kExitValidation;
}

}  // namespace hcgan::cli
