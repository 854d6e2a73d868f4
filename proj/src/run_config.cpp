#include "hcgan/run_config.hpp"

#include "hcgan/backtest.hpp"
#include "hcgan/errors.hpp"
#include "hcgan/market_data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hcgan::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::int64_t to_int(const std::string& key, const std::string& v) {
    std::int64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
        throw ValidationError("config " + key + ": expected an integer, got '" + v + "'");
    }
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
        throw ValidationError("config " + key + ": expected a number, got '" + v + "'");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("config " + key + ": expected true|false, got '" + v + "'");
}

std::string fmt(double v) {
    char buffer[40];
    std::snprintf(buffer, sizeof buffer, "%.17g", v);
    return buffer;
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{
        "data",        "tickers",   "split_date",          "test_days", "model_kind",         "regime",
        "hist",        "fut",       "latent",              "epochs",    "lambda1",            "lambda2",
        "lr",          "beta1",     "beta2",               "critic_steps", "batch_size",      "proposer_epochs",
        "proposer_batch_size", "proposer_lr", "hybrid_output_scale", "eta", "n_draws", "r_f", "seed",
        "allow_forward_bias", "jobs", "bundle",           "out"};
    return keys;
}

void apply_setting(RunConfig& c, const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    auto& t = c.train;
    if (key == "data") {
        c.data = v;
    } else if (key == "tickers") {
        c.tickers.clear();
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) throw ValidationError("config tickers: empty ticker in '" + v + "'");
            c.tickers.push_back(item);
        }
    } else if (key == "split_date") {
        if (!v.empty() && !data::is_iso_date(v)) throw ValidationError("config split_date: '" + v + "' is not YYYY-MM-DD");
        c.split_date = v;
    } else if (key == "test_days") {
        c.test_days = to_int(key, v);
    } else if (key == "model_kind") {
        t.kind = gan::parse_model_kind(v);
    } else if (key == "regime") {
        if (v == "auto" || v.empty()) {
            c.regime_set = false;
        } else {
            t.regime = norm::parse_regime(v);
            c.regime_set = true;
        }
    } else if (key == "hist") {
        t.hist = to_int(key, v);
    } else if (key == "fut") {
        t.fut = to_int(key, v);
    } else if (key == "latent") {
        t.latent = to_int(key, v);
    } else if (key == "epochs") {
        t.epochs = to_int(key, v);
    } else if (key == "lambda1") {
        t.lambda1 = to_double(key, v);
    } else if (key == "lambda2") {
        t.lambda2 = to_double(key, v);
    } else if (key == "lr") {
        t.adam.lr = to_double(key, v);
    } else if (key == "beta1") {
        t.adam.beta1 = to_double(key, v);
    } else if (key == "beta2") {
        t.adam.beta2 = to_double(key, v);
    } else if (key == "critic_steps") {
        t.critic_steps = to_int(key, v);
    } else if (key == "batch_size") {
        t.batch_size = to_int(key, v);
    } else if (key == "proposer_epochs") {
        t.proposer.epochs = to_int(key, v);
    } else if (key == "proposer_batch_size") {
        t.proposer.batch_size = to_int(key, v);
    } else if (key == "proposer_lr") {
        t.proposer.adam.lr = to_double(key, v);
    } else if (key == "hybrid_output_scale") {
        t.hybrid_output_scale = to_double(key, v);
    } else if (key == "eta") {
        if (v == "defensive" || v == "balanced" || v == "aggressive") {
            c.eta = bt::rebalance_period(v);
        } else {
            c.eta = to_int(key, v);
        }
    } else if (key == "n_draws") {
        c.n_draws = to_int(key, v);
    } else if (key == "r_f") {
        c.r_f = to_double(key, v);
    } else if (key == "seed") {
        const auto s = to_int(key, v);
        if (s < 0) throw ValidationError("config seed must be non-negative");
        t.seed = static_cast<std::uint64_t>(s);
    } else if (key == "allow_forward_bias") {
        t.allow_forward_bias = to_bool(key, v);
    } else if (key == "jobs") {
        c.jobs = static_cast<int>(to_int(key, v));
    } else if (key == "bundle") {
        c.bundle = v;
    } else if (key == "out") {
        c.out = v;
    } else {
        std::string known;
        for (const auto& k : config_keys()) known += (known.empty() ? "" : ", ") + k;
        throw ValidationError("unknown config key '" + key + "'; known keys: " + known);
    }
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file '" + path.string() + "'");
    std::map<std::string, std::string> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (out.count(key)) throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": duplicate key " + key);
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

void finalize(RunConfig& c) {
    if (!c.regime_set) c.train.regime = gan::default_regime(c.train.kind);
    gan::validate(c.train);
    if (c.eta < 1) throw ValidationError("config eta must be >= 1");
    if (c.n_draws < 1) throw ValidationError("config n_draws must be >= 1");
    if (c.jobs < 1) throw ValidationError("config jobs must be >= 1");
    if (c.test_days < 0) throw ValidationError("config test_days must be >= 0");
    if (c.out.empty()) throw ValidationError("config out must name a directory");
}

std::string effective_config_text(const RunConfig& c) {
    const auto& t = c.train;
    std::string tickers;
    for (const auto& s : c.tickers) tickers += (tickers.empty() ? "" : ",") + s;
    std::ostringstream out;
    out << "# effective configuration\n"
        << "data=" << c.data << '\n'
        << "tickers=" << tickers << '\n'
        << "split_date=" << c.split_date << '\n'
        << "test_days=" << c.test_days << '\n'
        << "model_kind=" << gan::model_kind_name(t.kind) << '\n'
        << "regime=" << norm::regime_name(t.regime) << '\n'
        << "hist=" << t.hist << '\n'
        << "fut=" << t.fut << '\n'
        << "latent=" << t.latent << '\n'
        << "epochs=" << t.epochs << '\n'
        << "lambda1=" << fmt(t.lambda1) << '\n'
        << "lambda2=" << fmt(t.lambda2) << '\n'
        << "lr=" << fmt(t.adam.lr) << '\n'
        << "beta1=" << fmt(t.adam.beta1) << '\n'
        << "beta2=" << fmt(t.adam.beta2) << '\n'
        << "critic_steps=" << t.critic_steps << '\n'
        << "batch_size=" << t.batch_size << '\n'
        << "proposer_epochs=" << t.proposer.epochs << '\n'
        << "proposer_batch_size=" << t.proposer.batch_size << '\n'
        << "proposer_lr=" << fmt(t.proposer.adam.lr) << '\n'
        << "hybrid_output_scale=" << fmt(t.hybrid_output_scale) << '\n'
        << "eta=" << c.eta << '\n'
        << "n_draws=" << c.n_draws << '\n'
        << "r_f=" << fmt(c.r_f) << '\n'
        << "seed=" << t.seed << '\n'
        << "allow_forward_bias=" << (t.allow_forward_bias ? "true" : "false") << '\n'
        << "jobs=" << c.jobs << '\n'
        << "bundle=" << c.bundle << '\n'
        << "out=" << c.out << '\n';
    return out.str();
}

}  // namespace hcgan::cli
