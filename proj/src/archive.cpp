#include "hcgan/archive.hpp"

#include "hcgan/errors.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace hcgan::archive {

static_assert(std::endian::native == std::endian::little, "archive code assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'H', 'C', 'G', 'A', 'N', 'M', 'D', 'L'};
constexpr char kTrailer[8] = {'H', 'C', 'G', 'A', 'N', 'E', 'N', 'D'};
constexpr std::uint32_t kMaxCount = 1u << 28;

template <typename T>
void put(std::ostream& out, T value) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    out.write(bytes, sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
    char bytes[sizeof(T)];
    if (!in.read(bytes, sizeof(T))) throw ValidationError(std::string("archive truncated while reading ") + what);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

void put_string(std::ostream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_count(std::istream& in, const char* what) {
    const auto n = get<std::uint32_t>(in, what);
    if (n > kMaxCount) throw ValidationError(std::string("archive: implausible ") + what + " " + std::to_string(n));
    return n;
}

std::string get_string(std::istream& in, const char* what) {
    const auto n = get_count(in, what);
    std::string s(n, '\0');
    if (n > 0 && !in.read(s.data(), n)) throw ValidationError(std::string("archive truncated while reading ") + what);
    return s;
}

void put_matrix_values(std::ostream& out, const nn::Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(out, m(r, c));
    }
}

void get_matrix_values(std::istream& in, nn::Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get<double>(in, "parameters");
    }
}

std::string format_double(double v) {
    char buffer[40];
    std::snprintf(buffer, sizeof buffer, "%.17g", v);
    return buffer;
}

double parse_double(const std::string& key, const std::string& text) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != text.size() || text.empty()) throw ValidationError("archive config: bad number for " + key + ": " + text);
    return v;
}

std::int64_t parse_int(const std::string& key, const std::string& text) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != text.size() || text.empty()) throw ValidationError("archive config: bad integer for " + key + ": " + text);
    return v;
}

bool parse_flag(const std::string& key, const std::string& text) {
    if (text == "1" || text == "true") return true;
    if (text == "0" || text == "false") return false;
    throw ValidationError("archive config: bad flag for " + key + ": " + text);
}

}  // namespace

void write_network(std::ostream& out, const nn::MlpNetwork& net, std::uint64_t seed) {
    const auto& d = net.dims();
    put<std::uint8_t>(out, static_cast<std::uint8_t>(net.role()));
    put<std::int64_t>(out, d.assets);
    put<std::int64_t>(out, d.hist);
    put<std::int64_t>(out, d.fut);
    put<std::int64_t>(out, d.latent);
    put<std::uint64_t>(out, seed);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers().size()));
    for (const auto& layer : net.layers()) {
        put<std::uint8_t>(out, static_cast<std::uint8_t>(layer.kind));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(layer.in_dim));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(layer.out_dim));
        put<double>(out, layer.param);
    }
    for (const auto& p : net.affine_params()) {
        put_matrix_values(out, p.weight);
        put_matrix_values(out, p.bias);
    }
}

nn::MlpNetwork read_network(std::istream& in, std::uint64_t* seed) {
    const auto role_code = get<std::uint8_t>(in, "network role");
    if (role_code > static_cast<std::uint8_t>(nn::Role::proposer)) {
        throw ValidationError("archive: unknown network role code " + std::to_string(role_code));
    }
    nn::NetworkDims dims;
    dims.assets = get<std::int64_t>(in, "dims");
    dims.hist = get<std::int64_t>(in, "dims");
    dims.fut = get<std::int64_t>(in, "dims");
    dims.latent = get<std::int64_t>(in, "dims");
    const auto recorded_seed = get<std::uint64_t>(in, "seed");
    if (seed) *seed = recorded_seed;
    const auto n_layers = get_count(in, "layer count");
    std::vector<nn::LayerSpec> layers;
    for (std::uint32_t k = 0; k < n_layers; ++k) {
        nn::LayerSpec spec;
        const auto kind = get<std::uint8_t>(in, "layer kind");
        if (kind > static_cast<std::uint8_t>(nn::LayerKind::scale)) {
            throw ValidationError("archive: unknown layer kind " + std::to_string(kind));
        }
        spec.kind = static_cast<nn::LayerKind>(kind);
        spec.in_dim = get<std::uint32_t>(in, "layer dims");
        spec.out_dim = get<std::uint32_t>(in, "layer dims");
        spec.param = get<double>(in, "layer param");
        layers.push_back(spec);
    }
    nn::MlpNetwork net(static_cast<nn::Role>(role_code), dims, std::move(layers));
    for (auto& p : net.affine_params()) {
        get_matrix_values(in, p.weight);
        get_matrix_values(in, p.bias);
    }
    return net;
}

std::string config_to_text(const gan::TrainConfig& c) {
    std::ostringstream out;
    out << "model_kind=" << gan::model_kind_name(c.kind) << '\n'
        << "regime=" << norm::regime_name(c.regime) << '\n'
        << "allow_forward_bias=" << (c.allow_forward_bias ? 1 : 0) << '\n'
        << "hist=" << c.hist << '\n'
        << "fut=" << c.fut << '\n'
        << "latent=" << c.latent << '\n'
        << "epochs=" << c.epochs << '\n'
        << "lambda1=" << format_double(c.lambda1) << '\n'
        << "lambda2=" << format_double(c.lambda2) << '\n'
        << "lr=" << format_double(c.adam.lr) << '\n'
        << "beta1=" << format_double(c.adam.beta1) << '\n'
        << "beta2=" << format_double(c.adam.beta2) << '\n'
        << "adam_epsilon=" << format_double(c.adam.epsilon) << '\n'
        << "seed=" << c.seed << '\n'
        << "critic_steps=" << c.critic_steps << '\n'
        << "batch_size=" << c.batch_size << '\n'
        << "hybrid_output_scale=" << format_double(c.hybrid_output_scale) << '\n'
        << "proposer_epochs=" << c.proposer.epochs << '\n'
        << "proposer_batch_size=" << c.proposer.batch_size << '\n'
        << "proposer_lr=" << format_double(c.proposer.adam.lr) << '\n'
        << "proposer_beta1=" << format_double(c.proposer.adam.beta1) << '\n'
        << "proposer_beta2=" << format_double(c.proposer.adam.beta2) << '\n'
        << "proposer_epsilon=" << format_double(c.proposer.adam.epsilon) << '\n'
        << "proposer_validation_fraction=" << format_double(c.proposer.validation_fraction) << '\n'
        << "copy_mean_proposer=" << (c.copy_mean_proposer ? 1 : 0) << '\n';
    return out.str();
}

gan::TrainConfig config_from_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ValidationError("archive config: malformed line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto take = [&](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw ValidationError("archive config: missing key " + key);
        std::string v = it->second;
        kv.erase(it);
        return v;
    };
    gan::TrainConfig c;
    c.kind = gan::parse_model_kind(take("model_kind"));
    c.regime = norm::parse_regime(take("regime"));
    c.allow_forward_bias = parse_flag("allow_forward_bias", take("allow_forward_bias"));
    c.hist = parse_int("hist", take("hist"));
    c.fut = parse_int("fut", take("fut"));
    c.latent = parse_int("latent", take("latent"));
    c.epochs = parse_int("epochs", take("epochs"));
    c.lambda1 = parse_double("lambda1", take("lambda1"));
    c.lambda2 = parse_double("lambda2", take("lambda2"));
    c.adam.lr = parse_double("lr", take("lr"));
    c.adam.beta1 = parse_double("beta1", take("beta1"));
    c.adam.beta2 = parse_double("beta2", take("beta2"));
    c.adam.epsilon = parse_double("adam_epsilon", take("adam_epsilon"));
    c.seed = static_cast<std::uint64_t>(std::stoull(take("seed")));
    c.critic_steps = parse_int("critic_steps", take("critic_steps"));
    c.batch_size = parse_int("batch_size", take("batch_size"));
    c.hybrid_output_scale = parse_double("hybrid_output_scale", take("hybrid_output_scale"));
    c.proposer.epochs = parse_int("proposer_epochs", take("proposer_epochs"));
    c.proposer.batch_size = parse_int("proposer_batch_size", take("proposer_batch_size"));
    c.proposer.adam.lr = parse_double("proposer_lr", take("proposer_lr"));
    c.proposer.adam.beta1 = parse_double("proposer_beta1", take("proposer_beta1"));
    c.proposer.adam.beta2 = parse_double("proposer_beta2", take("proposer_beta2"));
    c.proposer.adam.epsilon = parse_double("proposer_epsilon", take("proposer_epsilon"));
    c.proposer.validation_fraction =
        parse_double("proposer_validation_fraction", take("proposer_validation_fraction"));
    c.copy_mean_proposer = parse_flag("copy_mean_proposer", take("copy_mean_proposer"));
    if (!kv.empty()) throw ValidationError("archive config: unknown key " + kv.begin()->first);
    return c;
}

void write_bundle(std::ostream& out, const gan::ModelBundle& b) {
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kFormatVersion);
    put_string(out, config_to_text(b.config));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.tickers.size()));
    for (const auto& t : b.tickers) put_string(out, t);
    put<std::uint8_t>(out, b.trained ? 1 : 0);

    std::vector<const nn::MlpNetwork*> nets{&b.conditioner};
    if (b.decoder) nets.push_back(&*b.decoder);
    nets.push_back(&b.simulator);
    nets.push_back(&b.discriminator);
    if (b.proposer) nets.push_back(&*b.proposer);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(nets.size()));
    for (const auto* n : nets) write_network(out, *n, b.config.seed);

    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.log.size()));
    for (const auto& r : b.log) {
        put<std::int64_t>(out, r.epoch);
        put<double>(out, r.critic_loss);
        put<double>(out, r.generator_loss);
        put<double>(out, r.wasserstein);
        put<std::uint8_t>(out, r.ap_loss ? 1 : 0);
        put<double>(out, r.ap_loss.value_or(0.0));
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.proposer_log.size()));
    for (const auto& r : b.proposer_log) {
        put<std::int64_t>(out, r.epoch);
        put<double>(out, r.train_mse);
        put<double>(out, r.validation_mse);
    }
    put<std::int64_t>(out, b.counters.windows_visited);
    put<std::int64_t>(out, b.counters.generator_steps);
    put<std::int64_t>(out, b.counters.critic_steps);
    out.write(kTrailer, sizeof kTrailer);
}

gan::ModelBundle read_bundle(std::istream& in) {
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
        throw ValidationError("not a model archive (bad magic)");
    }
    const auto version = get<std::uint32_t>(in, "version");
    if (version != kFormatVersion) {
        throw ValidationError("model archive version " + std::to_string(version) + " unsupported (expected " +
                              std::to_string(kFormatVersion) + ")");
    }
    gan::ModelBundle b;
    b.config = config_from_text(get_string(in, "config"));
    gan::validate(b.config);
    const auto n_tickers = get_count(in, "ticker count");
    for (std::uint32_t k = 0; k < n_tickers; ++k) b.tickers.push_back(get_string(in, "ticker"));
    b.trained = get<std::uint8_t>(in, "trained flag") != 0;

    const auto n_nets = get_count(in, "network count");
    const auto expected_dims = b.dims();
    for (std::uint32_t k = 0; k < n_nets; ++k) {
        nn::MlpNetwork net = read_network(in);
        if (!(net.dims() == expected_dims)) throw ValidationError("archive: network dimensions disagree with config");
        const auto canonical =
            nn::build_network(net.role(), expected_dims, {b.config.hybrid_output_scale}).layers();
        if (canonical != net.layers()) {
            throw ValidationError("archive: " + std::string(nn::role_name(net.role())) +
                                  " layer stack differs from the expected architecture");
        }
        switch (net.role()) {
            case nn::Role::conditioner: b.conditioner = std::move(net); break;
            case nn::Role::decoder: b.decoder = std::move(net); break;
            case nn::Role::simulator:
            case nn::Role::hybrid_simulator: b.simulator = std::move(net); break;
            case nn::Role::discriminator: b.discriminator = std::move(net); break;
            case nn::Role::proposer: b.proposer = std::move(net); break;
        }
    }
    const bool hybrid = gan::is_hybrid(b.config.kind);
    if (b.conditioner.layers().empty() || b.simulator.layers().empty() || b.discriminator.layers().empty() ||
        b.decoder.has_value() != gan::uses_autoencoder(b.config.kind) ||
        b.proposer.has_value() != (hybrid && !b.config.copy_mean_proposer) ||
        (b.simulator.role() == nn::Role::hybrid_simulator) != hybrid) {
        throw ValidationError("archive: network set does not match model kind " +
                              std::string(gan::model_kind_name(b.config.kind)));
    }

    const auto n_log = get_count(in, "log length");
    for (std::uint32_t k = 0; k < n_log; ++k) {
        gan::EpochRecord r;
        r.epoch = get<std::int64_t>(in, "log");
        r.critic_loss = get<double>(in, "log");
        r.generator_loss = get<double>(in, "log");
        r.wasserstein = get<double>(in, "log");
        const bool has_ap = get<std::uint8_t>(in, "log") != 0;
        const double ap = get<double>(in, "log");
        if (has_ap) r.ap_loss = ap;
        b.log.push_back(r);
    }
    const auto n_plog = get_count(in, "proposer log length");
    for (std::uint32_t k = 0; k < n_plog; ++k) {
        gan::ProposerRecord r;
        r.epoch = get<std::int64_t>(in, "proposer log");
        r.train_mse = get<double>(in, "proposer log");
        r.validation_mse = get<double>(in, "proposer log");
        b.proposer_log.push_back(r);
    }
    b.counters.windows_visited = get<std::int64_t>(in, "counters");
    b.counters.generator_steps = get<std::int64_t>(in, "counters");
    b.counters.critic_steps = get<std::int64_t>(in, "counters");
    char trailer[8];
    if (!in.read(trailer, sizeof trailer) || std::memcmp(trailer, kTrailer, sizeof trailer) != 0) {
        throw ValidationError("model archive trailer missing or corrupt");
    }
    return b;
}

void save_bundle(const gan::ModelBundle& bundle, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write model archive '" + path.string() + "'");
    write_bundle(out, bundle);
    if (!out) throw ValidationError("failed writing model archive '" + path.string() + "'");
}

gan::ModelBundle load_bundle(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open model archive '" + path.string() + "'");
    return read_bundle(in);
}

}  // namespace hcgan::archive
