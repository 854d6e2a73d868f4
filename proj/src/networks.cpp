#include "hcgan/networks.hpp"

#include "hcgan/errors.hpp"

#include <cmath>
#include <string>

namespace hcgan::nn {

namespace {

LayerSpec dense(Index in, Index out) { return {LayerKind::affine, in, out, 0.0}; }
LayerSpec leaky() { return {LayerKind::leaky_relu, 0, 0, kLeakySlope}; }
LayerSpec drop() { return {LayerKind::dropout, 0, 0, kDropoutRate}; }

void check_dims(const NetworkDims& d) {
    if (d.assets < 1 || d.hist < 1 || d.fut < 1 || d.latent < 1) {
        throw ValidationError("network dimensions must be positive (N=" + std::to_string(d.assets) +
                              ", h=" + std::to_string(d.hist) + ", f=" + std::to_string(d.fut) +
                              ", m=" + std::to_string(d.latent) + ")");
    }
}

}  // namespace

std::string_view role_name(Role role) {
    switch (role) {
        case Role::conditioner: return "conditioner";
        case Role::decoder: return "decoder";
        case Role::simulator: return "simulator";
        case Role::hybrid_simulator: return "hybrid_simulator";
        case Role::discriminator: return "discriminator";
        case Role::proposer: return "proposer";
    }
    return "unknown";
}

Role parse_role(std::string_view name) {
    for (Role r : {Role::conditioner, Role::decoder, Role::simulator, Role::hybrid_simulator, Role::discriminator,
                   Role::proposer}) {
        if (role_name(r) == name) return r;
    }
    throw ValidationError("unknown network role '" + std::string(name) + "'");
}

MlpNetwork::MlpNetwork(Role role, NetworkDims dims, std::vector<LayerSpec> layers)
    : role_(role), dims_(dims), layers_(std::move(layers)) {
    Index width = -1;
    for (const auto& layer : layers_) {
        switch (layer.kind) {
            case LayerKind::affine:
                if (layer.in_dim < 1 || layer.out_dim < 1) throw ValidationError("affine layer dims must be positive");
                if (width >= 0 && width != layer.in_dim) {
                    throw ValidationError("affine layer expects width " + std::to_string(layer.in_dim) +
                                          " but receives " + std::to_string(width));
                }
                width = layer.out_dim;
                params_.push_back({Matrix::Zero(layer.in_dim, layer.out_dim), Matrix::Zero(1, layer.out_dim)});
                break;
            case LayerKind::dropout:
                if (!(layer.param >= 0.0 && layer.param < 1.0)) throw ValidationError("dropout rate must be in [0,1)");
                break;
            case LayerKind::scale:
                if (!std::isfinite(layer.param) || layer.param == 0.0) {
                    throw ValidationError("scale factor must be finite and nonzero");
                }
                break;
            case LayerKind::leaky_relu:
            case LayerKind::tanh:
                break;
        }
    }
    if (params_.empty()) throw ValidationError("network needs at least one affine layer");
    if (layers_.front().kind != LayerKind::affine) throw ValidationError("network must start with an affine layer");
}

Index MlpNetwork::input_width() const { return params_.front().weight.rows(); }
Index MlpNetwork::output_width() const { return params_.back().weight.cols(); }

std::size_t MlpNetwork::parameter_count() const {
    std::size_t count = 0;
    for (const auto& p : params_) count += static_cast<std::size_t>(p.weight.size() + p.bias.size());
    return count;
}

std::vector<Matrix*> MlpNetwork::parameters() {
    std::vector<Matrix*> out;
    for (auto& p : params_) {
        out.push_back(&p.weight);
        out.push_back(&p.bias);
    }
    return out;
}

std::vector<const Matrix*> MlpNetwork::parameters() const {
    std::vector<const Matrix*> out;
    for (const auto& p : params_) {
        out.push_back(&p.weight);
        out.push_back(&p.bias);
    }
    return out;
}

bool MlpNetwork::operator==(const MlpNetwork& other) const {
    if (role_ != other.role_ || !(dims_ == other.dims_) || layers_ != other.layers_) return false;
    for (std::size_t k = 0; k < params_.size(); ++k) {
        if (params_[k].weight != other.params_[k].weight || params_[k].bias != other.params_[k].bias) return false;
    }
    return true;
}

Matrix MlpNetwork::infer(const Matrix& input) const {
    if (input.cols() != input_width()) {
        throw ValidationError(std::string(role_name(role_)) + ": input width " + std::to_string(input.cols()) +
                              " but network expects " + std::to_string(input_width()));
    }
    Matrix x = input;
    std::size_t affine_index = 0;
    for (const auto& layer : layers_) {
        switch (layer.kind) {
            case LayerKind::affine: {
                const auto& p = params_[affine_index++];
                Matrix y;
                y.noalias() = x * p.weight;
                y.rowwise() += p.bias.row(0);
                x = std::move(y);
                break;
            }
            case LayerKind::leaky_relu: {
                const double slope = layer.param;
                x = x.unaryExpr([slope](double e) { return e > 0.0 ? e : slope * e; });
                break;
            }
            case LayerKind::tanh:
                x = x.array().tanh().matrix();
                break;
            case LayerKind::dropout:
                break;
            case LayerKind::scale:
                x = (x.array() * layer.param + 0.0).matrix();
                break;
        }
    }
    return x;
}

MlpNetwork build_network(Role role, const NetworkDims& d, const BuildOptions& options) {
    check_dims(d);
    const Index N = d.assets;
    std::vector<LayerSpec> layers;
    switch (role) {
        case Role::conditioner:
            layers = {dense(N * d.hist, 512), leaky(), dense(512, 512), leaky(), drop(), dense(512, kCodeWidth)};
            break;
        case Role::decoder:
            layers = {dense(kCodeWidth, 512), leaky(), dense(512, 512), leaky(), drop(), dense(512, N * d.hist)};
            break;
        case Role::simulator:
        case Role::hybrid_simulator:
            layers = {dense(d.latent + kCodeWidth, 128), leaky(), dense(128, 256), leaky(), dense(256, 512),
                      leaky(), dense(512, 1024), leaky(), dense(1024, N * d.fut), {LayerKind::tanh, 0, 0, 0.0}};
            if (role == Role::hybrid_simulator) layers.push_back({LayerKind::scale, 0, 0, options.hybrid_output_scale});
            break;
        case Role::discriminator:
            layers = {dense(N * (d.hist + d.fut), 512), leaky(), dense(512, 512), leaky(), drop(),
                      dense(512, 512), leaky(), dense(512, 1)};
            break;
        case Role::proposer:
            layers = {dense(N * (d.hist + 1), 512), leaky(), dense(512, 512), leaky(), drop(), dense(512, N)};
            break;
    }
    return MlpNetwork(role, d, std::move(layers));
}

void init_parameters(MlpNetwork& net, Rng& rng) {
    for (auto& p : net.affine_params()) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(p.weight.rows()));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (Index c = 0; c < p.weight.cols(); ++c) {
            for (Index r = 0; r < p.weight.rows(); ++r) p.weight(r, c) = dist(rng);
        }
        p.bias.setZero();
    }
}

BoundNetwork bind(ad::Tape& tape, const MlpNetwork& net, bool trainable) {
    BoundNetwork bound;
    bound.net = &net;
    for (const Matrix* p : net.parameters()) {
        bound.params.push_back(trainable ? tape.variable_ref(*p) : tape.constant_ref(*p));
    }
    return bound;
}

ad::Tensor forward(const BoundNetwork& bound, const ad::Tensor& input, Mode mode, Rng* rng) {
    const MlpNetwork& net = *bound.net;
    if (input.cols() != net.input_width()) {
        throw ValidationError(std::string(role_name(net.role())) + ": input width " + std::to_string(input.cols()) +
                              " but network expects " + std::to_string(net.input_width()));
    }
    ad::Tensor x = input;
    std::size_t affine_index = 0;
    for (const auto& layer : net.layers()) {
        switch (layer.kind) {
            case LayerKind::affine:
                x = ad::affine(x, bound.params[2 * affine_index], bound.params[2 * affine_index + 1]);
                ++affine_index;
                break;
            case LayerKind::leaky_relu:
                x = ad::leaky_relu(x, layer.param);
                break;
            case LayerKind::tanh:
                x = ad::tanh(x);
                break;
            case LayerKind::dropout:
                if (mode == Mode::train && layer.param > 0.0) {
                    if (rng == nullptr) throw ValidationError("train-mode dropout needs a random source");
                    std::uniform_real_distribution<double> uniform(0.0, 1.0);
                    Matrix keep(x.rows(), x.cols());
                    for (Index c = 0; c < keep.cols(); ++c) {
                        for (Index r = 0; r < keep.rows(); ++r) keep(r, c) = uniform(*rng) < layer.param ? 0.0 : 1.0;
                    }
                    x = ad::dropout(x, keep, layer.param);
                }
                break;
            case LayerKind::scale:
                x = ad::scale(x, layer.param);
                break;
        }
    }
    return x;
}

AdamState make_adam_state(const MlpNetwork& net, const AdamSettings& settings) {
    AdamState state;
    state.settings = settings;
    for (const Matrix* p : net.parameters()) {
        state.first_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
        state.second_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
    return state;
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
        throw ValidationError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                              std::to_string(grads.size()) + " gradients, " +
                              std::to_string(state.first_moment.size()) + " moment slots");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k]->rows() != grads[k].rows() || params[k]->cols() != grads[k].cols() ||
            state.first_moment[k].rows() != grads[k].rows() || state.first_moment[k].cols() != grads[k].cols()) {
            throw ValidationError("adam_step: shape mismatch for parameter " + std::to_string(k));
        }
        if (!grads[k].allFinite()) {
            throw NumericError("adam_step: non-finite gradient for parameter " + std::to_string(k) + " at step " +
                               std::to_string(state.step_count + 1));
        }
    }
    const auto& s = state.settings;
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double step_size = s.lr / (1.0 - std::pow(s.beta1, t));
    const double inv_correction2 = 1.0 / (1.0 - std::pow(s.beta2, t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k]->array();
        auto m = state.first_moment[k].array();
        auto v = state.second_moment[k].array();
        const auto g = grads[k].array();
        m = s.beta1 * m + (1.0 - s.beta1) * g;
        v = s.beta2 * v + (1.0 - s.beta2) * g.square();
        p -= step_size * m / ((v * inv_correction2).sqrt() + s.epsilon);
    }
}

}  // namespace hcgan::nn
