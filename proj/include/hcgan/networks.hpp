#pragma once

// Multilayer perceptrons for the six network roles and the Adam optimizer.
//
// Samples are rows. Affine layers compute x * W + b with W stored in x out.

#include "hcgan/autodiff.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace hcgan::nn {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;
using Rng = std::mt19937_64;

enum class Role { conditioner, decoder, simulator, hybrid_simulator, discriminator, proposer };

std::string_view role_name(Role role);
Role parse_role(std::string_view name);

enum class LayerKind : std::uint8_t { affine = 0, leaky_relu = 1, tanh = 2, dropout = 3, scale = 4 };

struct LayerSpec {
    LayerKind kind = LayerKind::affine;
    Index in_dim = 0;
    Index out_dim = 0;
    double param = 0.0;  // leaky slope, dropout rate or scale factor

    bool operator==(const LayerSpec&) const = default;
};

/// Assets N, historical length h, future length f, latent dimension m.
struct NetworkDims {
    Index assets = 0;
    Index hist = 0;
    Index fut = 0;
    Index latent = 0;

    bool operator==(const NetworkDims&) const = default;
};

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kDropoutRate = 0.4;
inline constexpr Index kCodeWidth = 16;
inline constexpr double kHybridOutputScale = 100.0;

struct AffineParams {
    Matrix weight;  // in x out
    Matrix bias;    // 1 x out
};

enum class Mode { train, infer };

class MlpNetwork {
public:
    MlpNetwork() = default;
    /// Validates the stack and allocates zeroed parameters.
    MlpNetwork(Role role, NetworkDims dims, std::vector<LayerSpec> layers);

    Role role() const { return role_; }
    const NetworkDims& dims() const { return dims_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }

    /// One entry per affine layer, in stack order.
    std::vector<AffineParams>& affine_params() { return params_; }
    const std::vector<AffineParams>& affine_params() const { return params_; }

    Index input_width() const;
    Index output_width() const;
    std::size_t parameter_count() const;

    /// weight0, bias0, weight1, bias1, ...
    std::vector<Matrix*> parameters();
    std::vector<const Matrix*> parameters() const;

    /// Inference-mode forward (dropout is the identity); no tape involved and no
    /// finiteness check, callers validate outputs.
    Matrix infer(const Matrix& input) const;

    bool operator==(const MlpNetwork& other) const;

private:
    Role role_ = Role::conditioner;
    NetworkDims dims_;
    std::vector<LayerSpec> layers_;
    std::vector<AffineParams> params_;
};

struct BuildOptions {
    /// Output multiplier appended to the hybrid simulator stack.
    double hybrid_output_scale = kHybridOutputScale;
};

/// The layer stack for `role`; parameters are zero until init_parameters.
MlpNetwork build_network(Role role, const NetworkDims& dims, const BuildOptions& options = {});

/// Weights ~ U(-1/sqrt(in), 1/sqrt(in)), biases 0.
void init_parameters(MlpNetwork& net, Rng& rng);

/// A network's parameters registered on a tape.
struct BoundNetwork {
    const MlpNetwork* net = nullptr;
    std::vector<ad::Tensor> params;  // same order as MlpNetwork::parameters()
};

/// Trainable parameters become tape variables referencing the network's
/// storage; otherwise they are constants.
BoundNetwork bind(ad::Tape& tape, const MlpNetwork& net, bool trainable);

/// Applies the stack. In train mode each dropout layer draws a keep mask
/// from `rng`; in infer mode dropout is the identity and `rng` is unused.
ad::Tensor forward(const BoundNetwork& bound, const ad::Tensor& input, Mode mode, Rng* rng);

struct AdamSettings {
    double lr = 2e-5;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    bool operator==(const AdamSettings&) const = default;
};

struct AdamState {
    AdamSettings settings;
    std::int64_t step_count = 0;
    std::vector<Matrix> first_moment;
    std::vector<Matrix> second_moment;

    bool operator==(const AdamState&) const = default;
};

AdamState make_adam_state(const MlpNetwork& net, const AdamSettings& settings);

/// Bias-corrected Adam update. Throws NumericError (leaving everything
/// untouched) if any gradient entry is non-finite.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state);

}  // namespace hcgan::nn
