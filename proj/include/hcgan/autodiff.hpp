#pragma once

// Tape-based reverse-mode differentiation over dense row-major batches.
//
// Every tensor is a 2-D matrix (rows = samples, cols = features). Operations
// append nodes to a Tape; gradients are themselves computed with the same
// recorded operations, so a gradient taken with `create_graph = true` can be
// differentiated again (double backprop, used by the WGAN-GP penalty).
//
// A Tape is single-threaded. Distinct tapes are independent.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace hcgan::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Tensor {
public:
    Tensor() = default;

    const Matrix& value() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    bool requires_grad() const;
    /// Convenience accessor for 1x1 tensors.
    double item() const;

    Tape* tape() const { return tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

enum class Op {
    leaf,
    add,
    sub,
    mul,
    div,
    div_or_zero,
    matmul,
    affine,
    leaky_relu,
    tanh,
    concat_cols,
    slice_cols,
    embed_cols,
    sum,
    mean,
    square,
    sqrt,
    row_l2_norm,
    affine_scalar,
    broadcast,
    broadcast_rows,
    broadcast_cols,
    sum_rows,
    sum_cols,
};

std::string op_name(Op op);

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf that requires gradients; the value is copied onto the tape.
    Tensor variable(Matrix value);
    /// Leaf that requires gradients and reads `value` in place. `value` must
    /// outlive the tape and stay unmodified while the tape is in use. Referenced
    /// leaves are not scanned; the first operation reading a non-finite entry throws.
    Tensor variable_ref(const Matrix& value);
    Tensor constant(Matrix value);
    Tensor constant_ref(const Matrix& value);

    /// d(output)/d(input) for each input. `output` must be 1x1. Inputs that do
    /// not influence `output` get a zero gradient and a diagnostic entry. With
    /// `create_graph`, the returned gradients are differentiable nodes.
    std::vector<Tensor> gradient(const Tensor& output, std::span<const Tensor> inputs, bool create_graph = false);

    /// Messages from the most recent gradient() call (e.g. unreachable inputs).
    const std::vector<std::string>& diagnostics() const { return diagnostics_; }

    std::size_t size() const { return nodes_.size(); }
    Op op(std::size_t id) const { return nodes_.at(id).op; }
    const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_.at(id).parents; }
    const Matrix& value(std::size_t id) const;
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

private:
    friend struct TapeAccess;

    struct Node {
        Op op = Op::leaf;
        Matrix value;
        const Matrix* external = nullptr;
        bool requires_grad = false;
        std::vector<std::size_t> parents;
        double a = 0.0;  // leaky slope, scalar multiplier
        double b = 0.0;  // scalar offset
        Index i0 = 0;    // column offset / broadcast rows
        Index i1 = 0;    // column count / broadcast cols
        bool trans_a = false;
        bool trans_b = false;
    };

    Tensor push(Node node);
    Tensor record(Op op, Matrix value, std::vector<std::size_t> parents);
    const Node& node(const Tensor& t) const;
    /// Gradient contributions for each parent of node `id` given upstream `grad`.
    void backward(std::size_t id, const Tensor& grad, const std::vector<char>& needs, std::vector<Tensor>& out);

    std::deque<Node> nodes_;
    std::vector<std::string> diagnostics_;
    bool recording_ = true;
};

// Elementwise operations require equal shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
/// a / b with 0 where b == 0 (subgradient convention for norms at the origin).
Tensor div_or_zero(const Tensor& a, const Tensor& b);

/// op(a) * op(b) where op transposes when the flag is set.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false, bool transpose_b = false);
/// x * W + b, with b (1 x out) added to every row.
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// max(x, 0) + slope * min(x, 0). Derivative at exactly 0 is `slope`.
Tensor leaky_relu(const Tensor& x, double slope);
Tensor tanh(const Tensor& x);
/// Multiplies by `keep_mask / (1 - rate)`; `keep_mask` entries are 0 or 1.
Tensor dropout(const Tensor& x, const Matrix& keep_mask, double rate);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_cols(std::initializer_list<Tensor> parts);
Tensor slice_cols(const Tensor& x, Index offset, Index count);
/// Places x at column `offset` of a zero matrix with `total_cols` columns.
Tensor embed_cols(const Tensor& x, Index offset, Index total_cols);

/// Sum / mean of all entries (1x1).
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
/// Euclidean norm of each row (rows x 1).
Tensor row_l2_norm(const Tensor& x);
/// scale * x + offset.
Tensor affine_scalar(const Tensor& x, double scale, double offset);
inline Tensor scale(const Tensor& x, double factor) { return affine_scalar(x, factor, 0.0); }

Tensor broadcast(const Tensor& scalar, Index rows, Index cols);
Tensor broadcast_rows(const Tensor& row, Index rows);
Tensor broadcast_cols(const Tensor& col, Index cols);
/// Column sums (1 x cols).
Tensor sum_rows(const Tensor& x);
/// Row sums (rows x 1).
Tensor sum_cols(const Tensor& x);

/// Scalar function of a list of parameter tensors, evaluated on a fresh tape.
using ScalarFn = std::function<Tensor(Tape&, std::span<const Tensor>)>;

struct FiniteDifferenceOptions {
    double step = 1e-5;
    /// Entries checked per parameter matrix; 0 checks every entry.
    std::size_t max_entries_per_param = 0;
    std::uint64_t sample_seed = 0;
};

struct FiniteDifferenceReport {
    double max_relative_error = 0.0;
    std::size_t entries_checked = 0;
    std::size_t worst_param = 0;
    Index worst_row = 0;
    Index worst_col = 0;
    double worst_tape = 0.0;
    double worst_numeric = 0.0;
};

/// Compares tape gradients of `fn` at `params` with central differences.
/// Relative error uses the denominator max(|a|, |b|, 1e-8). `fn` must be
/// deterministic. Parameters are restored before returning.
FiniteDifferenceReport finite_difference_check(const ScalarFn& fn, std::span<Matrix* const> params,
                                               const FiniteDifferenceOptions& options = {});

}  // namespace hcgan::ad
