#include "hcgan/autodiff.hpp"

#include "hcgan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace hcgan::ad {

namespace {

std::string shape_of(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_tape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.valid() || !b.valid()) throw ValidationError(std::string(op) + ": invalid tensor handle");
    if (a.tape() != b.tape()) throw ValidationError(std::string(op) + ": operands live on different tapes");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require_same_tape(a, b, op);
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ValidationError(std::string(op) + ": shape mismatch " + shape_of(a.value()) + " vs " +
                              shape_of(b.value()));
    }
}

}  // namespace

std::string op_name(Op op) {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::div: return "div";
        case Op::div_or_zero: return "div_or_zero";
        case Op::matmul: return "matmul";
        case Op::affine: return "affine";
        case Op::leaky_relu: return "leaky_relu";
        case Op::tanh: return "tanh";
        case Op::concat_cols: return "concat_cols";
        case Op::slice_cols: return "slice_cols";
        case Op::embed_cols: return "embed_cols";
        case Op::sum: return "sum";
        case Op::mean: return "mean";
        case Op::square: return "square";
        case Op::sqrt: return "sqrt";
        case Op::row_l2_norm: return "row_l2_norm";
        case Op::affine_scalar: return "affine_scalar";
        case Op::broadcast: return "broadcast";
        case Op::broadcast_rows: return "broadcast_rows";
        case Op::broadcast_cols: return "broadcast_cols";
        case Op::sum_rows: return "sum_rows";
        case Op::sum_cols: return "sum_cols";
    }
    return "unknown";
}

// Grants the free operation functions access to node recording.
struct TapeAccess {
    using Node = Tape::Node;

    static Tape& tape(const Tensor& t) { return *t.tape(); }

    static Tensor record(const Tensor& like, Op op, Matrix value, std::vector<std::size_t> parents) {
        return tape(like).record(op, std::move(value), std::move(parents));
    }

    static Tensor record_node(const Tensor& like, Node node, bool check = true) {
        return record_node(tape(like), std::move(node), check);
    }

    static Tensor record_node(Tape& t, Node node, bool check = true) {
        if (check && !node.value.allFinite()) {
            throw NumericError("non-finite value produced by " + op_name(node.op));
        }
        bool any = false;
        for (std::size_t p : node.parents) any = any || t.nodes_[p].requires_grad;
        node.requires_grad = t.recording_ && any;
        return t.push(std::move(node));
    }

    static const Node& node(const Tensor& t) { return t.tape()->node(t); }
};

const Matrix& Tensor::value() const {
    return tape_->value(id_);
}

bool Tensor::requires_grad() const {
    return tape_->requires_grad(id_);
}

double Tensor::item() const {
    const Matrix& v = value();
    if (v.size() != 1) throw ValidationError("item(): tensor is " + shape_of(v) + ", not 1x1");
    return v(0, 0);
}

const Matrix& Tape::value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.external ? *n.external : n.value;
}

const Tape::Node& Tape::node(const Tensor& t) const {
    if (t.tape() != this) throw ValidationError("tensor does not belong to this tape");
    return nodes_.at(t.id());
}

Tensor Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::record(Op op, Matrix value, std::vector<std::size_t> parents) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.parents = std::move(parents);
    return TapeAccess::record_node(*this, std::move(n));
}

Tensor Tape::variable(Matrix value) {
    if (!value.allFinite()) throw NumericError("variable: non-finite value");
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    return push(std::move(n));
}

Tensor Tape::variable_ref(const Matrix& value) {
    Node n;
    n.external = &value;
    n.requires_grad = true;
    return push(std::move(n));
}

Tensor Tape::constant(Matrix value) {
    if (!value.allFinite()) throw NumericError("constant: non-finite value");
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Tensor Tape::constant_ref(const Matrix& value) {
    Node n;
    n.external = &value;
    return push(std::move(n));
}

// ---------------------------------------------------------------------------
// Operations

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    return TapeAccess::record(a, Op::add, a.value() + b.value(), {a.id(), b.id()});
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    return TapeAccess::record(a, Op::sub, a.value() - b.value(), {a.id(), b.id()});
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    return TapeAccess::record(a, Op::mul, a.value().cwiseProduct(b.value()), {a.id(), b.id()});
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "div");
    return TapeAccess::record(a, Op::div, a.value().cwiseQuotient(b.value()), {a.id(), b.id()});
}

Tensor div_or_zero(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "div_or_zero");
    Matrix v = a.value().binaryExpr(b.value(), [](double x, double y) { return y == 0.0 ? 0.0 : x / y; });
    return TapeAccess::record(a, Op::div_or_zero, std::move(v), {a.id(), b.id()});
}

namespace {

// Sum of rank-one updates; faster than blocked GEMM for a handful of inner terms.
template <typename L, typename R>
void thin_product(const L& lhs, const R& rhs, Matrix& out) {
    out.resize(lhs.rows(), rhs.cols());
    if (lhs.cols() == 0) {
        out.setZero();
        return;
    }
    out.noalias() = lhs.col(0) * rhs.row(0);
    for (Index k = 1; k < lhs.cols(); ++k) out.noalias() += lhs.col(k) * rhs.row(k);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
    require_same_tape(a, b, "matmul");
    const Matrix& A = a.value();
    const Matrix& B = b.value();
    const Index inner_a = transpose_a ? A.rows() : A.cols();
    const Index inner_b = transpose_b ? B.cols() : B.rows();
    if (inner_a != inner_b) {
        throw ValidationError("matmul: shape mismatch " + shape_of(A) + (transpose_a ? "^T" : "") + " * " +
                              shape_of(B) + (transpose_b ? "^T" : ""));
    }
    Matrix v;
    // Thin inner dimensions (per-sample outer products) skip the blocked GEMM path.
    if (inner_a <= 8) {
        if (!transpose_a && !transpose_b) thin_product(A, B, v);
        else if (transpose_a && !transpose_b) thin_product(A.transpose(), B, v);
        else if (!transpose_a && transpose_b) thin_product(A, B.transpose(), v);
        else thin_product(A.transpose(), B.transpose(), v);
    } else {
        if (!transpose_a && !transpose_b) v.noalias() = A * B;
        else if (transpose_a && !transpose_b) v.noalias() = A.transpose() * B;
        else if (!transpose_a && transpose_b) v.noalias() = A * B.transpose();
        else v.noalias() = A.transpose() * B.transpose();
    }
    TapeAccess::Node n;
    n.op = Op::matmul;
    n.value = std::move(v);
    n.parents = {a.id(), b.id()};
    n.trans_a = transpose_a;
    n.trans_b = transpose_b;
    // An output larger than its operands is checked through them: finite
    // operands whose magnitude bound cannot overflow give a finite product.
    if (n.value.size() > A.size() + B.size() && A.allFinite() && B.allFinite()) {
        const double bound = A.cwiseAbs().maxCoeff() * B.cwiseAbs().maxCoeff() * static_cast<double>(inner_a);
        if (bound < std::numeric_limits<double>::max()) return TapeAccess::record_node(a, std::move(n), false);
    }
    return TapeAccess::record_node(a, std::move(n));
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_same_tape(x, weight, "affine");
    require_same_tape(x, bias, "affine");
    const Matrix& X = x.value();
    const Matrix& W = weight.value();
    const Matrix& b = bias.value();
    if (X.cols() != W.rows() || b.rows() != 1 || b.cols() != W.cols()) {
        throw ValidationError("affine: shape mismatch input " + shape_of(X) + ", weight " + shape_of(W) +
                              ", bias " + shape_of(b));
    }
    Matrix v;
    v.noalias() = X * W;
    v.rowwise() += b.row(0);
    return TapeAccess::record(x, Op::affine, std::move(v), {x.id(), weight.id(), bias.id()});
}

Tensor leaky_relu(const Tensor& x, double slope) {
    Matrix v = x.value().unaryExpr([slope](double e) { return e > 0.0 ? e : slope * e; });
    TapeAccess::Node n;
    n.op = Op::leaky_relu;
    n.value = std::move(v);
    n.parents = {x.id()};
    n.a = slope;
    return TapeAccess::record_node(x, std::move(n));
}

Tensor tanh(const Tensor& x) {
    return TapeAccess::record(x, Op::tanh, x.value().array().tanh().matrix(), {x.id()});
}

Tensor dropout(const Tensor& x, const Matrix& keep_mask, double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError("dropout: rate must lie in [0, 1)");
    if (keep_mask.rows() != x.rows() || keep_mask.cols() != x.cols()) {
        throw ValidationError("dropout: mask " + shape_of(keep_mask) + " vs input " + shape_of(x.value()));
    }
    Tensor factor = TapeAccess::tape(x).constant(keep_mask / (1.0 - rate));
    return mul(x, factor);
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw ValidationError("concat_cols: no operands");
    const Index rows = parts.front().rows();
    Index total = 0;
    std::vector<std::size_t> parents;
    for (const auto& p : parts) {
        require_same_tape(parts.front(), p, "concat_cols");
        if (p.rows() != rows) {
            throw ValidationError("concat_cols: row mismatch " + shape_of(parts.front().value()) + " vs " +
                                  shape_of(p.value()));
        }
        total += p.cols();
        parents.push_back(p.id());
    }
    Matrix v(rows, total);
    Index offset = 0;
    for (const auto& p : parts) {
        v.middleCols(offset, p.cols()) = p.value();
        offset += p.cols();
    }
    return TapeAccess::record(parts.front(), Op::concat_cols, std::move(v), std::move(parents));
}

Tensor concat_cols(std::initializer_list<Tensor> parts) {
    return concat_cols(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice_cols(const Tensor& x, Index offset, Index count) {
    if (offset < 0 || count < 0 || offset + count > x.cols()) {
        throw ValidationError("slice_cols: [" + std::to_string(offset) + ", +" + std::to_string(count) +
                              ") outside " + shape_of(x.value()));
    }
    TapeAccess::Node n;
    n.op = Op::slice_cols;
    n.value = x.value().middleCols(offset, count);
    n.parents = {x.id()};
    n.i0 = offset;
    n.i1 = count;
    return TapeAccess::record_node(x, std::move(n));
}

Tensor embed_cols(const Tensor& x, Index offset, Index total_cols) {
    if (offset < 0 || offset + x.cols() > total_cols) {
        throw ValidationError("embed_cols: " + shape_of(x.value()) + " at offset " + std::to_string(offset) +
                              " exceeds " + std::to_string(total_cols) + " columns");
    }
    Matrix v = Matrix::Zero(x.rows(), total_cols);
    v.middleCols(offset, x.cols()) = x.value();
    TapeAccess::Node n;
    n.op = Op::embed_cols;
    n.value = std::move(v);
    n.parents = {x.id()};
    n.i0 = offset;
    n.i1 = total_cols;
    return TapeAccess::record_node(x, std::move(n));
}

Tensor sum(const Tensor& x) {
    return TapeAccess::record(x, Op::sum, Matrix::Constant(1, 1, x.value().sum()), {x.id()});
}

Tensor mean(const Tensor& x) {
    if (x.value().size() == 0) throw ValidationError("mean: empty tensor");
    return TapeAccess::record(x, Op::mean, Matrix::Constant(1, 1, x.value().mean()), {x.id()});
}

Tensor square(const Tensor& x) {
    return TapeAccess::record(x, Op::square, x.value().array().square().matrix(), {x.id()});
}

Tensor sqrt(const Tensor& x) {
    if ((x.value().array() < 0.0).any()) throw NumericError("sqrt: negative input");
    return TapeAccess::record(x, Op::sqrt, x.value().array().sqrt().matrix(), {x.id()});
}

Tensor row_l2_norm(const Tensor& x) {
    return TapeAccess::record(x, Op::row_l2_norm, x.value().rowwise().norm(), {x.id()});
}

Tensor affine_scalar(const Tensor& x, double scale, double offset) {
    TapeAccess::Node n;
    n.op = Op::affine_scalar;
    n.value = (x.value().array() * scale + offset).matrix();
    n.parents = {x.id()};
    n.a = scale;
    n.b = offset;
    return TapeAccess::record_node(x, std::move(n));
}

Tensor broadcast(const Tensor& scalar, Index rows, Index cols) {
    if (scalar.value().size() != 1) throw ValidationError("broadcast: operand is " + shape_of(scalar.value()));
    return TapeAccess::record(scalar, Op::broadcast, Matrix::Constant(rows, cols, scalar.item()), {scalar.id()});
}

Tensor broadcast_rows(const Tensor& row, Index rows) {
    if (row.rows() != 1) throw ValidationError("broadcast_rows: operand is " + shape_of(row.value()));
    return TapeAccess::record(row, Op::broadcast_rows, row.value().replicate(rows, 1), {row.id()});
}

Tensor broadcast_cols(const Tensor& col, Index cols) {
    if (col.cols() != 1) throw ValidationError("broadcast_cols: operand is " + shape_of(col.value()));
    return TapeAccess::record(col, Op::broadcast_cols, col.value().replicate(1, cols), {col.id()});
}

Tensor sum_rows(const Tensor& x) {
    return TapeAccess::record(x, Op::sum_rows, x.value().colwise().sum(), {x.id()});
}

Tensor sum_cols(const Tensor& x) {
    return TapeAccess::record(x, Op::sum_cols, x.value().rowwise().sum(), {x.id()});
}

// ---------------------------------------------------------------------------
// Reverse pass

void Tape::backward(std::size_t id, const Tensor& g, const std::vector<char>& needs, std::vector<Tensor>& out) {
    // Copy what we need: `nodes_` may grow while gradient ops are recorded.
    const Op kind = nodes_[id].op;
    const std::vector<std::size_t> parents = nodes_[id].parents;
    const double a = nodes_[id].a;
    const Index i0 = nodes_[id].i0;
    const bool ta = nodes_[id].trans_a;
    const bool tb = nodes_[id].trans_b;
    const Tensor self(this, id);
    auto p = [&](std::size_t k) { return Tensor(this, parents[k]); };
    auto need = [&](std::size_t k) { return needs[parents[k]] != 0; };

    out.assign(parents.size(), Tensor());
    switch (kind) {
        case Op::leaf:
            break;
        case Op::add:
            if (need(0)) out[0] = g;
            if (need(1)) out[1] = g;
            break;
        case Op::sub:
            if (need(0)) out[0] = g;
            if (need(1)) out[1] = affine_scalar(g, -1.0, 0.0);
            break;
        case Op::mul:
            if (need(0)) out[0] = mul(g, p(1));
            if (need(1)) out[1] = mul(g, p(0));
            break;
        case Op::div:
            if (need(0)) out[0] = div(g, p(1));
            if (need(1)) out[1] = affine_scalar(div(mul(g, self), p(1)), -1.0, 0.0);
            break;
        case Op::div_or_zero:
            if (need(0)) out[0] = div_or_zero(g, p(1));
            if (need(1)) out[1] = affine_scalar(div_or_zero(mul(g, self), p(1)), -1.0, 0.0);
            break;
        case Op::matmul:
            if (!ta && !tb) {
                if (need(0)) out[0] = matmul(g, p(1), false, true);
                if (need(1)) out[1] = matmul(p(0), g, true, false);
            } else if (!ta && tb) {
                if (need(0)) out[0] = matmul(g, p(1), false, false);
                if (need(1)) out[1] = matmul(g, p(0), true, false);
            } else if (ta && !tb) {
                if (need(0)) out[0] = matmul(p(1), g, false, true);
                if (need(1)) out[1] = matmul(p(0), g, false, false);
            } else {
                if (need(0)) out[0] = matmul(p(1), g, true, true);
                if (need(1)) out[1] = matmul(g, p(0), true, true);
            }
            break;
        case Op::affine:
            if (need(0)) out[0] = matmul(g, p(1), false, true);
            if (need(1)) out[1] = matmul(p(0), g, true, false);
            if (need(2)) out[2] = sum_rows(g);
            break;
        case Op::leaky_relu:
            if (need(0)) {
                Matrix slope = value(parents[0]).unaryExpr([a](double e) { return e > 0.0 ? 1.0 : a; });
                out[0] = mul(g, constant(std::move(slope)));
            }
            break;
        case Op::tanh:
            if (need(0)) out[0] = mul(g, affine_scalar(square(self), -1.0, 1.0));
            break;
        case Op::concat_cols: {
            Index offset = 0;
            for (std::size_t k = 0; k < parents.size(); ++k) {
                const Index width = value(parents[k]).cols();
                if (need(k)) out[k] = slice_cols(g, offset, width);
                offset += width;
            }
            break;
        }
        case Op::slice_cols:
            if (need(0)) out[0] = embed_cols(g, i0, value(parents[0]).cols());
            break;
        case Op::embed_cols:
            if (need(0)) out[0] = slice_cols(g, i0, value(parents[0]).cols());
            break;
        case Op::sum:
            if (need(0)) out[0] = broadcast(g, value(parents[0]).rows(), value(parents[0]).cols());
            break;
        case Op::mean:
            if (need(0)) {
                const Matrix& x = value(parents[0]);
                out[0] = broadcast(affine_scalar(g, 1.0 / static_cast<double>(x.size()), 0.0), x.rows(), x.cols());
            }
            break;
        case Op::square:
            if (need(0)) out[0] = mul(g, affine_scalar(p(0), 2.0, 0.0));
            break;
        case Op::sqrt:
            if (need(0)) out[0] = div(affine_scalar(g, 0.5, 0.0), self);
            break;
        case Op::row_l2_norm:
            if (need(0)) out[0] = mul(broadcast_cols(div_or_zero(g, self), value(parents[0]).cols()), p(0));
            break;
        case Op::affine_scalar:
            if (need(0)) out[0] = affine_scalar(g, a, 0.0);
            break;
        case Op::broadcast:
            if (need(0)) out[0] = sum(g);
            break;
        case Op::broadcast_rows:
            if (need(0)) out[0] = sum_rows(g);
            break;
        case Op::broadcast_cols:
            if (need(0)) out[0] = sum_cols(g);
            break;
        case Op::sum_rows:
            if (need(0)) out[0] = broadcast_rows(g, value(parents[0]).rows());
            break;
        case Op::sum_cols:
            if (need(0)) out[0] = broadcast_cols(g, value(parents[0]).cols());
            break;
    }
}

std::vector<Tensor> Tape::gradient(const Tensor& output, std::span<const Tensor> inputs, bool create_graph) {
    diagnostics_.clear();
    if (output.tape() != this) throw ValidationError("gradient: output does not belong to this tape");
    if (output.value().size() != 1) {
        throw ValidationError("gradient: output must be scalar, got " + shape_of(output.value()));
    }
    const std::size_t last = output.id();

    // needs[i]: node i lies on a path from some input to the output's ancestors.
    std::vector<char> needs(last + 1, 0);
    for (const auto& in : inputs) {
        if (in.tape() != this) throw ValidationError("gradient: input does not belong to this tape");
        if (in.id() <= last) needs[in.id()] = 1;
    }
    for (std::size_t i = 0; i <= last; ++i) {
        if (needs[i] || !nodes_[i].requires_grad) continue;
        for (std::size_t parent : nodes_[i].parents) {
            if (needs[parent]) {
                needs[i] = 1;
                break;
            }
        }
    }

    const bool saved = recording_;
    recording_ = create_graph;
    std::vector<Tensor> grads(last + 1);
    std::vector<Tensor> contributions;
    try {
        if (needs[last]) {
            grads[last] = constant(Matrix::Ones(1, 1));
            for (std::size_t i = last + 1; i-- > 0;) {
                if (!grads[i].valid() || !needs[i] || nodes_[i].op == Op::leaf) continue;
                backward(i, grads[i], needs, contributions);
                const auto& parents = nodes_[i].parents;
                for (std::size_t k = 0; k < parents.size(); ++k) {
                    if (!contributions[k].valid()) continue;
                    Tensor& slot = grads[parents[k]];
                    slot = slot.valid() ? add(slot, contributions[k]) : contributions[k];
                }
            }
        }
    } catch (...) {
        recording_ = saved;
        throw;
    }
    recording_ = saved;

    std::vector<Tensor> result;
    result.reserve(inputs.size());
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor& in = inputs[k];
        if (in.id() <= last && grads[in.id()].valid()) {
            result.push_back(grads[in.id()]);
        } else {
            diagnostics_.push_back("input " + std::to_string(k) + " (node " + std::to_string(in.id()) +
                                   ") does not reach the output; gradient is zero");
            result.push_back(constant(Matrix::Zero(in.rows(), in.cols())));
        }
    }
    return result;
}

// ---------------------------------------------------------------------------

FiniteDifferenceReport finite_difference_check(const ScalarFn& fn, std::span<Matrix* const> params,
                                               const FiniteDifferenceOptions& options) {
    std::vector<Matrix> tape_grads;
    {
        Tape tape;
        std::vector<Tensor> vars;
        for (Matrix* p : params) vars.push_back(tape.variable_ref(*p));
        Tensor out = fn(tape, vars);
        for (const auto& g : tape.gradient(out, vars)) tape_grads.push_back(g.value());
    }

    auto evaluate = [&]() {
        Tape tape;
        std::vector<Tensor> vars;
        for (Matrix* p : params) vars.push_back(tape.constant_ref(*p));
        return fn(tape, vars).item();
    };

    FiniteDifferenceReport report;
    std::mt19937_64 rng(options.sample_seed);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& p = *params[k];
        std::vector<Index> entries(static_cast<std::size_t>(p.size()));
        for (Index e = 0; e < p.size(); ++e) entries[static_cast<std::size_t>(e)] = e;
        if (options.max_entries_per_param > 0 && entries.size() > options.max_entries_per_param) {
            std::shuffle(entries.begin(), entries.end(), rng);
            entries.resize(options.max_entries_per_param);
            std::sort(entries.begin(), entries.end());
        }
        for (Index e : entries) {
            const Index r = e % p.rows();
            const Index c = e / p.rows();
            const double original = p(r, c);
            p(r, c) = original + options.step;
            const double plus = evaluate();
            p(r, c) = original - options.step;
            const double minus = evaluate();
            p(r, c) = original;
            const double numeric = (plus - minus) / (2.0 * options.step);
            const double analytic = tape_grads[k](r, c);
            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
            const double rel = std::abs(numeric - analytic) / denom;
            ++report.entries_checked;
            if (rel > report.max_relative_error) {
                report.max_relative_error = rel;
                report.worst_param = k;
                report.worst_row = r;
                report.worst_col = c;
                report.worst_tape = analytic;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace hcgan::ad
