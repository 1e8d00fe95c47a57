#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sfgnn/matrix.hpp"
#include "sfgnn/rng.hpp"

namespace sfgnn {

using ValueId = std::size_t;

enum class OpKind {
    Constant,
    Param,
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    ScalarMul,
    RowGather,
    SegmentSum,
    Sigmoid,
    Tanh,
    Relu,
    SoftmaxRows,
    Log,
    Mean,
    Sum,
    ConcatRows,
    ConcatCols,
    SliceCols,
    L2NormRows,
    RowSum,
    RowMax,
    RowSelect,
    Detach,
    GumbelSoftmax,
    BceWithLogits,
    MaskedCeWithLogits,
};

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Constant: return "constant";
        case OpKind::Param: return "param";
        case OpKind::MatMul: return "matmul";
        case OpKind::Transpose: return "transpose";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::ScalarMul: return "scalar_mul";
        case OpKind::RowGather: return "row_gather";
        case OpKind::SegmentSum: return "segment_sum";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Tanh: return "tanh";
        case OpKind::Relu: return "relu";
        case OpKind::SoftmaxRows: return "softmax_rows";
        case OpKind::Log: return "log";
        case OpKind::Mean: return "mean";
        case OpKind::Sum: return "sum";
        case OpKind::ConcatRows: return "concat_rows";
        case OpKind::ConcatCols: return "concat_cols";
        case OpKind::SliceCols: return "slice_cols";
        case OpKind::L2NormRows: return "l2norm_rows";
        case OpKind::RowSum: return "row_sum";
        case OpKind::RowMax: return "row_max";
        case OpKind::RowSelect: return "row_select";
        case OpKind::Detach: return "detach";
        case OpKind::GumbelSoftmax: return "gumbel_softmax";
        case OpKind::BceWithLogits: return "bce_with_logits";
        case OpKind::MaskedCeWithLogits: return "masked_ce_with_logits";
    }
    return "?";
}

namespace detail {

inline double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

inline bool broadcast_compatible(std::size_t a, std::size_t b) {
    return a == b || a == 1 || b == 1;
}

}  // namespace detail

/// Reverse-mode autodiff tape over DenseMatrix values.
///
/// Operations execute eagerly; every call records an operation node with its
/// cached forward value, so one backward() pass can replay the chain rule in
/// reverse topological order. Parameters are registered leaves: backward()
/// returns one gradient per registered parameter (zeros when the parameter is
/// unreachable from the loss). Every produced value is checked finite; a
/// NaN/Inf result raises instead of propagating.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // ---- leaves ------------------------------------------------------------

    ValueId constant(DenseMatrix v) {
        check_finite_input(v, "constant");
        return push_leaf(OpKind::Constant, std::move(v));
    }

    ValueId scalar(double v) { return constant(DenseMatrix::scalar(v)); }

    /// Register a named trainable parameter and place its current value.
    ValueId param(const std::string& name, const DenseMatrix& v) {
        check_finite_input(v, "param");
        for (const auto& [n, id] : params_) {
            if (n == name) {
                throw std::invalid_argument("param '" + name + "' registered twice");
            }
        }
        ValueId id = push_leaf(OpKind::Param, v);
        params_.emplace_back(name, id);
        return id;
    }

    const DenseMatrix& value(ValueId id) const { return vals_.at(id); }
    std::size_t num_nodes() const { return nodes_.size(); }
    const std::vector<std::pair<std::string, ValueId>>& params() const { return params_; }

    // ---- op catalogue -------------------------------------------------------

    ValueId matmul(ValueId a, ValueId b) {
        const DenseMatrix& A = vals_[a];
        const DenseMatrix& B = vals_[b];
        if (A.cols() != B.rows()) {
            throw_shape(OpKind::MatMul, A, B);
        }
        DenseMatrix out(A.rows(), B.cols());
        for (std::size_t i = 0; i < A.rows(); ++i) {
            for (std::size_t j = 0; j < B.cols(); ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < A.cols(); ++k) acc += A(i, k) * B(k, j);
                out(i, j) = acc;
            }
        }
        return push(OpKind::MatMul, {a, b}, std::move(out));
    }

    ValueId transpose(ValueId a) {
        const DenseMatrix& A = vals_[a];
        DenseMatrix out(A.cols(), A.rows());
        for (std::size_t i = 0; i < A.rows(); ++i)
            for (std::size_t j = 0; j < A.cols(); ++j) out(j, i) = A(i, j);
        return push(OpKind::Transpose, {a}, std::move(out));
    }

    ValueId add(ValueId a, ValueId b) { return binary(OpKind::Add, a, b); }
    ValueId sub(ValueId a, ValueId b) { return binary(OpKind::Sub, a, b); }
    ValueId mul(ValueId a, ValueId b) { return binary(OpKind::Mul, a, b); }

    ValueId scalar_mul(ValueId a, double c) {
        const DenseMatrix& A = vals_[a];
        DenseMatrix out = A;
        for (double& v : out.values()) v *= c;
        Node n(OpKind::ScalarMul, {a});
        n.scalar = c;
        return push(std::move(n), std::move(out));
    }

    ValueId row_gather(ValueId a, std::vector<std::size_t> ids) {
        const DenseMatrix& A = vals_[a];
        DenseMatrix out(ids.size(), A.cols());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (ids[i] >= A.rows()) {
                throw std::out_of_range("row_gather: index " + std::to_string(ids[i]) +
                                        " out of range for " + A.shape_str());
            }
            for (std::size_t j = 0; j < A.cols(); ++j) out(i, j) = A(ids[i], j);
        }
        Node n(OpKind::RowGather, {a});
        n.indices = std::move(ids);
        return push(std::move(n), std::move(out));
    }

    /// Sum rows of a into n_segments buckets given per-row segment ids.
    /// Accumulation runs in row order, so results are deterministic.
    ValueId segment_sum(ValueId a, std::vector<std::size_t> seg, std::size_t n_segments) {
        const DenseMatrix& A = vals_[a];
        if (seg.size() != A.rows()) {
            throw std::invalid_argument("segment_sum: " + std::to_string(seg.size()) +
                                        " segment ids for " + A.shape_str());
        }
        DenseMatrix out(n_segments, A.cols(), 0.0);
        for (std::size_t i = 0; i < A.rows(); ++i) {
            if (seg[i] >= n_segments) {
                throw std::out_of_range("segment_sum: segment id " + std::to_string(seg[i]) +
                                        " >= " + std::to_string(n_segments));
            }
            for (std::size_t j = 0; j < A.cols(); ++j) out(seg[i], j) += A(i, j);
        }
        Node n(OpKind::SegmentSum, {a});
        n.indices = std::move(seg);
        return push(std::move(n), std::move(out));
    }

    ValueId sigmoid(ValueId a) {
        DenseMatrix out = vals_[a];
        for (double& v : out.values()) v = detail::stable_sigmoid(v);
        return push(OpKind::Sigmoid, {a}, std::move(out));
    }

    ValueId tanh(ValueId a) {
        DenseMatrix out = vals_[a];
        for (double& v : out.values()) v = std::tanh(v);
        return push(OpKind::Tanh, {a}, std::move(out));
    }

    ValueId relu(ValueId a) {
        DenseMatrix out = vals_[a];
        for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
        return push(OpKind::Relu, {a}, std::move(out));
    }

    ValueId softmax_rows(ValueId a) {
        const DenseMatrix& A = vals_[a];
        DenseMatrix out(A.rows(), A.cols());
        for (std::size_t i = 0; i < A.rows(); ++i) {
            double mx = A(i, 0);
            for (std::size_t j = 1; j < A.cols(); ++j) mx = std::max(mx, A(i, j));
            double z = 0.0;
            for (std::size_t j = 0; j < A.cols(); ++j) {
                out(i, j) = std::exp(A(i, j) - mx);
                z += out(i, j);
            }
            for (std::size_t j = 0; j < A.cols(); ++j) out(i, j) /= z;
        }
        return push(OpKind::SoftmaxRows, {a}, std::move(out));
    }

    ValueId log(ValueId a) {
        DenseMatrix out = vals_[a];
        for (double& v : out.values()) v = std::log(v);
        return push(OpKind::Log, {a}, std::move(out));
    }

    ValueId mean(ValueId a) {
        const DenseMatrix& A = vals_[a];
        if (A.size() == 0) throw std::invalid_argument("mean: empty matrix");
        double acc = 0.0;
        for (double v : A.values()) acc += v;
        return push(OpKind::Mean, {a}, DenseMatrix::scalar(acc / static_cast<double>(A.size())));
    }

    ValueId sum(ValueId a) {
        const DenseMatrix& A = vals_[a];
        double acc = 0.0;
        for (double v : A.values()) acc += v;
        return push(OpKind::Sum, {a}, DenseMatrix::scalar(acc));
    }

    ValueId concat_rows(ValueId a, ValueId b) {
        const DenseMatrix& A = vals_[a];
        const DenseMatrix& B = vals_[b];
        if (A.cols() != B.cols()) throw_shape(OpKind::ConcatRows, A, B);
        DenseMatrix out(A.rows() + B.rows(), A.cols());
        std::copy(A.values().begin(), A.values().end(), out.values().begin());
        std::copy(B.values().begin(), B.values().end(), out.values().begin() + A.size());
        return push(OpKind::ConcatRows, {a, b}, std::move(out));
    }

    ValueId concat_cols(ValueId a, ValueId b) {
        const DenseMatrix& A = vals_[a];
        const DenseMatrix& B = vals_[b];
        if (A.rows() != B.rows()) throw_shape(OpKind::ConcatCols, A, B);
        DenseMatrix out(A.rows(), A.cols() + B.cols());
        for (std::size_t i = 0; i < A.rows(); ++i) {
            for (std::size_t j = 0; j < A.cols(); ++j) out(i, j) = A(i, j);
            for (std::size_t j = 0; j < B.cols(); ++j) out(i, A.cols() + j) = B(i, j);
        }
        return push(OpKind::ConcatCols, {a, b}, std::move(out));
    }

    ValueId slice_cols(ValueId a, std::size_t start, std::size_t len) {
        const DenseMatrix& A = vals_[a];
        if (start + len > A.cols()) {
            throw std::out_of_range("slice_cols: [" + std::to_string(start) + ", " +
                                    std::to_string(start + len) + ") out of " + A.shape_str());
        }
        DenseMatrix out(A.rows(), len);
        for (std::size_t i = 0; i < A.rows(); ++i)
            for (std::size_t j = 0; j < len; ++j) out(i, j) = A(i, start + j);
        Node n(OpKind::SliceCols, {a});
        n.extent = start;
        n.extent2 = len;
        return push(std::move(n), std::move(out));
    }

    ValueId l2norm_rows(ValueId a) {
        const DenseMatrix& A = vals_[a];
        DenseMatrix out(A.rows(), 1);
        for (std::size_t i = 0; i < A.rows(); ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < A.cols(); ++j) acc += A(i, j) * A(i, j);
            out(i, 0) = std::sqrt(acc);
        }
        return push(OpKind::L2NormRows, {a}, std::move(out));
    }

    ValueId row_sum(ValueId a) {
        const DenseMatrix& A = vals_[a];
        DenseMatrix out(A.rows(), 1);
        for (std::size_t i = 0; i < A.rows(); ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < A.cols(); ++j) acc += A(i, j);
            out(i, 0) = acc;
        }
        return push(OpKind::RowSum, {a}, std::move(out));
    }

    /// Row-wise maximum; gradient routes to the (first) argmax entry.
    ValueId row_max(ValueId a) {
        const DenseMatrix& A = vals_[a];
        if (A.cols() == 0) throw std::invalid_argument("row_max: zero columns");
        DenseMatrix out(A.rows(), 1);
        Node n(OpKind::RowMax, {a});
        n.indices.resize(A.rows());
        for (std::size_t i = 0; i < A.rows(); ++i) {
            std::size_t arg = 0;
            for (std::size_t j = 1; j < A.cols(); ++j)
                if (A(i, j) > A(i, arg)) arg = j;
            n.indices[i] = arg;
            out(i, 0) = A(i, arg);
        }
        return push(std::move(n), std::move(out));
    }

    /// out[i, 0] = a[i, cols[i]].
    ValueId row_select(ValueId a, std::vector<std::size_t> cols) {
        const DenseMatrix& A = vals_[a];
        if (cols.size() != A.rows()) {
            throw std::invalid_argument("row_select: " + std::to_string(cols.size()) +
                                        " indices for " + A.shape_str());
        }
        DenseMatrix out(A.rows(), 1);
        for (std::size_t i = 0; i < A.rows(); ++i) {
            if (cols[i] >= A.cols()) {
                throw std::out_of_range("row_select: column " + std::to_string(cols[i]) +
                                        " out of range for " + A.shape_str());
            }
            out(i, 0) = A(i, cols[i]);
        }
        Node n(OpKind::RowSelect, {a});
        n.indices = std::move(cols);
        return push(std::move(n), std::move(out));
    }

    /// Identity forward, zero backward.
    ValueId detach(ValueId a) {
        return push(OpKind::Detach, {a}, vals_[a]);
    }

    /// Row-wise Gumbel-softmax sample of the logits. Soft mode returns
    /// softmax((logits + g) / temperature); hard mode returns the one-hot
    /// argmax of the soft sample while backward uses the soft sample's
    /// gradient (straight-through).
    ValueId gumbel_softmax(ValueId logits, double temperature, bool hard, RngStream& rng) {
        if (!(temperature > 0.0)) {
            throw std::invalid_argument("gumbel_softmax: temperature must be > 0, got " +
                                        std::to_string(temperature));
        }
        const DenseMatrix& L = vals_[logits];
        if (!L.all_finite()) {
            throw std::domain_error("gumbel_softmax: non-finite logit");
        }
        if (L.cols() < 2) {
            throw std::invalid_argument("gumbel_softmax: need >= 2 categories, got " + L.shape_str());
        }
        DenseMatrix soft(L.rows(), L.cols());
        for (std::size_t i = 0; i < L.rows(); ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < L.cols(); ++j) {
                soft(i, j) = (L(i, j) + rng.next_gumbel()) / temperature;
                mx = std::max(mx, soft(i, j));
            }
            double z = 0.0;
            for (std::size_t j = 0; j < L.cols(); ++j) {
                soft(i, j) = std::exp(soft(i, j) - mx);
                z += soft(i, j);
            }
            for (std::size_t j = 0; j < L.cols(); ++j) soft(i, j) /= z;
        }
        DenseMatrix out = soft;
        if (hard) {
            for (std::size_t i = 0; i < L.rows(); ++i) {
                std::size_t arg = 0;
                for (std::size_t j = 1; j < L.cols(); ++j)
                    if (soft(i, j) > soft(i, arg)) arg = j;
                for (std::size_t j = 0; j < L.cols(); ++j) out(i, j) = (j == arg) ? 1.0 : 0.0;
            }
        }
        Node n(OpKind::GumbelSoftmax, {logits});
        n.scalar = temperature;
        n.aux = std::move(soft);
        return push(std::move(n), std::move(out));
    }

    /// Mean binary cross-entropy over sigmoid(scores) against 0/1 labels,
    /// computed in the log-sum-exp form so |score| up to ~1e3 stays finite.
    ValueId bce_with_logits(ValueId scores, std::vector<double> labels) {
        const DenseMatrix& S = vals_[scores];
        if (S.size() != labels.size()) {
            throw std::invalid_argument("bce_with_logits: " + std::to_string(labels.size()) +
                                        " labels for " + S.shape_str());
        }
        if (S.size() == 0) throw std::invalid_argument("bce_with_logits: empty batch");
        double acc = 0.0;
        for (std::size_t i = 0; i < S.size(); ++i) {
            double y = labels[i];
            if (y != 0.0 && y != 1.0) {
                throw std::invalid_argument("bce_with_logits: label must be 0 or 1, got " +
                                            std::to_string(y));
            }
            double f = S.values()[i];
            // -y log sigmoid(f) - (1-y) log(1 - sigmoid(f)); the branch form
            // keeps tiny losses exact where softplus(f) - y f would cancel.
            acc += y == 1.0 ? detail::softplus(-f) : detail::softplus(f);
        }
        Node n(OpKind::BceWithLogits, {scores});
        n.weights = std::move(labels);
        return push(std::move(n), DenseMatrix::scalar(acc / static_cast<double>(S.size())));
    }

    /// Mean negative log-softmax-probability of the true class over the rows
    /// listed in mask. Stable for arbitrary logit magnitudes.
    ValueId masked_ce_with_logits(ValueId logits, const std::vector<std::size_t>& labels,
                                  std::vector<std::size_t> mask) {
        const DenseMatrix& Z = vals_[logits];
        if (labels.size() != Z.rows()) {
            throw std::invalid_argument("masked_ce_with_logits: " + std::to_string(labels.size()) +
                                        " labels for " + Z.shape_str());
        }
        if (mask.empty()) throw std::invalid_argument("masked_ce_with_logits: empty mask");
        Node n(OpKind::MaskedCeWithLogits, {logits});
        n.aux = DenseMatrix(Z.rows(), Z.cols(), 0.0);  // softmax rows, masked rows only
        double acc = 0.0;
        for (std::size_t r : mask) {
            if (r >= Z.rows()) {
                throw std::out_of_range("masked_ce_with_logits: mask row " + std::to_string(r) +
                                        " out of range");
            }
            std::size_t y = labels[r];
            if (y >= Z.cols()) {
                throw std::out_of_range("masked_ce_with_logits: label " + std::to_string(y) +
                                        " out of range for " + std::to_string(Z.cols()) + " classes");
            }
            double mx = Z(r, 0);
            for (std::size_t j = 1; j < Z.cols(); ++j) mx = std::max(mx, Z(r, j));
            double z = 0.0;
            for (std::size_t j = 0; j < Z.cols(); ++j) z += std::exp(Z(r, j) - mx);
            for (std::size_t j = 0; j < Z.cols(); ++j) n.aux(r, j) = std::exp(Z(r, j) - mx) / z;
            acc += mx + std::log(z) - Z(r, y);
            n.indices.push_back(y);
        }
        n.mask = std::move(mask);
        DenseMatrix loss = DenseMatrix::scalar(acc / static_cast<double>(n.mask.size()));
        return push(std::move(n), std::move(loss));
    }

    // ---- backward -----------------------------------------------------------

    /// Run reverse-mode accumulation from a scalar loss. Returns one gradient
    /// per registered parameter (zeros for parameters the loss does not
    /// reach). A tape supports exactly one backward pass.
    std::map<std::string, DenseMatrix> backward(ValueId loss) {
        if (consumed_) {
            throw std::logic_error("backward: tape already consumed");
        }
        consumed_ = true;
        const DenseMatrix& L = vals_.at(loss);
        if (!L.is_scalar()) {
            throw std::invalid_argument("backward: loss must be 1x1, got " + L.shape_str());
        }
        std::vector<DenseMatrix> grads(vals_.size());
        grads[loss] = DenseMatrix::scalar(1.0);
        for (std::size_t ni = nodes_.size(); ni-- > 0;) {
            const Node& n = nodes_[ni];
            if (grads[n.output].size() == 0) continue;  // not reached from loss
            accumulate(n, grads);
        }
        std::map<std::string, DenseMatrix> out;
        for (const auto& [name, id] : params_) {
            if (grads[id].size() != 0) {
                out.emplace(name, std::move(grads[id]));
            } else {
                out.emplace(name, DenseMatrix(vals_[id].rows(), vals_[id].cols(), 0.0));
            }
        }
        return out;
    }

private:
    struct Node {
        Node(OpKind k, std::vector<ValueId> in) : op(k), inputs(std::move(in)) {}
        OpKind op;
        std::vector<ValueId> inputs;
        ValueId output = 0;
        double scalar = 0.0;
        std::size_t extent = 0;
        std::size_t extent2 = 0;
        std::vector<std::size_t> indices;
        std::vector<std::size_t> mask;
        std::vector<double> weights;
        DenseMatrix aux;
    };

    [[noreturn]] void throw_shape(OpKind k, const DenseMatrix& a, const DenseMatrix& b) const {
        throw std::invalid_argument(std::string(op_name(k)) + ": incompatible shapes " +
                                    a.shape_str() + " vs " + b.shape_str());
    }

    static void check_finite_input(const DenseMatrix& v, const char* what) {
        if (!v.all_finite()) {
            throw std::domain_error(std::string(what) + ": non-finite value placed on tape");
        }
    }

    ValueId push_leaf(OpKind k, DenseMatrix v) {
        vals_.push_back(std::move(v));
        Node n(k, {});
        n.output = vals_.size() - 1;
        nodes_.push_back(std::move(n));
        return vals_.size() - 1;
    }

    ValueId push(OpKind k, std::vector<ValueId> inputs, DenseMatrix out) {
        return push(Node(k, std::move(inputs)), std::move(out));
    }

    ValueId push(Node n, DenseMatrix out) {
        if (!out.all_finite()) {
            throw std::domain_error(std::string(op_name(n.op)) + ": produced non-finite result");
        }
        vals_.push_back(std::move(out));
        ValueId id = vals_.size() - 1;
        n.output = id;
        nodes_.push_back(std::move(n));
        return id;
    }

    // Elementwise binary with 2-D broadcasting (full shape, 1x1, one shared
    // row, or one shared column on either side).
    ValueId binary(OpKind k, ValueId a, ValueId b) {
        const DenseMatrix& A = vals_[a];
        const DenseMatrix& B = vals_[b];
        if (!detail::broadcast_compatible(A.rows(), B.rows()) ||
            !detail::broadcast_compatible(A.cols(), B.cols())) {
            throw_shape(k, A, B);
        }
        std::size_t R = std::max(A.rows(), B.rows());
        std::size_t C = std::max(A.cols(), B.cols());
        DenseMatrix out(R, C);
        for (std::size_t i = 0; i < R; ++i) {
            for (std::size_t j = 0; j < C; ++j) {
                double x = A(A.rows() == 1 ? 0 : i, A.cols() == 1 ? 0 : j);
                double y = B(B.rows() == 1 ? 0 : i, B.cols() == 1 ? 0 : j);
                switch (k) {
                    case OpKind::Add: out(i, j) = x + y; break;
                    case OpKind::Sub: out(i, j) = x - y; break;
                    case OpKind::Mul: out(i, j) = x * y; break;
                    default: throw std::logic_error("binary: bad op");
                }
            }
        }
        return push(k, {a, b}, std::move(out));
    }

    // Add g (shaped like the op output) into the gradient slot of input id,
    // summing over any dimensions that were broadcast on the forward pass.
    void accumulate_broadcast(std::vector<DenseMatrix>& grads, ValueId id, const DenseMatrix& g) {
        const DenseMatrix& shape = vals_[id];
        DenseMatrix& slot = ensure(grads, id);
        for (std::size_t i = 0; i < g.rows(); ++i) {
            for (std::size_t j = 0; j < g.cols(); ++j) {
                slot(shape.rows() == 1 ? 0 : i, shape.cols() == 1 ? 0 : j) += g(i, j);
            }
        }
    }

    DenseMatrix& ensure(std::vector<DenseMatrix>& grads, ValueId id) {
        if (grads[id].size() == 0 && vals_[id].size() != 0) {
            grads[id] = DenseMatrix(vals_[id].rows(), vals_[id].cols(), 0.0);
        }
        return grads[id];
    }

    void accumulate(const Node& n, std::vector<DenseMatrix>& grads) {
        const DenseMatrix& g = grads[n.output];
        switch (n.op) {
            case OpKind::Constant:
            case OpKind::Param:
            case OpKind::Detach:
                break;
            case OpKind::MatMul: {
                const DenseMatrix& A = vals_[n.inputs[0]];
                const DenseMatrix& B = vals_[n.inputs[1]];
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                DenseMatrix& gb = ensure(grads, n.inputs[1]);
                // dA = g . B^T ; dB = A^T . g
                for (std::size_t i = 0; i < A.rows(); ++i)
                    for (std::size_t k = 0; k < A.cols(); ++k) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < B.cols(); ++j) acc += g(i, j) * B(k, j);
                        ga(i, k) += acc;
                    }
                for (std::size_t k = 0; k < B.rows(); ++k)
                    for (std::size_t j = 0; j < B.cols(); ++j) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < A.rows(); ++i) acc += A(i, k) * g(i, j);
                        gb(k, j) += acc;
                    }
                break;
            }
            case OpKind::Transpose: {
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) ga(j, i) += g(i, j);
                break;
            }
            case OpKind::Add:
                accumulate_broadcast(grads, n.inputs[0], g);
                accumulate_broadcast(grads, n.inputs[1], g);
                break;
            case OpKind::Sub: {
                accumulate_broadcast(grads, n.inputs[0], g);
                DenseMatrix neg = g;
                for (double& v : neg.values()) v = -v;
                accumulate_broadcast(grads, n.inputs[1], neg);
                break;
            }
            case OpKind::Mul: {
                const DenseMatrix& A = vals_[n.inputs[0]];
                const DenseMatrix& B = vals_[n.inputs[1]];
                DenseMatrix ga(g.rows(), g.cols());
                DenseMatrix gb(g.rows(), g.cols());
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) {
                        double x = A(A.rows() == 1 ? 0 : i, A.cols() == 1 ? 0 : j);
                        double y = B(B.rows() == 1 ? 0 : i, B.cols() == 1 ? 0 : j);
                        ga(i, j) = g(i, j) * y;
                        gb(i, j) = g(i, j) * x;
                    }
                accumulate_broadcast(grads, n.inputs[0], ga);
                accumulate_broadcast(grads, n.inputs[1], gb);
                break;
            }
            case OpKind::ScalarMul: {
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i)
                    ga.values()[i] += n.scalar * g.values()[i];
                break;
            }
            case OpKind::RowGather: {
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                for (std::size_t i = 0; i < n.indices.size(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) ga(n.indices[i], j) += g(i, j);
                break;
            }
            case OpKind::SegmentSum: {
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                for (std::size_t i = 0; i < n.indices.size(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) += g(n.indices[i], j);
                break;
            }
            case OpKind::Sigmoid: {
                const DenseMatrix& s = vals_[n.output];
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    double sv = s.values()[i];
                    ga.values()[i] += g.values()[i] * sv * (1.0 - sv);
                }
                break;
            }
            case OpKind::Tanh: {
                const DenseMatrix& t = vals_[n.output];
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    double tv = t.values()[i];
                    ga.values()[i] += g.values()[i] * (1.0 - tv * tv);
                }
                break;
            }
            case OpKind::Relu: {
                const DenseMatrix& x = vals_[n.inputs[0]];
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (x.values()[i] > 0.0) ga.values()[i] += g.values()[i];
                break;
            }
            case OpKind::SoftmaxRows:
            case OpKind::GumbelSoftmax: {
                // Both use the softmax Jacobian; Gumbel additionally scales by
                // 1/temperature and differentiates the cached soft sample even
                // when the forward output was hard (straight-through).
                const DenseMatrix& s = n.op == OpKind::SoftmaxRows ? vals_[n.output] : n.aux;
                double scale = n.op == OpKind::SoftmaxRows ? 1.0 : 1.0 / n.scalar;
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                for (std::size_t i = 0; i < s.rows(); ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < s.cols(); ++j) dot += g(i, j) * s(i, j);
                    for (std::size_t j = 0; j < s.cols(); ++j)
                        ga(i, j) += scale * s(i, j) * (g(i, j) - dot);
                }
                break;
            }
            case OpKind::Log: {
                const DenseMatrix& x = vals_[n.inputs[0]];
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i)
                    ga.values()[i] += g.values()[i] / x.values()[i];
                break;
            }
            case OpKind::Mean: {
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                double gv = g.item() / static_cast<double>(ga.size());
                for (double& v : ga.values()) v += gv;
                break;
            }
            case OpKind::Sum: {
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                double gv = g.item();
                for (double& v : ga.values()) v += gv;
                break;
            }
            case OpKind::ConcatRows: {
                const DenseMatrix& A = vals_[n.inputs[0]];
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                DenseMatrix& gb = ensure(grads, n.inputs[1]);
                for (std::size_t i = 0; i < ga.size(); ++i) ga.values()[i] += g.values()[i];
                for (std::size_t i = 0; i < gb.size(); ++i)
                    gb.values()[i] += g.values()[A.size() + i];
                break;
            }
            case OpKind::ConcatCols: {
                const DenseMatrix& A = vals_[n.inputs[0]];
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                DenseMatrix& gb = ensure(grads, n.inputs[1]);
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    for (std::size_t j = 0; j < A.cols(); ++j) ga(i, j) += g(i, j);
                    for (std::size_t j = 0; j < gb.cols(); ++j) gb(i, j) += g(i, A.cols() + j);
                }
                break;
            }
            case OpKind::SliceCols: {
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) ga(i, n.extent + j) += g(i, j);
                break;
            }
            case OpKind::L2NormRows: {
                const DenseMatrix& x = vals_[n.inputs[0]];
                const DenseMatrix& norm = vals_[n.output];
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                for (std::size_t i = 0; i < x.rows(); ++i) {
                    if (norm(i, 0) == 0.0) continue;
                    double gv = g(i, 0) / norm(i, 0);
                    for (std::size_t j = 0; j < x.cols(); ++j) ga(i, j) += gv * x(i, j);
                }
                break;
            }
            case OpKind::RowSum: {
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                for (std::size_t i = 0; i < ga.rows(); ++i)
                    for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(i, 0);
                break;
            }
            case OpKind::RowMax: {
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                for (std::size_t i = 0; i < ga.rows(); ++i) ga(i, n.indices[i]) += g(i, 0);
                break;
            }
            case OpKind::RowSelect: {
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                for (std::size_t i = 0; i < ga.rows(); ++i) ga(i, n.indices[i]) += g(i, 0);
                break;
            }
            case OpKind::BceWithLogits: {
                const DenseMatrix& f = vals_[n.inputs[0]];
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                double gv = g.item() / static_cast<double>(f.size());
                for (std::size_t i = 0; i < f.size(); ++i) {
                    ga.values()[i] +=
                        gv * (detail::stable_sigmoid(f.values()[i]) - n.weights[i]);
                }
                break;
            }
            case OpKind::MaskedCeWithLogits: {
                DenseMatrix& ga = ensure(grads, n.inputs[0]);
                double gv = g.item() / static_cast<double>(n.mask.size());
                for (std::size_t mi = 0; mi < n.mask.size(); ++mi) {
                    std::size_t r = n.mask[mi];
                    std::size_t y = n.indices[mi];
                    for (std::size_t j = 0; j < ga.cols(); ++j) {
                        ga(r, j) += gv * (n.aux(r, j) - (j == y ? 1.0 : 0.0));
                    }
                }
                break;
            }
        }
    }

    std::vector<DenseMatrix> vals_;
    std::vector<Node> nodes_;
    std::vector<std::pair<std::string, ValueId>> params_;
    bool consumed_ = false;
};

}  // namespace sfgnn
