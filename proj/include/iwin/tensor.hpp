#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "iwin/error.hpp"
#include "iwin/rng.hpp"

namespace iwin {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);

class Tape;

// Dense row-major f64 tensor with value semantics. Copies share the
// underlying buffer; operations never mutate their inputs, so sharing is
// safe. data() exposes the raw buffer for initialization and optimizer
// updates only; do not write through it once a tensor has entered an op.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);  // zero-filled
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double value);
    static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }
    static Tensor scalar(double value) { return Tensor({1}, {value}); }
    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);
    static Tensor rand_uniform(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0);

    const Shape& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    std::int64_t dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::int64_t size() const;
    bool defined() const { return static_cast<bool>(buf_); }

    const double* data() const { return buf_->data(); }
    double* data() { return buf_->data(); }

    double item() const;  // value of a single-element tensor
    double at(std::initializer_list<std::int64_t> idx) const;

    // Same storage, no autograd linkage.
    Tensor detached() const;
    bool tracked() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    int node() const { return node_; }

private:
    Shape shape_;
    std::shared_ptr<std::vector<double>> buf_;
    Tape* tape_ = nullptr;
    int node_ = -1;

    friend class Tape;
    friend Tensor detail_alias(const Tensor& t, Shape s);
};

// Same buffer under a different shape (element count must match); drops any
// autograd linkage. Used by reshape().
Tensor detail_alias(const Tensor& t, Shape s);

// Reverse-mode tape. Operations on tracked tensors append a node holding the
// parent node ids and a vector-Jacobian closure; backward() replays the
// nodes in exact reverse execution order.
class Tape {
public:
    // A VJP receives the upstream gradient and returns one gradient per
    // recorded parent (entries for untracked parents are ignored).
    using Vjp = std::function<std::vector<Tensor>(const Tensor&)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Registers a leaf; the returned tensor shares storage with the input.
    Tensor watch(const Tensor& t);

    // loss must be a scalar recorded on this tape.
    void backward(const Tensor& loss);

    // d(loss)/d(t); zeros for tensors the loss never touched.
    Tensor grad(const Tensor& t) const;

    // Used by op implementations.
    Tensor record(Tensor out, const std::vector<const Tensor*>& parents, Vjp vjp);

    int num_nodes() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        std::vector<int> parents;  // -1 for untracked inputs
        Vjp vjp;
        Shape shape;
    };
    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    bool ran_ = false;

    void accumulate(int node, const Tensor& g);
};

// Returns the tape shared by the tracked inputs (nullptr when none are
// tracked); throws ContractError when inputs disagree.
Tape* common_tape(std::initializer_list<const Tensor*> ts);

// ---------------------------------------------------------------------------
// Differentiable operations. All are pure: inputs are never modified.

// Batched matrix product [..., m, k] x [..., k, n] -> [..., m, n] with
// numpy-style broadcasting of the leading extents.
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);

// Stable softmax over the last extent. Throws NumericError on non-finite
// input. The masked variant adds `mask` (entries 0 or -inf, broadcastable
// to x) to the logits before normalizing; mask is a constant, not an input.
Tensor softmax_lastdim(const Tensor& x);
Tensor masked_softmax_lastdim(const Tensor& x, const Tensor& mask);

// Normalizes the last extent to mean 0 / variance 1, then applies
// gamma * xhat + beta. gamma and beta have shape [C].
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Exact-erf GELU: x * Phi(x).
Tensor gelu(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);     // aliases storage
Tensor permute(const Tensor& x, std::vector<int> axes);

// Reorders x[B, N, ...] along dim 1 by a permutation: out[:, i] = x[:, perm[i]].
// perm must be a bijection on [0, N).
Tensor permute_dim1(const Tensor& x, const std::vector<std::int64_t>& perm);

// Gathers rows of x[N, ...]: out[i] = x[idx[i]]. Repeats allowed; the
// gradient scatter-adds.
Tensor index_rows(const Tensor& x, const std::vector<std::int64_t>& idx);

Tensor sum_all(const Tensor& x);                  // -> scalar
Tensor global_avg_pool(const Tensor& x);          // [B,H,W,C] -> [B,C]

// NHWC convolution, weights [Kh, Kw, Cin, Cout], bias [Cout].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);

// Per-channel NHWC convolution, weights [K, K, C], bias [C], stride 1,
// zero padding K/2 (shape-preserving). K must be odd.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& b);

// Causal per-channel 1-D convolution on [B, N, C]; weights [K, C], bias [C];
// left padding K-1 so y[t] depends on x[t-K+1 .. t].
Tensor causal_dwconv1d(const Tensor& x, const Tensor& w, const Tensor& b);

// Mean cross-entropy of softmax(logits[B, K]) against integer labels.
Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Shape utilities (non-differentiable helpers).

Shape broadcast_shapes(const Shape& a, const Shape& b);
bool same_shape(const Shape& a, const Shape& b);

// Maximum elementwise |a - b|.
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

}  // namespace iwin
