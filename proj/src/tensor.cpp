#include "iwin/tensor.hpp"

#include <cmath>
#include <numeric>

#include "iwin/kernels.hpp"

namespace iwin {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

static void validate_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor rank must be >= 1");
    for (auto e : shape) {
        if (e < 1) throw ShapeError("tensor extents must be >= 1, got " + shape_str(shape));
    }
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    buf_ = std::make_shared<std::vector<double>>(static_cast<std::size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
    validate_shape(shape_);
    if (static_cast<std::int64_t>(values.size()) != shape_numel(shape_)) {
        throw ShapeError("buffer length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape_));
    }
    buf_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.buf_->begin(), t.buf_->end(), value);
    return t;
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev) {
    Tensor t(std::move(shape));
    for (auto& v : *t.buf_) v = rng.normal() * stddev;
    return t;
}

Tensor Tensor::rand_uniform(Shape shape, Rng& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    for (auto& v : *t.buf_) v = rng.uniform(lo, hi);
    return t;
}

std::int64_t Tensor::size() const { return buf_ ? static_cast<std::int64_t>(buf_->size()) : 0; }

double Tensor::item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape_));
    return (*buf_)[0];
}

double Tensor::at(std::initializer_list<std::int64_t> idx) const {
    if (static_cast<int>(idx.size()) != ndim()) {
        throw BoundsError("index rank mismatch for shape " + shape_str(shape_));
    }
    std::int64_t lin = 0;
    int d = 0;
    for (auto i : idx) {
        if (i < 0 || i >= shape_[static_cast<std::size_t>(d)]) {
            throw BoundsError("index out of range for shape " + shape_str(shape_));
        }
        lin = lin * shape_[static_cast<std::size_t>(d)] + i;
        ++d;
    }
    return (*buf_)[static_cast<std::size_t>(lin)];
}

Tensor Tensor::detached() const {
    Tensor t = *this;
    t.tape_ = nullptr;
    t.node_ = -1;
    return t;
}

Tensor detail_alias(const Tensor& t, Shape s) {
    validate_shape(s);
    if (shape_numel(s) != t.size()) {
        throw ShapeError("alias " + shape_str(t.shape()) + " as " + shape_str(s) +
                         " changes element count");
    }
    Tensor out;
    out.shape_ = std::move(s);
    out.buf_ = t.buf_;
    return out;
}

// --------------------------------------------------------------------------
// Tape

Tensor Tape::watch(const Tensor& t) {
    if (!t.defined()) throw ContractError("watch() on an empty tensor");
    Tensor out = t.detached();
    out.tape_ = this;
    out.node_ = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{{}, nullptr, t.shape()});
    return out;
}

Tensor Tape::record(Tensor out, const std::vector<const Tensor*>& parents, Vjp vjp) {
    std::vector<int> ids;
    ids.reserve(parents.size());
    for (const Tensor* p : parents) {
        if (p->tracked() && p->tape() != this) {
            throw ContractError("operation mixes tensors from different tapes");
        }
        ids.push_back(p->tracked() ? p->node() : -1);
    }
    out.tape_ = this;
    out.node_ = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{std::move(ids), std::move(vjp), out.shape()});
    return out;
}

void Tape::accumulate(int node, const Tensor& g) {
    Tensor& slot = grads_[static_cast<std::size_t>(node)];
    if (!slot.defined()) {
        slot = g.detached();
        return;
    }
    if (!same_shape(slot.shape(), g.shape())) {
        throw ContractError("gradient shape mismatch: " + shape_str(slot.shape()) + " vs " +
                            shape_str(g.shape()));
    }
    Tensor merged(slot.shape());
    kernels::active().add(slot.data(), g.data(), merged.data(), merged.size());
    slot = merged;
}

void Tape::backward(const Tensor& loss) {
    if (!loss.tracked() || loss.tape() != this) {
        throw ContractError("backward() loss was not produced under this tape");
    }
    if (loss.size() != 1) {
        throw ContractError("backward() requires a scalar loss, got shape " + shape_str(loss.shape()));
    }
    grads_.assign(nodes_.size(), Tensor());
    ran_ = true;
    grads_[static_cast<std::size_t>(loss.node())] = Tensor::ones(loss.shape());
    for (int i = loss.node(); i >= 0; --i) {
        const Node& node = nodes_[static_cast<std::size_t>(i)];
        const Tensor& g = grads_[static_cast<std::size_t>(i)];
        if (!g.defined() || !node.vjp) continue;
        std::vector<Tensor> pgrads = node.vjp(g);
        if (pgrads.size() != node.parents.size()) {
            throw ContractError("vjp returned wrong number of gradients");
        }
        for (std::size_t p = 0; p < pgrads.size(); ++p) {
            const int pid = node.parents[p];
            if (pid >= 0) accumulate(pid, pgrads[p]);
        }
    }
}

Tensor Tape::grad(const Tensor& t) const {
    if (!t.tracked() || t.tape() != this) {
        throw ContractError("grad() on a tensor that is not tracked by this tape");
    }
    if (!ran_) throw ContractError("grad() before backward()");
    const Tensor& g = grads_[static_cast<std::size_t>(t.node())];
    if (g.defined()) return g;
    return Tensor::zeros(t.shape());
}

Tape* common_tape(std::initializer_list<const Tensor*> ts) {
    Tape* tape = nullptr;
    for (const Tensor* t : ts) {
        if (!t->tracked()) continue;
        if (tape && t->tape() != tape) {
            throw ContractError("operation mixes tensors from different tapes");
        }
        tape = t->tape();
    }
    return tape;
}

// --------------------------------------------------------------------------
// Shape utilities

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

Shape broadcast_shapes(const Shape& a, const Shape& b) {
    const int na = static_cast<int>(a.size());
    const int nb = static_cast<int>(b.size());
    const int n = std::max(na, nb);
    Shape out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::int64_t ea = i < na ? a[static_cast<std::size_t>(na - 1 - i)] : 1;
        const std::int64_t eb = i < nb ? b[static_cast<std::size_t>(nb - 1 - i)] : 1;
        if (ea != eb && ea != 1 && eb != 1) {
            throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) +
                             " are not broadcast-compatible");
        }
        out[static_cast<std::size_t>(n - 1 - i)] = std::max(ea, eb);
    }
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!same_shape(a.shape(), b.shape())) {
        throw ShapeError("max_abs_diff shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    double m = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    }
    return m;
}

bool all_finite(const Tensor& t) {
    for (std::int64_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t.data()[i])) return false;
    }
    return true;
}

}  // namespace iwin
