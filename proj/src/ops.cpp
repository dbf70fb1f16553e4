#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "iwin/kernels.hpp"
#include "iwin/tensor.hpp"

namespace iwin {

namespace {

using i64 = std::int64_t;

std::vector<i64> strides_of(const Shape& s) {
    std::vector<i64> st(s.size());
    i64 acc = 1;
    for (int d = static_cast<int>(s.size()) - 1; d >= 0; --d) {
        st[static_cast<std::size_t>(d)] = acc;
        acc *= s[static_cast<std::size_t>(d)];
    }
    return st;
}

// Strides of `shape` viewed through `out_shape` (0 on broadcast extents).
std::vector<i64> broadcast_strides(const Shape& shape, const Shape& out_shape) {
    const auto st = strides_of(shape);
    const int no = static_cast<int>(out_shape.size());
    const int ns = static_cast<int>(shape.size());
    std::vector<i64> r(static_cast<std::size_t>(no), 0);
    for (int i = 0; i < ns; ++i) {
        const int od = no - 1 - i;
        const int sd = ns - 1 - i;
        const i64 extent = shape[static_cast<std::size_t>(sd)];
        r[static_cast<std::size_t>(od)] = (extent == 1) ? 0 : st[static_cast<std::size_t>(sd)];
    }
    return r;
}

template <class F>
Tensor broadcast_binary(const Tensor& a, const Tensor& b, F f) {
    const Shape os = broadcast_shapes(a.shape(), b.shape());
    Tensor out(os);
    const auto sa = broadcast_strides(a.shape(), os);
    const auto sb = broadcast_strides(b.shape(), os);
    const int nd = static_cast<int>(os.size());
    std::vector<i64> idx(static_cast<std::size_t>(nd), 0);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    i64 oa = 0, ob = 0;
    const i64 total = out.size();
    for (i64 lin = 0; lin < total; ++lin) {
        po[lin] = f(pa[oa], pb[ob]);
        for (int d = nd - 1; d >= 0; --d) {
            auto ud = static_cast<std::size_t>(d);
            idx[ud]++;
            oa += sa[ud];
            ob += sb[ud];
            if (idx[ud] < os[ud]) break;
            idx[ud] = 0;
            oa -= sa[ud] * os[ud];
            ob -= sb[ud] * os[ud];
        }
    }
    return out;
}

Tensor sum_leading(const Tensor& t) {  // [d0, rest...] -> [rest...]
    Shape rest(t.shape().begin() + 1, t.shape().end());
    if (rest.empty()) rest = {1};
    Tensor out(rest);
    const i64 inner = out.size();
    for (i64 d = 0; d < t.dim(0); ++d) {
        kernels::active().add(out.data(), t.data() + d * inner, out.data(), inner);
    }
    return out;
}

Tensor sum_axis_keep(const Tensor& t, int axis) {
    Shape os = t.shape();
    const i64 n = os[static_cast<std::size_t>(axis)];
    os[static_cast<std::size_t>(axis)] = 1;
    Tensor out(os);
    i64 outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= t.dim(d);
    for (int d = axis + 1; d < t.ndim(); ++d) inner *= t.dim(d);
    for (i64 o = 0; o < outer; ++o) {
        double* dst = out.data() + o * inner;
        const double* src = t.data() + o * n * inner;
        for (i64 i = 0; i < n; ++i) {
            kernels::active().add(dst, src + i * inner, dst, inner);
        }
    }
    return out;
}

// Sums g down to `target` (undoes broadcasting).
Tensor reduce_to_shape(const Tensor& g, const Shape& target) {
    Tensor r = g.detached();
    while (r.ndim() > static_cast<int>(target.size())) r = sum_leading(r);
    for (int d = 0; d < r.ndim(); ++d) {
        if (target[static_cast<std::size_t>(d)] == 1 && r.dim(d) > 1) {
            r = sum_axis_keep(r, d);
        }
    }
    if (!same_shape(r.shape(), target)) {
        throw ShapeError("cannot reduce " + shape_str(g.shape()) + " to " + shape_str(target));
    }
    return r;
}

void check_finite(const Tensor& t, const char* ctx) {
    if (!all_finite(t)) throw NumericError(std::string(ctx) + ": input contains non-finite values");
}

Tensor neg(const Tensor& x) {  // untracked helper
    Tensor out(x.shape());
    kernels::active().scale(x.data(), -1.0, out.data(), out.size());
    return out;
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

// --------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor out;
    if (same_shape(a.shape(), b.shape())) {
        out = Tensor(a.shape());
        kernels::active().add(a.data(), b.data(), out.data(), out.size());
    } else {
        out = broadcast_binary(a, b, [](double x, double y) { return x + y; });
    }
    Tape* tape = common_tape({&a, &b});
    if (!tape) return out;
    const Shape as = a.shape(), bs = b.shape();
    return tape->record(std::move(out), {&a, &b}, [as, bs](const Tensor& g) {
        return std::vector<Tensor>{reduce_to_shape(g, as), reduce_to_shape(g, bs)};
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    Tensor out;
    if (same_shape(a.shape(), b.shape())) {
        out = Tensor(a.shape());
        kernels::active().sub(a.data(), b.data(), out.data(), out.size());
    } else {
        out = broadcast_binary(a, b, [](double x, double y) { return x - y; });
    }
    Tape* tape = common_tape({&a, &b});
    if (!tape) return out;
    const Shape as = a.shape(), bs = b.shape();
    return tape->record(std::move(out), {&a, &b}, [as, bs](const Tensor& g) {
        return std::vector<Tensor>{reduce_to_shape(g, as), neg(reduce_to_shape(g, bs))};
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    Tensor out;
    if (same_shape(a.shape(), b.shape())) {
        out = Tensor(a.shape());
        kernels::active().mul(a.data(), b.data(), out.data(), out.size());
    } else {
        out = broadcast_binary(a, b, [](double x, double y) { return x * y; });
    }
    Tape* tape = common_tape({&a, &b});
    if (!tape) return out;
    Tensor ad = a.detached(), bd = b.detached();
    return tape->record(std::move(out), {&a, &b}, [ad, bd](const Tensor& g) {
        return std::vector<Tensor>{reduce_to_shape(mul(g, bd), ad.shape()),
                                   reduce_to_shape(mul(g, ad), bd.shape())};
    });
}

Tensor scale(const Tensor& x, double s) {
    Tensor out(x.shape());
    kernels::active().scale(x.data(), s, out.data(), out.size());
    Tape* tape = common_tape({&x});
    if (!tape) return out;
    return tape->record(std::move(out), {&x}, [s](const Tensor& g) {
        return std::vector<Tensor>{scale(g, s)};
    });
}

// --------------------------------------------------------------------------
// matmul

namespace {

// Offsets (in matrices) of the batch slices of a tensor with batch shape
// `bshape`, enumerated over the broadcast batch shape `batch`.
std::vector<i64> batch_offsets(const Shape& bshape, const Shape& batch) {
    const i64 n = shape_numel(batch);
    const auto bs = broadcast_strides(bshape, batch);
    const auto st = strides_of(batch);
    std::vector<i64> off(static_cast<std::size_t>(n), 0);
    for (i64 lin = 0; lin < n; ++lin) {
        i64 o = 0;
        for (std::size_t d = 0; d < batch.size(); ++d) {
            const i64 id = (lin / st[d]) % batch[d];
            o += id * bs[d];
        }
        off[static_cast<std::size_t>(lin)] = o;
    }
    return off;
}

Tensor matmul_forward(const Tensor& a, const Tensor& b) {
    const i64 m = a.dim(a.ndim() - 2);
    const i64 k = a.dim(a.ndim() - 1);
    const i64 n = b.dim(b.ndim() - 1);
    const Shape abatch(a.shape().begin(), a.shape().end() - 2);
    const Shape bbatch(b.shape().begin(), b.shape().end() - 2);
    const Shape batch = broadcast_shapes(abatch, bbatch);

    Shape oshape = batch;
    oshape.push_back(m);
    oshape.push_back(n);
    Tensor out(oshape);

    const auto aoff = batch_offsets(abatch, batch);
    const auto boff = batch_offsets(bbatch, batch);
    const i64 asz = m * k, bsz = k * n, osz = m * n;
    const auto& ops = kernels::active();
    for (std::size_t bi = 0; bi < aoff.size(); ++bi) {
        ops.matmul(a.data() + aoff[bi] * asz, b.data() + boff[bi] * bsz,
                   out.data() + static_cast<i64>(bi) * osz, m, k, n);
    }
    return out;
}

Tensor transpose_last2(const Tensor& t) {
    std::vector<int> axes(static_cast<std::size_t>(t.ndim()));
    std::iota(axes.begin(), axes.end(), 0);
    std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
    return permute(t, axes);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() < 2 || b.ndim() < 2) {
        throw ShapeError("matmul requires rank >= 2, got " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    if (a.dim(a.ndim() - 1) != b.dim(b.ndim() - 2)) {
        throw ShapeError("matmul inner extents disagree: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    Tensor out = matmul_forward(a, b);
    Tape* tape = common_tape({&a, &b});
    if (!tape) return out;
    Tensor ad = a.detached(), bd = b.detached();
    return tape->record(std::move(out), {&a, &b}, [ad, bd](const Tensor& g) {
        Tensor da = reduce_to_shape(matmul_forward(g, transpose_last2(bd)), ad.shape());
        Tensor db = reduce_to_shape(matmul_forward(transpose_last2(ad), g), bd.shape());
        return std::vector<Tensor>{da, db};
    });
}

// --------------------------------------------------------------------------
// softmax

namespace {

// rows x n view of the last extent
struct RowView {
    i64 rows, n;
};

RowView lastdim_rows(const Tensor& x) {
    const i64 n = x.dim(x.ndim() - 1);
    return RowView{x.size() / n, n};
}

Tensor softmax_rows(const Tensor& logits) {
    const auto rv = lastdim_rows(logits);
    Tensor out(logits.shape());
    for (i64 r = 0; r < rv.rows; ++r) {
        const double* in = logits.data() + r * rv.n;
        double* o = out.data() + r * rv.n;
        double mx = in[0];
        for (i64 i = 1; i < rv.n; ++i) mx = std::max(mx, in[i]);
        if (!std::isfinite(mx)) {
            throw ContractError("softmax row has no finite entry (fully masked?)");
        }
        double sum = 0.0;
        for (i64 i = 0; i < rv.n; ++i) {
            o[i] = std::exp(in[i] - mx);
            sum += o[i];
        }
        const double inv = 1.0 / sum;
        for (i64 i = 0; i < rv.n; ++i) o[i] *= inv;
    }
    return out;
}

// dx = y * (g - sum(g * y)) per row
Tensor softmax_vjp(const Tensor& y, const Tensor& g) {
    const auto rv = lastdim_rows(y);
    Tensor dx(y.shape());
    for (i64 r = 0; r < rv.rows; ++r) {
        const double* yr = y.data() + r * rv.n;
        const double* gr = g.data() + r * rv.n;
        double* dr = dx.data() + r * rv.n;
        double dot = 0.0;
        for (i64 i = 0; i < rv.n; ++i) dot += gr[i] * yr[i];
        for (i64 i = 0; i < rv.n; ++i) dr[i] = yr[i] * (gr[i] - dot);
    }
    return dx;
}

}  // namespace

Tensor softmax_lastdim(const Tensor& x) {
    check_finite(x, "softmax");
    Tensor out = softmax_rows(x);
    Tape* tape = common_tape({&x});
    if (!tape) return out;
    Tensor y = out.detached();
    return tape->record(std::move(out), {&x}, [y](const Tensor& g) {
        return std::vector<Tensor>{softmax_vjp(y, g)};
    });
}

Tensor masked_softmax_lastdim(const Tensor& x, const Tensor& mask) {
    check_finite(x, "masked_softmax");
    Tensor logits = broadcast_binary(x, mask, [](double a, double b) { return a + b; });
    if (!same_shape(logits.shape(), x.shape())) {
        throw ShapeError("mask " + shape_str(mask.shape()) + " does not broadcast to " +
                         shape_str(x.shape()));
    }
    Tensor out = softmax_rows(logits);
    Tape* tape = common_tape({&x});
    if (!tape) return out;
    Tensor y = out.detached();
    return tape->record(std::move(out), {&x}, [y](const Tensor& g) {
        return std::vector<Tensor>{softmax_vjp(y, g)};
    });
}

// --------------------------------------------------------------------------
// layernorm

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (eps <= 0.0) throw ConfigError("layernorm eps must be > 0");
    const i64 C = x.dim(x.ndim() - 1);
    if (gamma.ndim() != 1 || gamma.dim(0) != C || beta.ndim() != 1 || beta.dim(0) != C) {
        throw ShapeError("layernorm affine shapes " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " do not match channels of " +
                         shape_str(x.shape()));
    }
    const i64 rows = x.size() / C;
    Tensor out(x.shape());
    Tensor xhat(x.shape());
    std::vector<double> inv_sigma(static_cast<std::size_t>(rows));
    for (i64 r = 0; r < rows; ++r) {
        const double* in = x.data() + r * C;
        double mean = 0.0;
        for (i64 c = 0; c < C; ++c) mean += in[c];
        mean /= static_cast<double>(C);
        double var = 0.0;
        for (i64 c = 0; c < C; ++c) {
            const double d = in[c] - mean;
            var += d * d;
        }
        var /= static_cast<double>(C);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_sigma[static_cast<std::size_t>(r)] = inv;
        double* xh = xhat.data() + r * C;
        double* o = out.data() + r * C;
        for (i64 c = 0; c < C; ++c) {
            xh[c] = (in[c] - mean) * inv;
            o[c] = gamma.data()[c] * xh[c] + beta.data()[c];
        }
    }
    Tape* tape = common_tape({&x, &gamma, &beta});
    if (!tape) return out;
    Tensor xh = xhat.detached();
    Tensor gm = gamma.detached();
    return tape->record(std::move(out), {&x, &gamma, &beta},
                        [xh, gm, inv_sigma, C, rows](const Tensor& g) {
        Tensor dx(xh.shape());
        Tensor dgamma({C});
        Tensor dbeta({C});
        for (i64 r = 0; r < rows; ++r) {
            const double* gr = g.data() + r * C;
            const double* xr = xh.data() + r * C;
            double* dxr = dx.data() + r * C;
            const double inv = inv_sigma[static_cast<std::size_t>(r)];
            double mean_gg = 0.0, mean_ggx = 0.0;
            for (i64 c = 0; c < C; ++c) {
                const double gg = gr[c] * gm.data()[c];
                mean_gg += gg;
                mean_ggx += gg * xr[c];
                dgamma.data()[c] += gr[c] * xr[c];
                dbeta.data()[c] += gr[c];
            }
            mean_gg /= static_cast<double>(C);
            mean_ggx /= static_cast<double>(C);
            for (i64 c = 0; c < C; ++c) {
                const double gg = gr[c] * gm.data()[c];
                dxr[c] = (gg - mean_gg - xr[c] * mean_ggx) * inv;
            }
        }
        return std::vector<Tensor>{dx, dgamma, dbeta};
    });
}

// --------------------------------------------------------------------------
// gelu

Tensor gelu(const Tensor& x) {
    Tensor out(x.shape());
    for (i64 i = 0; i < x.size(); ++i) {
        const double v = x.data()[i];
        out.data()[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    Tape* tape = common_tape({&x});
    if (!tape) return out;
    Tensor xd = x.detached();
    return tape->record(std::move(out), {&x}, [xd](const Tensor& g) {
        Tensor dx(xd.shape());
        for (i64 i = 0; i < xd.size(); ++i) {
            const double v = xd.data()[i];
            const double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            dx.data()[i] = g.data()[i] * (phi + v * pdf);
        }
        return std::vector<Tensor>{dx};
    });
}

// --------------------------------------------------------------------------
// reshape / permute / gather

Tensor reshape(const Tensor& x, Shape shape) {
    // allow one free extent of -1
    i64 known = 1;
    int free_idx = -1;
    for (std::size_t d = 0; d < shape.size(); ++d) {
        if (shape[d] == -1) {
            if (free_idx >= 0) throw ShapeError("reshape allows at most one -1 extent");
            free_idx = static_cast<int>(d);
        } else {
            known *= shape[d];
        }
    }
    if (free_idx >= 0) {
        if (known == 0 || x.size() % known != 0) {
            throw ShapeError("cannot infer extent reshaping " + shape_str(x.shape()) + " to " +
                             shape_str(shape));
        }
        shape[static_cast<std::size_t>(free_idx)] = x.size() / known;
    }
    if (shape_numel(shape) != x.size()) {
        throw ShapeError("reshape " + shape_str(x.shape()) + " to " + shape_str(shape) +
                         " changes element count");
    }
    // aliasing is safe: buffers are immutable under ops
    Tensor out = detail_alias(x, std::move(shape));
    Tape* tape = common_tape({&x});
    if (!tape) return out;
    const Shape xs = x.shape();
    return tape->record(std::move(out), {&x}, [xs](const Tensor& g) {
        return std::vector<Tensor>{reshape(g, xs)};
    });
}

Tensor permute(const Tensor& x, std::vector<int> axes) {
    const int nd = x.ndim();
    if (static_cast<int>(axes.size()) != nd) {
        throw ShapeError("permute axes rank mismatch for " + shape_str(x.shape()));
    }
    std::vector<bool> seen(static_cast<std::size_t>(nd), false);
    for (int a : axes) {
        if (a < 0 || a >= nd || seen[static_cast<std::size_t>(a)]) {
            throw ShapeError("permute axes must be a permutation of 0..rank-1");
        }
        seen[static_cast<std::size_t>(a)] = true;
    }
    Shape os(static_cast<std::size_t>(nd));
    for (int d = 0; d < nd; ++d) os[static_cast<std::size_t>(d)] = x.dim(axes[static_cast<std::size_t>(d)]);
    Tensor out(os);
    const auto xst = strides_of(x.shape());
    std::vector<i64> ost(static_cast<std::size_t>(nd));  // stride in x for each out dim
    for (int d = 0; d < nd; ++d) ost[static_cast<std::size_t>(d)] = xst[static_cast<std::size_t>(axes[static_cast<std::size_t>(d)])];
    std::vector<i64> idx(static_cast<std::size_t>(nd), 0);
    i64 src = 0;
    const i64 total = out.size();
    for (i64 lin = 0; lin < total; ++lin) {
        out.data()[lin] = x.data()[src];
        for (int d = nd - 1; d >= 0; --d) {
            auto ud = static_cast<std::size_t>(d);
            idx[ud]++;
            src += ost[ud];
            if (idx[ud] < os[ud]) break;
            idx[ud] = 0;
            src -= ost[ud] * os[ud];
        }
    }
    Tape* tape = common_tape({&x});
    if (!tape) return out;
    std::vector<int> inv(static_cast<std::size_t>(nd));
    for (int d = 0; d < nd; ++d) inv[static_cast<std::size_t>(axes[static_cast<std::size_t>(d)])] = d;
    return tape->record(std::move(out), {&x}, [inv](const Tensor& g) {
        return std::vector<Tensor>{permute(g, inv)};
    });
}

Tensor permute_dim1(const Tensor& x, const std::vector<i64>& perm) {
    if (x.ndim() < 2) throw ShapeError("permute_dim1 requires rank >= 2");
    const i64 B = x.dim(0);
    const i64 N = x.dim(1);
    if (static_cast<i64>(perm.size()) != N) {
        throw ShapeError("permutation length " + std::to_string(perm.size()) +
                         " does not match extent " + std::to_string(N));
    }
    std::vector<i64> inv(static_cast<std::size_t>(N), -1);
    for (i64 i = 0; i < N; ++i) {
        const i64 p = perm[static_cast<std::size_t>(i)];
        if (p < 0 || p >= N || inv[static_cast<std::size_t>(p)] != -1) {
            throw ContractError("permute_dim1 index list is not a bijection");
        }
        inv[static_cast<std::size_t>(p)] = i;
    }
    i64 inner = 1;
    for (int d = 2; d < x.ndim(); ++d) inner *= x.dim(d);
    Tensor out(x.shape());
    for (i64 b = 0; b < B; ++b) {
        const double* src = x.data() + b * N * inner;
        double* dst = out.data() + b * N * inner;
        for (i64 i = 0; i < N; ++i) {
            std::memcpy(dst + i * inner, src + perm[static_cast<std::size_t>(i)] * inner,
                        static_cast<std::size_t>(inner) * sizeof(double));
        }
    }
    Tape* tape = common_tape({&x});
    if (!tape) return out;
    return tape->record(std::move(out), {&x}, [inv](const Tensor& g) {
        return std::vector<Tensor>{permute_dim1(g, inv)};
    });
}

Tensor index_rows(const Tensor& x, const std::vector<i64>& idx) {
    if (x.ndim() < 1) throw ShapeError("index_rows requires rank >= 1");
    const i64 N = x.dim(0);
    i64 inner = 1;
    for (int d = 1; d < x.ndim(); ++d) inner *= x.dim(d);
    Shape os = x.shape();
    os[0] = static_cast<i64>(idx.size());
    Tensor out(os);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const i64 r = idx[i];
        if (r < 0 || r >= N) throw BoundsError("index_rows index out of range");
        std::memcpy(out.data() + static_cast<i64>(i) * inner, x.data() + r * inner,
                    static_cast<std::size_t>(inner) * sizeof(double));
    }
    Tape* tape = common_tape({&x});
    if (!tape) return out;
    const Shape xs = x.shape();
    return tape->record(std::move(out), {&x}, [idx, xs, inner](const Tensor& g) {
        Tensor dx(xs);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            kernels::active().add(dx.data() + idx[i] * inner,
                                  g.data() + static_cast<i64>(i) * inner,
                                  dx.data() + idx[i] * inner, inner);
        }
        return std::vector<Tensor>{dx};
    });
}

// --------------------------------------------------------------------------
// reductions

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (i64 i = 0; i < x.size(); ++i) s += x.data()[i];
    Tensor out = Tensor::scalar(s);
    Tape* tape = common_tape({&x});
    if (!tape) return out;
    const Shape xs = x.shape();
    return tape->record(std::move(out), {&x}, [xs](const Tensor& g) {
        return std::vector<Tensor>{Tensor::full(xs, g.item())};
    });
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.ndim() != 4) throw ShapeError("global_avg_pool expects [B,H,W,C], got " + shape_str(x.shape()));
    const i64 B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    Tensor out({B, C});
    const double inv = 1.0 / static_cast<double>(H * W);
    for (i64 b = 0; b < B; ++b) {
        double* o = out.data() + b * C;
        const double* base = x.data() + b * H * W * C;
        for (i64 p = 0; p < H * W; ++p) {
            kernels::active().add(o, base + p * C, o, C);
        }
        kernels::active().scale(o, inv, o, C);
    }
    Tape* tape = common_tape({&x});
    if (!tape) return out;
    const Shape xs = x.shape();
    return tape->record(std::move(out), {&x}, [xs, inv](const Tensor& g) {
        const i64 gB = xs[0], gH = xs[1], gW = xs[2], gC = xs[3];
        Tensor dx(xs);
        for (i64 b = 0; b < gB; ++b) {
            const double* gr = g.data() + b * gC;
            double* base = dx.data() + b * gH * gW * gC;
            for (i64 p = 0; p < gH * gW; ++p) {
                kernels::active().axpy(inv, gr, base + p * gC, gC);
            }
        }
        return std::vector<Tensor>{dx};
    });
}

// --------------------------------------------------------------------------
// convolutions

namespace {

struct ConvDims {
    i64 B, H, W, Ci, Kh, Kw, Co, Ho, Wo;
    int stride, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
    if (x.ndim() != 4) throw ShapeError("conv2d input must be [B,H,W,C], got " + shape_str(x.shape()));
    if (w.ndim() != 4) throw ShapeError("conv2d weights must be [Kh,Kw,Cin,Cout], got " + shape_str(w.shape()));
    if (stride < 1 || pad < 0) throw ConfigError("conv2d stride/pad out of range");
    ConvDims d;
    d.B = x.dim(0); d.H = x.dim(1); d.W = x.dim(2); d.Ci = x.dim(3);
    d.Kh = w.dim(0); d.Kw = w.dim(1); d.Co = w.dim(3);
    if (w.dim(2) != d.Ci) {
        throw ShapeError("conv2d channel mismatch: input " + shape_str(x.shape()) + " weights " +
                         shape_str(w.shape()));
    }
    d.stride = stride; d.pad = pad;
    d.Ho = (d.H + 2 * pad - d.Kh) / stride + 1;
    d.Wo = (d.W + 2 * pad - d.Kw) / stride + 1;
    if (d.Ho < 1 || d.Wo < 1) throw ShapeError("conv2d output would be empty");
    return d;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, const ConvDims& d) {
    Tensor out({d.B, d.Ho, d.Wo, d.Co});
    const auto& ops = kernels::active();
    for (i64 n = 0; n < d.B; ++n) {
        const double* img = x.data() + n * d.H * d.W * d.Ci;
        for (i64 oi = 0; oi < d.Ho; ++oi) {
            for (i64 oj = 0; oj < d.Wo; ++oj) {
                double* acc = out.data() + ((n * d.Ho + oi) * d.Wo + oj) * d.Co;
                std::memcpy(acc, b.data(), static_cast<std::size_t>(d.Co) * sizeof(double));
                for (i64 u = 0; u < d.Kh; ++u) {
                    const i64 si = oi * d.stride + u - d.pad;
                    if (si < 0 || si >= d.H) continue;
                    for (i64 v = 0; v < d.Kw; ++v) {
                        const i64 sj = oj * d.stride + v - d.pad;
                        if (sj < 0 || sj >= d.W) continue;
                        const double* px = img + (si * d.W + sj) * d.Ci;
                        const double* pw = w.data() + (u * d.Kw + v) * d.Ci * d.Co;
                        for (i64 ci = 0; ci < d.Ci; ++ci) {
                            ops.axpy(px[ci], pw + ci * d.Co, acc, d.Co);
                        }
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    const ConvDims d = conv_dims(x, w, stride, pad);
    if (b.ndim() != 1 || b.dim(0) != d.Co) {
        throw ShapeError("conv2d bias shape " + shape_str(b.shape()) + " != [Cout]");
    }
    Tensor out = conv2d_forward(x, w, b, d);
    Tape* tape = common_tape({&x, &w, &b});
    if (!tape) return out;
    Tensor xd = x.detached(), wd = w.detached();
    return tape->record(std::move(out), {&x, &w, &b}, [xd, wd, d](const Tensor& g) {
        Tensor dx(xd.shape());
        Tensor dw(wd.shape());
        Tensor db({d.Co});
        const auto& ops = kernels::active();
        for (i64 n = 0; n < d.B; ++n) {
            const double* img = xd.data() + n * d.H * d.W * d.Ci;
            double* dimg = dx.data() + n * d.H * d.W * d.Ci;
            for (i64 oi = 0; oi < d.Ho; ++oi) {
                for (i64 oj = 0; oj < d.Wo; ++oj) {
                    const double* gr = g.data() + ((n * d.Ho + oi) * d.Wo + oj) * d.Co;
                    ops.add(db.data(), gr, db.data(), d.Co);
                    for (i64 u = 0; u < d.Kh; ++u) {
                        const i64 si = oi * d.stride + u - d.pad;
                        if (si < 0 || si >= d.H) continue;
                        for (i64 v = 0; v < d.Kw; ++v) {
                            const i64 sj = oj * d.stride + v - d.pad;
                            if (sj < 0 || sj >= d.W) continue;
                            const double* px = img + (si * d.W + sj) * d.Ci;
                            double* pdx = dimg + (si * d.W + sj) * d.Ci;
                            const double* pw = wd.data() + (u * d.Kw + v) * d.Ci * d.Co;
                            double* pdw = dw.data() + (u * d.Kw + v) * d.Ci * d.Co;
                            for (i64 ci = 0; ci < d.Ci; ++ci) {
                                ops.axpy(px[ci], gr, pdw + ci * d.Co, d.Co);
                                double acc = 0.0;
                                const double* wrow = pw + ci * d.Co;
                                for (i64 co = 0; co < d.Co; ++co) acc += wrow[co] * gr[co];
                                pdx[ci] += acc;
                            }
                        }
                    }
                }
            }
        }
        return std::vector<Tensor>{dx, dw, db};
    });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.ndim() != 4) throw ShapeError("depthwise_conv2d input must be [B,H,W,C]");
    if (w.ndim() != 3 || w.dim(0) != w.dim(1)) {
        throw ShapeError("depthwise_conv2d weights must be [K,K,C], got " + shape_str(w.shape()));
    }
    const i64 K = w.dim(0);
    if (K % 2 == 0) throw ConfigError("depthwise kernel size must be odd, got " + std::to_string(K));
    const i64 B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    if (w.dim(2) != C || b.ndim() != 1 || b.dim(0) != C) {
        throw ShapeError("depthwise_conv2d channel mismatch: " + shape_str(x.shape()) + " vs " +
                         shape_str(w.shape()));
    }
    Tensor out(x.shape());
    const auto& ops = kernels::active();
    for (i64 n = 0; n < B; ++n) {
        ops.dwconv2d(x.data() + n * H * W * C, w.data(), b.data(), out.data() + n * H * W * C,
                     H, W, C, K);
    }
    Tape* tape = common_tape({&x, &w, &b});
    if (!tape) return out;
    Tensor xd = x.detached(), wd = w.detached();
    return tape->record(std::move(out), {&x, &w, &b}, [xd, wd, B, H, W, C, K](const Tensor& g) {
        const i64 P = K / 2;
        Tensor dx(xd.shape());
        Tensor dw(wd.shape());
        Tensor db({C});
        for (i64 n = 0; n < B; ++n) {
            const double* img = xd.data() + n * H * W * C;
            double* dimg = dx.data() + n * H * W * C;
            for (i64 i = 0; i < H; ++i) {
                for (i64 j = 0; j < W; ++j) {
                    const double* gr = g.data() + ((n * H + i) * W + j) * C;
                    kernels::active().add(db.data(), gr, db.data(), C);
                    for (i64 u = 0; u < K; ++u) {
                        const i64 si = i + u - P;
                        if (si < 0 || si >= H) continue;
                        for (i64 v = 0; v < K; ++v) {
                            const i64 sj = j + v - P;
                            if (sj < 0 || sj >= W) continue;
                            const double* px = img + (si * W + sj) * C;
                            double* pdx = dimg + (si * W + sj) * C;
                            const double* pw = wd.data() + (u * K + v) * C;
                            double* pdw = dw.data() + (u * K + v) * C;
                            for (i64 c = 0; c < C; ++c) {
                                pdw[c] += px[c] * gr[c];
                                pdx[c] += pw[c] * gr[c];
                            }
                        }
                    }
                }
            }
        }
        return std::vector<Tensor>{dx, dw, db};
    });
}

Tensor causal_dwconv1d(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.ndim() != 3) throw ShapeError("causal_dwconv1d input must be [B,N,C]");
    if (w.ndim() != 2) throw ShapeError("causal_dwconv1d weights must be [K,C]");
    const i64 B = x.dim(0), N = x.dim(1), C = x.dim(2), K = w.dim(0);
    if (K < 1) throw ConfigError("causal kernel size must be >= 1");
    if (w.dim(1) != C || b.ndim() != 1 || b.dim(0) != C) {
        throw ShapeError("causal_dwconv1d channel mismatch: " + shape_str(x.shape()) + " vs " +
                         shape_str(w.shape()));
    }
    // y[t] = bias + sum_u w[u] * x[t - (K-1) + u]
    Tensor out(x.shape());
    for (i64 n = 0; n < B; ++n) {
        for (i64 t = 0; t < N; ++t) {
            double* o = out.data() + (n * N + t) * C;
            std::memcpy(o, b.data(), static_cast<std::size_t>(C) * sizeof(double));
            for (i64 u = 0; u < K; ++u) {
                const i64 s = t - (K - 1) + u;
                if (s < 0) continue;
                const double* px = x.data() + (n * N + s) * C;
                const double* pw = w.data() + u * C;
                for (i64 c = 0; c < C; ++c) o[c] += pw[c] * px[c];
            }
        }
    }
    Tape* tape = common_tape({&x, &w, &b});
    if (!tape) return out;
    Tensor xd = x.detached(), wd = w.detached();
    return tape->record(std::move(out), {&x, &w, &b}, [xd, wd, B, N, C, K](const Tensor& g) {
        Tensor dx(xd.shape());
        Tensor dw(wd.shape());
        Tensor db({C});
        for (i64 n = 0; n < B; ++n) {
            for (i64 t = 0; t < N; ++t) {
                const double* gr = g.data() + (n * N + t) * C;
                kernels::active().add(db.data(), gr, db.data(), C);
                for (i64 u = 0; u < K; ++u) {
                    const i64 s = t - (K - 1) + u;
                    if (s < 0) continue;
                    const double* px = xd.data() + (n * N + s) * C;
                    double* pdx = dx.data() + (n * N + s) * C;
                    const double* pw = wd.data() + u * C;
                    double* pdw = dw.data() + u * C;
                    for (i64 c = 0; c < C; ++c) {
                        pdw[c] += px[c] * gr[c];
                        pdx[c] += pw[c] * gr[c];
                    }
                }
            }
        }
        return std::vector<Tensor>{dx, dw, db};
    });
}

// --------------------------------------------------------------------------
// loss

Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.ndim() != 2) throw ShapeError("cross_entropy expects [B,K] logits");
    const i64 B = logits.dim(0), K = logits.dim(1);
    if (static_cast<i64>(labels.size()) != B) {
        throw ShapeError("label count " + std::to_string(labels.size()) + " != batch " + std::to_string(B));
    }
    check_finite(logits, "cross_entropy");
    Tensor probs(logits.shape());
    double loss = 0.0;
    for (i64 b = 0; b < B; ++b) {
        const int y = labels[static_cast<std::size_t>(b)];
        if (y < 0 || y >= K) throw BoundsError("label out of range");
        const double* in = logits.data() + b * K;
        double* pr = probs.data() + b * K;
        double mx = in[0];
        for (i64 k = 1; k < K; ++k) mx = std::max(mx, in[k]);
        double sum = 0.0;
        for (i64 k = 0; k < K; ++k) {
            pr[k] = std::exp(in[k] - mx);
            sum += pr[k];
        }
        const double inv = 1.0 / sum;
        for (i64 k = 0; k < K; ++k) pr[k] *= inv;
        loss += std::log(sum) + mx - in[y];
    }
    loss /= static_cast<double>(B);
    Tensor out = Tensor::scalar(loss);
    Tape* tape = common_tape({&logits});
    if (!tape) return out;
    Tensor pd = probs.detached();
    return tape->record(std::move(out), {&logits}, [pd, labels, B, K](const Tensor& g) {
        const double gs = g.item() / static_cast<double>(B);
        Tensor dl(pd.shape());
        for (i64 b = 0; b < B; ++b) {
            const double* pr = pd.data() + b * K;
            double* d = dl.data() + b * K;
            for (i64 k = 0; k < K; ++k) d[k] = gs * pr[k];
            d[labels[static_cast<std::size_t>(b)]] -= gs;
        }
        return std::vector<Tensor>{dl};
    });
}

}  // namespace iwin
