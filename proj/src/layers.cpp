#include "iwin/layers.hpp"

#include <cmath>

namespace iwin {

namespace {
constexpr double kInitStd = 0.02;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add(matmul(x, w), b);
}

// --------------------------------------------------------------------------
// attention

AttentionParams AttentionParams::init(std::int64_t dim, int heads, Rng& rng, PositionMode mode,
                                      std::int64_t rel_window) {
    AttentionParams p;
    p.dim = dim;
    p.heads = heads;
    p.pos_mode = mode;
    p.wq = Tensor::randn({dim, dim}, rng, kInitStd);
    p.wk = Tensor::randn({dim, dim}, rng, kInitStd);
    p.wv = Tensor::randn({dim, dim}, rng, kInitStd);
    p.wo = Tensor::randn({dim, dim}, rng, kInitStd);
    p.bq = Tensor::zeros({dim});
    p.bk = Tensor::zeros({dim});
    p.bv = Tensor::zeros({dim});
    p.bo = Tensor::zeros({dim});
    if (mode == PositionMode::relative) {
        if (rel_window < 1) throw ConfigError("relative position mode needs a window size");
        p.rel_window = rel_window;
        const std::int64_t span = 2 * rel_window - 1;
        p.rel_bias = Tensor::randn({span * span, heads}, rng, kInitStd);
    }
    p.validate();
    return p;
}

void AttentionParams::validate() const {
    if (heads < 1 || dim % heads != 0) {
        throw ConfigError("attention heads (" + std::to_string(heads) + ") must divide dim (" +
                          std::to_string(dim) + ")");
    }
}

namespace {

// [h, T, T] bias gathered from the (2M-1)^2 x h table by in-window offsets.
Tensor relative_bias(const AttentionParams& p, std::int64_t M) {
    if (p.rel_window != M) {
        throw ConfigError("relative position table built for window " +
                          std::to_string(p.rel_window) + " used with window " + std::to_string(M));
    }
    const std::int64_t T = M * M;
    const std::int64_t span = 2 * M - 1;
    std::vector<std::int64_t> idx(static_cast<std::size_t>(T * T));
    for (std::int64_t t1 = 0; t1 < T; ++t1) {
        const std::int64_t r1 = t1 / M, c1 = t1 % M;
        for (std::int64_t t2 = 0; t2 < T; ++t2) {
            const std::int64_t r2 = t2 / M, c2 = t2 % M;
            idx[static_cast<std::size_t>(t1 * T + t2)] = (r1 - r2 + M - 1) * span + (c1 - c2 + M - 1);
        }
    }
    Tensor bias = index_rows(p.rel_bias, idx);        // [T*T, h]
    bias = permute(reshape(bias, {T, T, p.heads}), {2, 0, 1});  // [h, T, T]
    return reshape(bias, {1, p.heads, T, T});
}

}  // namespace

Tensor window_msa(const Tensor& w, const AttentionParams& p, const Tensor* mask) {
    p.validate();
    if (w.ndim() != 3 || w.dim(2) != p.dim) {
        throw ShapeError("window_msa expects [nW,T,C] with C=" + std::to_string(p.dim) +
                         ", got " + shape_str(w.shape()));
    }
    const std::int64_t nW = w.dim(0), T = w.dim(1), C = p.dim;
    const std::int64_t h = p.heads, dk = p.head_dim();

    auto split_heads = [&](const Tensor& t) {
        return permute(reshape(t, {nW, T, h, dk}), {0, 2, 1, 3});  // [nW,h,T,dk]
    };
    Tensor q = split_heads(linear(w, p.wq, p.bq));
    Tensor k = split_heads(linear(w, p.wk, p.bk));
    Tensor v = split_heads(linear(w, p.wv, p.bv));

    Tensor scores = scale(matmul(q, permute(k, {0, 1, 3, 2})), 1.0 / std::sqrt(static_cast<double>(dk)));
    if (p.pos_mode == PositionMode::relative) {
        const auto M = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(T))));
        scores = add(scores, relative_bias(p, M));
    }
    Tensor attn = mask ? masked_softmax_lastdim(scores, reshape(*mask, {1, 1, T, T}))
                       : softmax_lastdim(scores);
    Tensor ctx = matmul(attn, v);                                    // [nW,h,T,dk]
    Tensor merged = reshape(permute(ctx, {0, 2, 1, 3}), {nW, T, C});
    return linear(merged, p.wo, p.bo);
}

Tensor iw_msa(const Tensor& x, const WindowLayout& layout, const AttentionParams& p, PermPath path) {
    const Tensor windows = window_partition(rearrange(x, layout, path), layout);
    const Tensor attended = window_msa(windows, p);
    return restore(window_merge(attended, layout, x.dim(0)), layout, path);
}

// --------------------------------------------------------------------------
// convolution branches

DepthwiseConvParams DepthwiseConvParams::init(std::int64_t dim, int ksize, Rng& rng, bool pointwise) {
    if (ksize < 1 || ksize % 2 == 0) {
        throw ConfigError("depthwise kernel size must be odd and positive, got " +
                          std::to_string(ksize));
    }
    DepthwiseConvParams p;
    p.ksize = ksize;
    p.kernel = Tensor::randn({ksize, ksize, dim}, rng, kInitStd);
    p.bias = Tensor::zeros({dim});
    p.pointwise = pointwise;
    if (pointwise) {
        p.pw_weight = Tensor::randn({dim, dim}, rng, kInitStd);
        p.pw_bias = Tensor::zeros({dim});
    }
    return p;
}

Tensor depthwise_conv(const Tensor& x, const DepthwiseConvParams& p) {
    Tensor y = depthwise_conv2d(x, p.kernel, p.bias);
    if (p.pointwise) y = linear(y, p.pw_weight, p.pw_bias);
    return y;
}

Conv2dParams Conv2dParams::init(std::int64_t cin, std::int64_t cout, int ksize, int stride, int pad,
                                Rng& rng) {
    Conv2dParams p;
    p.ksize = ksize;
    p.stride = stride;
    p.pad = pad;
    p.weight = Tensor::randn({ksize, ksize, cin, cout}, rng, kInitStd);
    p.bias = Tensor::zeros({cout});
    return p;
}

Tensor downsample(const Tensor& x, const Conv2dParams& p) {
    if (x.ndim() != 4) throw ShapeError("downsample expects [B,H,W,C]");
    if (x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0) {
        throw ShapeError("downsample needs even spatial extents, got " + shape_str(x.shape()));
    }
    return conv2d(x, p.weight, p.bias, p.stride, p.pad);
}

Tensor patch_embed(const Tensor& image, const Conv2dParams& p, const LayerNormParams& norm) {
    if (image.ndim() != 4) throw ShapeError("patch_embed expects [B,H,W,3]");
    if (image.dim(1) % 4 != 0 || image.dim(2) % 4 != 0) {
        throw ShapeError("patch_embed needs extents divisible by 4, got " + shape_str(image.shape()));
    }
    return layernorm_fm(conv2d(image, p.weight, p.bias, p.stride, p.pad), norm);
}

// --------------------------------------------------------------------------
// norm / mlp

LayerNormParams LayerNormParams::init(std::int64_t dim) {
    LayerNormParams p;
    p.gamma = Tensor::ones({dim});
    p.beta = Tensor::zeros({dim});
    return p;
}

Tensor layernorm_fm(const Tensor& x, const LayerNormParams& p) {
    return layernorm(x, p.gamma, p.beta, p.eps);
}

MlpParams MlpParams::init(std::int64_t dim, double ratio, Rng& rng) {
    const double hidden_f = ratio * static_cast<double>(dim);
    const auto hidden = static_cast<std::int64_t>(std::llround(hidden_f));
    if (std::abs(hidden_f - static_cast<double>(hidden)) > 1e-9 || hidden < 1) {
        throw ConfigError("mlp ratio " + std::to_string(ratio) + " gives a non-integral width for dim " +
                          std::to_string(dim));
    }
    MlpParams p;
    p.w1 = Tensor::randn({dim, hidden}, rng, kInitStd);
    p.b1 = Tensor::zeros({hidden});
    p.w2 = Tensor::randn({hidden, dim}, rng, kInitStd);
    p.b2 = Tensor::zeros({dim});
    return p;
}

Tensor mlp(const Tensor& x, const MlpParams& p) {
    return linear(gelu(linear(x, p.w1, p.b1)), p.w2, p.b2);
}

}  // namespace iwin
