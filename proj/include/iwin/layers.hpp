#pragma once

#include <cstdint>

#include "iwin/interleave.hpp"
#include "iwin/tensor.hpp"

namespace iwin {

enum class PositionMode { none, absolute, relative };

// Multi-head attention projections. All four projections carry biases.
// The relative-position table exists only in the `relative` ablation mode
// and is sized for one specific window side.
struct AttentionParams {
    std::int64_t dim = 0;
    int heads = 1;
    PositionMode pos_mode = PositionMode::none;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // [C,C] / [C]
    Tensor rel_bias;                        // [(2M-1)^2, heads]
    std::int64_t rel_window = 0;

    static AttentionParams init(std::int64_t dim, int heads, Rng& rng,
                                PositionMode mode = PositionMode::none,
                                std::int64_t rel_window = 0);
    std::int64_t head_dim() const { return dim / heads; }
    void validate() const;
};

// Windowed multi-head self-attention over [nW, T, C] rows. No masking unless
// `mask` is given (additive [T, T] logits mask, used by the causal variant).
Tensor window_msa(const Tensor& w, const AttentionParams& p, const Tensor* mask = nullptr);

// Interleaved window attention:
// restore(merge(window_msa(partition(rearrange(x))))).
Tensor iw_msa(const Tensor& x, const WindowLayout& layout, const AttentionParams& p,
              PermPath path = PermPath::reshape);

// Per-channel K x K convolution branch. The optional 1x1 cross-channel stage
// is off by default: the parameter and cost accounting of the backbone only
// reproduces the published totals without it (see README).
struct DepthwiseConvParams {
    int ksize = 0;
    Tensor kernel;  // [K,K,C]
    Tensor bias;    // [C]
    bool pointwise = false;
    Tensor pw_weight;  // [C,C] when pointwise
    Tensor pw_bias;    // [C]

    static DepthwiseConvParams init(std::int64_t dim, int ksize, Rng& rng, bool pointwise = false);
};
Tensor depthwise_conv(const Tensor& x, const DepthwiseConvParams& p);

struct LayerNormParams {
    Tensor gamma, beta;
    double eps = 1e-5;
    static LayerNormParams init(std::int64_t dim);
};
Tensor layernorm_fm(const Tensor& x, const LayerNormParams& p);

// Position-wise two-layer MLP with GELU between.
struct MlpParams {
    Tensor w1, b1, w2, b2;
    static MlpParams init(std::int64_t dim, double ratio, Rng& rng);
};
Tensor mlp(const Tensor& x, const MlpParams& p);

struct Conv2dParams {
    int ksize = 0, stride = 1, pad = 0;
    Tensor weight;  // [K,K,Cin,Cout]
    Tensor bias;    // [Cout]
    static Conv2dParams init(std::int64_t cin, std::int64_t cout, int ksize, int stride, int pad,
                             Rng& rng);
};

// 3x3 stride-2 convolution halving the spatial extents (C -> 2C in the
// backbone). Input extents must be even.
Tensor downsample(const Tensor& x, const Conv2dParams& p);

// 4x4 stride-4 patch projection followed by layernorm; input extents must be
// divisible by 4.
Tensor patch_embed(const Tensor& image, const Conv2dParams& p, const LayerNormParams& norm);

// x[..., Cin] * w[Cin, Cout] + b
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

}  // namespace iwin
