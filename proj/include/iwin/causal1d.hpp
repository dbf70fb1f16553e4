#pragma once

#include "iwin/layers.hpp"

namespace iwin {

// 1-D interleaved grouping: token t belongs to group (t mod G), G = N / M.
// Gathering a group preserves original time order, so a lower-triangular
// mask inside the group is exactly causality in original positions.
struct Layout1D {
    std::int64_t N, M, G;
    Layout1D(std::int64_t n, std::int64_t m);
};

// Gather order that packs group g into rows [g*M, (g+1)*M).
std::vector<std::int64_t> group_gather_order(const Layout1D& layout);

// Causal attention within interleaved groups: tokens grouped by residue
// mod G, masked attention in original time order, results scattered back.
Tensor causal_iw_attention(const Tensor& x, const Layout1D& layout, const AttentionParams& p);

// Causal attention within contiguous blocks of `window` tokens.
Tensor causal_block_attention(const Tensor& x, std::int64_t window, const AttentionParams& p);

struct CausalConvParams {
    int ksize = 0;
    Tensor kernel;  // [K, C]
    Tensor bias;    // [C]
    static CausalConvParams init(std::int64_t dim, int ksize, Rng& rng);
};
Tensor causal_conv(const Tensor& x, const CausalConvParams& p);

// The combined causal module. Standard form sums interleaved attention and
// causal depthwise convolution. The dual-window form replaces the conv with
// a second (contiguous) window attention and requires M = sqrt(N).
struct Causal1dParams {
    AttentionParams attn;
    CausalConvParams conv;
    bool dual_window = false;
    AttentionParams attn2;  // used in dual-window mode

    static Causal1dParams init(std::int64_t dim, int heads, int ksize, Rng& rng,
                               bool dual_window = false);
};
Tensor causal1d_forward(const Tensor& x, const Layout1D& layout, const Causal1dParams& p);

// Analytic attention-score work per batch element and head: pairs of
// positions whose dot products are formed. With M = G = sqrt(N) each branch
// forms N * sqrt(N) pairs.
struct CausalCost {
    std::int64_t interleaved_score_pairs = 0;
    std::int64_t block_score_pairs = 0;  // dual-window branch
    std::int64_t conv_taps = 0;
};
CausalCost causal1d_cost(const Layout1D& layout, const Causal1dParams& p);

}  // namespace iwin
