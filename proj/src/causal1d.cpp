#include "iwin/causal1d.hpp"

#include <limits>

namespace iwin {

Layout1D::Layout1D(std::int64_t n, std::int64_t m) : N(n), M(m) {
    if (n < 1 || m < 1) throw LayoutError("sequence layout extents must be >= 1");
    if (n % m != 0) {
        throw LayoutError("window " + std::to_string(m) + " does not divide sequence length " +
                          std::to_string(n));
    }
    G = n / m;
}

std::vector<std::int64_t> group_gather_order(const Layout1D& L) {
    std::vector<std::int64_t> order(static_cast<std::size_t>(L.N));
    for (std::int64_t g = 0; g < L.G; ++g) {
        for (std::int64_t a = 0; a < L.M; ++a) {
            order[static_cast<std::size_t>(g * L.M + a)] = g + a * L.G;
        }
    }
    return order;
}

namespace {

Tensor lower_triangular_mask(std::int64_t T) {
    const double ninf = -std::numeric_limits<double>::infinity();
    Tensor mask({T, T});
    for (std::int64_t a = 0; a < T; ++a) {
        for (std::int64_t b = 0; b < T; ++b) {
            mask.data()[a * T + b] = b <= a ? 0.0 : ninf;
        }
    }
    return mask;
}

void check_seq(const Tensor& x, std::int64_t C) {
    if (x.ndim() != 3) throw ShapeError("causal modules expect [B,N,C], got " + shape_str(x.shape()));
    if (x.dim(2) != C) {
        throw ShapeError("channel mismatch: input " + shape_str(x.shape()) + " vs dim " +
                         std::to_string(C));
    }
}

}  // namespace

Tensor causal_iw_attention(const Tensor& x, const Layout1D& L, const AttentionParams& p) {
    check_seq(x, p.dim);
    if (x.dim(1) != L.N) {
        throw LayoutError("sequence length " + std::to_string(x.dim(1)) +
                          " does not match layout N=" + std::to_string(L.N));
    }
    const std::int64_t B = x.dim(0), C = p.dim;
    const auto order = group_gather_order(L);
    std::vector<std::int64_t> inverse(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        inverse[static_cast<std::size_t>(order[i])] = static_cast<std::int64_t>(i);
    }

    Tensor grouped = permute_dim1(x, order);                    // groups contiguous, time order kept
    Tensor windows = reshape(grouped, {B * L.G, L.M, C});
    const Tensor mask = lower_triangular_mask(L.M);             // original-order causality
    Tensor attended = window_msa(windows, p, &mask);
    Tensor flat = reshape(attended, {B, L.N, C});
    return permute_dim1(flat, inverse);
}

Tensor causal_block_attention(const Tensor& x, std::int64_t window, const AttentionParams& p) {
    check_seq(x, p.dim);
    const std::int64_t B = x.dim(0), N = x.dim(1), C = p.dim;
    if (window < 1 || N % window != 0) {
        throw LayoutError("block window " + std::to_string(window) +
                          " does not divide sequence length " + std::to_string(N));
    }
    Tensor windows = reshape(x, {B * (N / window), window, C});
    const Tensor mask = lower_triangular_mask(window);
    Tensor attended = window_msa(windows, p, &mask);
    return reshape(attended, {B, N, C});
}

CausalConvParams CausalConvParams::init(std::int64_t dim, int ksize, Rng& rng) {
    if (ksize < 1) throw ConfigError("causal kernel size must be >= 1");
    CausalConvParams p;
    p.ksize = ksize;
    p.kernel = Tensor::randn({ksize, dim}, rng, 0.02);
    p.bias = Tensor::zeros({dim});
    return p;
}

Tensor causal_conv(const Tensor& x, const CausalConvParams& p) {
    return causal_dwconv1d(x, p.kernel, p.bias);
}

Causal1dParams Causal1dParams::init(std::int64_t dim, int heads, int ksize, Rng& rng,
                                    bool dual_window) {
    Causal1dParams p;
    p.attn = AttentionParams::init(dim, heads, rng);
    p.dual_window = dual_window;
    if (dual_window) {
        p.attn2 = AttentionParams::init(dim, heads, rng);
    } else {
        p.conv = CausalConvParams::init(dim, ksize, rng);
    }
    return p;
}

Tensor causal1d_forward(const Tensor& x, const Layout1D& L, const Causal1dParams& p) {
    Tensor attn = causal_iw_attention(x, L, p.attn);
    if (p.dual_window) {
        // both window sizes equal sqrt(N)
        if (L.M != L.G) {
            throw ConfigError("dual-window mode requires M = sqrt(N), got M=" +
                              std::to_string(L.M) + " for N=" + std::to_string(L.N));
        }
        return add(attn, causal_block_attention(x, L.M, p.attn2));
    }
    return add(attn, causal_conv(x, p.conv));
}

CausalCost causal1d_cost(const Layout1D& L, const Causal1dParams& p) {
    CausalCost c;
    c.interleaved_score_pairs = L.G * L.M * L.M;  // = N * M
    if (p.dual_window) {
        c.block_score_pairs = (L.N / L.M) * L.M * L.M;
    } else {
        c.conv_taps = L.N * p.conv.ksize;
    }
    return c;
}

}  // namespace iwin
