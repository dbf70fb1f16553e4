#pragma once

#include <optional>
#include <string>
#include <vector>

#include "iwin/interleave.hpp"
#include "iwin/model.hpp"

namespace iwin {

// --------------------------------------------------------------------------
// Reachability: can any two grid positions exchange information through one
// attention hop (residue-coset cliques) and one conv hop?
//
// Two conv-edge readings are implemented. `lemma` takes the stated adjacency
// |di| <= K, |dj| <= K literally; `physical` uses the true reach of a K x K
// kernel, |di| <= K/2. The verifier checks the union graph of a single
// block's attention and conv edges with paths of at most two edges, at most
// one of each label in either order; a stack of two blocks realizes such
// paths under the parallel block wiring.

enum class ConvRadiusMode { lemma, physical };

struct ReachabilityWitness {
    GridPos from, mid, to;
    // from->mid is an attention edge (same residue coset),
    // mid->to is a conv edge (Chebyshev distance within the radius)
};

// Constructive intermediate for any pair:
//   i3 = (i1 mod Hg) + Hg * floor(i2 / Hg), j3 analogous,
// which always shares p1's coset and satisfies |i2 - i3| <= Hg - 1.
// Both guarantees are re-verified at runtime.
ReachabilityWitness witness(GridPos p1, GridPos p2, const WindowLayout& layout);

struct ReachabilityReport {
    std::int64_t H = 0, W = 0, M = 0, K = 0;
    ConvRadiusMode mode = ConvRadiusMode::lemma;
    std::int64_t radius = 0;
    bool pass = false;
    // the constructive witness alone certifies every ordered pair
    bool witness_certified_all = false;
    std::int64_t pairs_total = 0;
    std::int64_t direct_attn = 0, direct_conv = 0, two_hop = 0;
    std::optional<std::pair<GridPos, GridPos>> unreachable;
    std::vector<ReachabilityWitness> sample_witnesses;
    std::string note;

    bool condition_holds() const { return K * M >= std::max(H, W); }
};

ReachabilityReport verify_global_exchange(const WindowLayout& layout, std::int64_t K,
                                   ConvRadiusMode mode = ConvRadiusMode::lemma);

// Smallest block count d such that an effective conv radius of d * (K/2)
// makes the physical-mode check pass. A single-window layout needs no conv
// hop at all and reports depth 1 by convention.
struct DepthBound {
    bool reachable = false;
    std::int64_t depth = 0;
};
DepthBound erf_depth_bound(const WindowLayout& layout, std::int64_t K,
                           std::int64_t max_depth = 1024);

// --------------------------------------------------------------------------
// Analytic cost model. FLOPs are multiply-accumulates (1 MAC = 1 FLOP);
// softmax, norms, activations, pooling and bias adds are excluded from the
// headline totals and reported separately as `aux_flops`. Only this
// convention reproduces the published parameter/FLOPs tables.

struct ModuleCost {
    std::int64_t qkv = 0;        // 3 * HW * C^2
    std::int64_t attn_core = 0;  // 2 * HW * M^2 * C
    std::int64_t out_proj = 0;   // HW * C^2
    std::int64_t conv = 0;       // HW * C * k^2
    std::int64_t swin_total = 0; // 4*HW*C^2 + 2*M^2*HW*C for the same geometry

    std::int64_t total() const { return qkv + attn_core + out_proj + conv; }
};
ModuleCost module_flops(std::int64_t H, std::int64_t W, std::int64_t C, std::int64_t M,
                        std::int64_t k);

struct StageCost {
    int stage = 0;
    std::int64_t map = 0, dim = 0;
    int blocks = 0;
    std::int64_t attn_flops = 0, mlp_flops = 0, downsample_flops = 0;
    std::int64_t flops = 0;   // attn + mlp + downsample
    std::int64_t params = 0;  // blocks + downsample
};

struct CostReport {
    std::string variant;
    std::int64_t resolution = 0;
    std::vector<StageCost> stages;
    std::int64_t patch_flops = 0, head_flops = 0;
    std::int64_t patch_params = 0, head_params = 0;
    std::int64_t total_flops = 0;
    std::int64_t total_params = 0;
    std::int64_t aux_flops = 0;  // bias adds + norm affine work, informational

    double gflops() const { return static_cast<double>(total_flops) * 1e-9; }
    double mparams() const { return static_cast<double>(total_params) * 1e-6; }
};

CostReport model_cost(const ModelConfig& cfg, std::int64_t resolution);

// Published reference numbers for the T/S/B/L variants (zero where the
// table has no entry for that cell).
struct PublishedCost {
    double mparams = 0.0;
    double gflops = 0.0;
};
PublishedCost published_cost(const std::string& variant, std::int64_t resolution);

}  // namespace iwin
