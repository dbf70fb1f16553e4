#pragma once

#include "iwin/layers.hpp"

namespace iwin {

// Block wiring variants:
//   S1 - attention and conv run on one normalized input and their results
//        sum into a single residual (the shipped configuration),
//   S2 - attention and conv are separate sequential residual updates, each
//        with its own norm,
//   S3 - serial: the conv output, normalized once more, feeds attention.
// All variants end with a norm + MLP residual and preserve shape.
enum class BlockStructure { S1, S2, S3 };

struct BlockConfig {
    std::int64_t dim = 0;
    int heads = 1;
    std::int64_t window = 1;
    int kernel = 0;  // 0 disables the conv branch (stage-4 convention)
    double mlp_ratio = 4.0;
    BlockStructure structure = BlockStructure::S1;
    PositionMode pos_mode = PositionMode::none;
    // experimental: add the 1x1 cross-channel stage to the conv branch
    bool conv_pointwise = false;

    bool has_conv() const { return kernel > 0; }
};

struct BlockWeights {
    LayerNormParams ln1;  // before the unified module (S1) / attention (S2) / conv (S3)
    LayerNormParams ln2;  // before the MLP
    LayerNormParams ln3;  // S2: before conv; S3: between conv and attention
    AttentionParams attn;
    DepthwiseConvParams conv;  // present only when cfg.has_conv()
    MlpParams mlp;
};

BlockWeights init_block(const BlockConfig& cfg, Rng& rng);

// Number of norm layers the structure uses (S1: 2, S2/S3: 3; one less
// whenever the conv branch is absent).
int block_norm_count(const BlockConfig& cfg);

Tensor block_forward(const Tensor& x, const BlockConfig& cfg, const BlockWeights& w,
                     PermPath path = PermPath::reshape);

std::string structure_name(BlockStructure s);
BlockStructure structure_from_name(const std::string& name);
std::string position_mode_name(PositionMode m);
PositionMode position_mode_from_name(const std::string& name);

}  // namespace iwin
