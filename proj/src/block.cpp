#include "iwin/block.hpp"

namespace iwin {

BlockWeights init_block(const BlockConfig& cfg, Rng& rng) {
    BlockWeights w;
    w.ln1 = LayerNormParams::init(cfg.dim);
    w.ln2 = LayerNormParams::init(cfg.dim);
    if (block_norm_count(cfg) == 3) w.ln3 = LayerNormParams::init(cfg.dim);
    w.attn = AttentionParams::init(cfg.dim, cfg.heads, rng, cfg.pos_mode,
                                   cfg.pos_mode == PositionMode::relative ? cfg.window : 0);
    if (cfg.has_conv()) {
        w.conv = DepthwiseConvParams::init(cfg.dim, cfg.kernel, rng, cfg.conv_pointwise);
    }
    w.mlp = MlpParams::init(cfg.dim, cfg.mlp_ratio, rng);
    return w;
}

int block_norm_count(const BlockConfig& cfg) {
    if (!cfg.has_conv()) return 2;
    return cfg.structure == BlockStructure::S1 ? 2 : 3;
}

Tensor block_forward(const Tensor& x, const BlockConfig& cfg, const BlockWeights& w,
                     PermPath path) {
    if (x.ndim() != 4 || x.dim(3) != cfg.dim) {
        throw ShapeError("block expects [B,H,W," + std::to_string(cfg.dim) + "], got " +
                         shape_str(x.shape()));
    }
    const WindowLayout layout(x.dim(1), x.dim(2), cfg.window);
    if (cfg.pos_mode == PositionMode::relative &&
        (!w.attn.rel_bias.defined() || w.attn.rel_window != cfg.window)) {
        throw ConfigError("relative position mode requires a bias table matching window " +
                          std::to_string(cfg.window));
    }

    Tensor cur;
    switch (cfg.structure) {
        case BlockStructure::S1: {
            const Tensor normed = layernorm_fm(x, w.ln1);
            Tensor branches = iw_msa(normed, layout, w.attn, path);
            if (cfg.has_conv()) branches = add(branches, depthwise_conv(normed, w.conv));
            cur = add(x, branches);
            break;
        }
        case BlockStructure::S2: {
            cur = add(x, iw_msa(layernorm_fm(x, w.ln1), layout, w.attn, path));
            if (cfg.has_conv()) cur = add(cur, depthwise_conv(layernorm_fm(cur, w.ln3), w.conv));
            break;
        }
        case BlockStructure::S3: {
            Tensor t = layernorm_fm(x, w.ln1);
            if (cfg.has_conv()) t = layernorm_fm(depthwise_conv(t, w.conv), w.ln3);
            cur = add(x, iw_msa(t, layout, w.attn, path));
            break;
        }
    }
    return add(cur, mlp(layernorm_fm(cur, w.ln2), w.mlp));
}

std::string structure_name(BlockStructure s) {
    switch (s) {
        case BlockStructure::S1: return "S1";
        case BlockStructure::S2: return "S2";
        case BlockStructure::S3: return "S3";
    }
    return "S1";
}

BlockStructure structure_from_name(const std::string& name) {
    if (name == "S1") return BlockStructure::S1;
    if (name == "S2") return BlockStructure::S2;
    if (name == "S3") return BlockStructure::S3;
    throw ConfigError("unknown block structure: " + name);
}

std::string position_mode_name(PositionMode m) {
    switch (m) {
        case PositionMode::none: return "none";
        case PositionMode::absolute: return "absolute";
        case PositionMode::relative: return "relative";
    }
    return "none";
}

PositionMode position_mode_from_name(const std::string& name) {
    if (name == "none") return PositionMode::none;
    if (name == "absolute") return PositionMode::absolute;
    if (name == "relative") return PositionMode::relative;
    throw ConfigError("unknown position mode: " + name);
}

}  // namespace iwin
