#include "iwin/model.hpp"

#include <json.hpp>

#include "iwin/serialize.hpp"

namespace iwin {

BlockConfig ModelConfig::block_config(int s) const {
    BlockConfig b;
    b.dim = stage_dim(s);
    b.heads = heads[static_cast<std::size_t>(s)];
    b.window = window;
    b.kernel = kernels[static_cast<std::size_t>(s)];
    b.mlp_ratio = mlp_ratio;
    b.structure = structure;
    b.pos_mode = pos_mode == PositionMode::relative ? PositionMode::relative : PositionMode::none;
    b.conv_pointwise = conv_pointwise;
    return b;
}

void ModelConfig::validate() const {
    if (patch_dim < 1 || window < 1 || num_classes < 1) {
        throw ConfigError("model config has non-positive extents");
    }
    if (resolution % 32 != 0) {
        throw LayoutError("input resolution " + std::to_string(resolution) +
                          " is not divisible by 32");
    }
    for (int s = 0; s < 4; ++s) {
        if (stage_map(s) % window != 0) {
            throw LayoutError("stage " + std::to_string(s + 1) + " map " +
                              std::to_string(stage_map(s)) + " is not divisible by window " +
                              std::to_string(window));
        }
        if (stage_dim(s) % heads[static_cast<std::size_t>(s)] != 0) {
            throw ConfigError("stage " + std::to_string(s + 1) + " heads do not divide its width");
        }
        const int k = kernels[static_cast<std::size_t>(s)];
        if (k < 0 || (k > 0 && k % 2 == 0)) {
            throw ConfigError("stage " + std::to_string(s + 1) + " kernel must be odd or 0");
        }
    }
}

std::int64_t window_for_resolution(std::int64_t resolution) {
    switch (resolution) {
        case 224: return 7;
        case 384: return 12;
        case 512: return 16;
        case 1024: return 16;
        default: return resolution / 32;
    }
}

ModelConfig build_variant(const std::string& name, std::int64_t resolution) {
    ModelConfig cfg;
    cfg.name = name;
    cfg.resolution = resolution;
    cfg.window = window_for_resolution(resolution);
    if (name == "T" || name == "S" || name == "B" || name == "L") {
        if (resolution != 224 && resolution != 384 && resolution != 512 && resolution != 1024) {
            throw ConfigError("variant " + name + " is defined for resolutions 224/384/512/1024");
        }
        if (name == "T") {
            cfg.patch_dim = 96;
            cfg.depths = {2, 2, 6, 2};
            cfg.heads = {3, 6, 12, 24};
        } else if (name == "S") {
            cfg.patch_dim = 96;
            cfg.depths = {2, 2, 18, 2};
            cfg.heads = {3, 6, 12, 24};
        } else if (name == "B") {
            cfg.patch_dim = 128;
            cfg.depths = {2, 2, 18, 2};
            cfg.heads = {4, 8, 16, 32};
        } else {
            cfg.patch_dim = 192;
            cfg.depths = {2, 2, 18, 2};
            cfg.heads = {6, 12, 24, 48};
        }
        cfg.kernels = {3, 3, 3, 0};
        cfg.num_classes = 1000;
    } else if (name == "tiny-test") {
        cfg.patch_dim = 16;
        cfg.depths = {1, 1, 1, 1};
        cfg.heads = {1, 2, 4, 8};
        cfg.kernels = {3, 3, 3, 0};
        cfg.num_classes = 4;
    } else {
        throw ConfigError("unknown variant: " + name);
    }
    cfg.validate();
    return cfg;
}

std::vector<StageDescription> describe(const ModelConfig& cfg) {
    std::vector<StageDescription> rows;
    for (int s = 0; s < 4; ++s) {
        rows.push_back({s + 1, std::int64_t{4} << s, cfg.stage_map(s), cfg.stage_dim(s),
                        cfg.heads[static_cast<std::size_t>(s)],
                        cfg.depths[static_cast<std::size_t>(s)],
                        cfg.kernels[static_cast<std::size_t>(s)], cfg.window});
    }
    return rows;
}

// --------------------------------------------------------------------------
// JSON config document (mirrors the per-stage architecture table)

std::string config_to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["name"] = cfg.name;
    j["patch_dim"] = cfg.patch_dim;
    j["depths"] = cfg.depths;
    j["heads"] = cfg.heads;
    nlohmann::json kernels = nlohmann::json::array();
    for (int k : cfg.kernels) {
        if (k == 0) kernels.push_back(nullptr);
        else kernels.push_back(k);
    }
    j["kernels"] = kernels;
    j["window"] = cfg.window;
    j["resolution"] = cfg.resolution;
    j["num_classes"] = cfg.num_classes;
    j["mlp_ratio"] = cfg.mlp_ratio;
    j["structure"] = structure_name(cfg.structure);
    j["position_mode"] = position_mode_name(cfg.pos_mode);
    j["conv_pointwise"] = cfg.conv_pointwise;
    return j.dump(2);
}

ModelConfig config_from_json(const std::string& json_text) {
    const nlohmann::json j = nlohmann::json::parse(json_text);
    ModelConfig cfg;
    cfg.name = j.value("name", "custom");
    cfg.patch_dim = j.at("patch_dim").get<std::int64_t>();
    cfg.depths = j.at("depths").get<std::array<int, 4>>();
    cfg.heads = j.at("heads").get<std::array<int, 4>>();
    const auto& kernels = j.at("kernels");
    for (std::size_t s = 0; s < 4; ++s) {
        cfg.kernels[s] = kernels.at(s).is_null() ? 0 : kernels.at(s).get<int>();
    }
    cfg.window = j.at("window").get<std::int64_t>();
    cfg.resolution = j.at("resolution").get<std::int64_t>();
    cfg.num_classes = j.value("num_classes", 1000);
    cfg.mlp_ratio = j.value("mlp_ratio", 4.0);
    cfg.structure = structure_from_name(j.value("structure", "S1"));
    cfg.pos_mode = position_mode_from_name(j.value("position_mode", "none"));
    cfg.conv_pointwise = j.value("conv_pointwise", false);
    cfg.validate();
    return cfg;
}

// --------------------------------------------------------------------------
// weights

ModelWeights init_weights(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ModelWeights w;
    w.patch = Conv2dParams::init(3, cfg.patch_dim, 4, 4, 0, rng);
    w.patch_norm = LayerNormParams::init(cfg.patch_dim);
    if (cfg.pos_mode == PositionMode::absolute) {
        const std::int64_t grid = cfg.stage_map(0);
        w.abs_pos = Tensor::randn({grid, grid, cfg.patch_dim}, rng, 0.02);
    }
    for (int s = 0; s < 4; ++s) {
        StageWeights stage;
        const BlockConfig bc = cfg.block_config(s);
        for (int b = 0; b < cfg.depths[static_cast<std::size_t>(s)]; ++b) {
            stage.blocks.push_back(init_block(bc, rng));
        }
        if (s < 3) {
            stage.downsample = Conv2dParams::init(cfg.stage_dim(s), cfg.stage_dim(s + 1), 3, 2, 1, rng);
            stage.has_downsample = true;
        }
        w.stages.push_back(std::move(stage));
    }
    w.final_norm = LayerNormParams::init(cfg.stage_dim(3));
    w.head_w = Tensor::randn({cfg.stage_dim(3), cfg.num_classes}, rng, 0.02);
    w.head_b = Tensor::zeros({cfg.num_classes});
    return w;
}

namespace {

template <class W, class Fn>
void walk_tensors(W& w, Fn&& fn) {
    fn("patch.weight", w.patch.weight);
    fn("patch.bias", w.patch.bias);
    fn("patch_norm.gamma", w.patch_norm.gamma);
    fn("patch_norm.beta", w.patch_norm.beta);
    if (w.abs_pos.defined()) fn("abs_pos", w.abs_pos);
    for (std::size_t s = 0; s < w.stages.size(); ++s) {
        auto& stage = w.stages[s];
        for (std::size_t b = 0; b < stage.blocks.size(); ++b) {
            const std::string prefix = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b) + ".";
            auto& blk = stage.blocks[b];
            fn(prefix + "ln1.gamma", blk.ln1.gamma);
            fn(prefix + "ln1.beta", blk.ln1.beta);
            fn(prefix + "ln2.gamma", blk.ln2.gamma);
            fn(prefix + "ln2.beta", blk.ln2.beta);
            if (blk.ln3.gamma.defined()) {
                fn(prefix + "ln3.gamma", blk.ln3.gamma);
                fn(prefix + "ln3.beta", blk.ln3.beta);
            }
            fn(prefix + "attn.wq", blk.attn.wq);
            fn(prefix + "attn.bq", blk.attn.bq);
            fn(prefix + "attn.wk", blk.attn.wk);
            fn(prefix + "attn.bk", blk.attn.bk);
            fn(prefix + "attn.wv", blk.attn.wv);
            fn(prefix + "attn.bv", blk.attn.bv);
            fn(prefix + "attn.wo", blk.attn.wo);
            fn(prefix + "attn.bo", blk.attn.bo);
            if (blk.attn.rel_bias.defined()) fn(prefix + "attn.rel_bias", blk.attn.rel_bias);
            if (blk.conv.ksize > 0) {
                fn(prefix + "conv.kernel", blk.conv.kernel);
                fn(prefix + "conv.bias", blk.conv.bias);
                if (blk.conv.pointwise) {
                    fn(prefix + "conv.pw_weight", blk.conv.pw_weight);
                    fn(prefix + "conv.pw_bias", blk.conv.pw_bias);
                }
            }
            fn(prefix + "mlp.w1", blk.mlp.w1);
            fn(prefix + "mlp.b1", blk.mlp.b1);
            fn(prefix + "mlp.w2", blk.mlp.w2);
            fn(prefix + "mlp.b2", blk.mlp.b2);
        }
        if (stage.has_downsample) {
            const std::string prefix = "stage" + std::to_string(s + 1) + ".downsample.";
            fn(prefix + "weight", stage.downsample.weight);
            fn(prefix + "bias", stage.downsample.bias);
        }
    }
    fn("final_norm.gamma", w.final_norm.gamma);
    fn("final_norm.beta", w.final_norm.beta);
    fn("head.weight", w.head_w);
    fn("head.bias", w.head_b);
}

}  // namespace

void for_each_tensor(ModelWeights& w, const std::function<void(const std::string&, Tensor&)>& fn) {
    walk_tensors(w, fn);
}

void for_each_tensor(const ModelWeights& w,
                     const std::function<void(const std::string&, const Tensor&)>& fn) {
    walk_tensors(w, fn);
}

void for_each_param_shape(const ModelConfig& cfg,
                          const std::function<void(const std::string&, const Shape&)>& fn) {
    cfg.validate();
    const std::int64_t C0 = cfg.patch_dim;
    fn("patch.weight", {4, 4, 3, C0});
    fn("patch.bias", {C0});
    fn("patch_norm.gamma", {C0});
    fn("patch_norm.beta", {C0});
    if (cfg.pos_mode == PositionMode::absolute) {
        fn("abs_pos", {cfg.stage_map(0), cfg.stage_map(0), C0});
    }
    for (int s = 0; s < 4; ++s) {
        const std::int64_t D = cfg.stage_dim(s);
        const BlockConfig bc = cfg.block_config(s);
        const auto hidden = static_cast<std::int64_t>(std::llround(cfg.mlp_ratio * static_cast<double>(D)));
        for (int b = 0; b < cfg.depths[static_cast<std::size_t>(s)]; ++b) {
            const std::string prefix = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b) + ".";
            fn(prefix + "ln1.gamma", {D});
            fn(prefix + "ln1.beta", {D});
            fn(prefix + "ln2.gamma", {D});
            fn(prefix + "ln2.beta", {D});
            if (block_norm_count(bc) == 3) {
                fn(prefix + "ln3.gamma", {D});
                fn(prefix + "ln3.beta", {D});
            }
            for (const char* mat : {"wq", "wk", "wv", "wo"}) {
                fn(prefix + "attn." + mat, {D, D});
            }
            for (const char* vec : {"bq", "bk", "bv", "bo"}) {
                fn(prefix + "attn." + vec, {D});
            }
            if (bc.pos_mode == PositionMode::relative) {
                const std::int64_t span = 2 * cfg.window - 1;
                fn(prefix + "attn.rel_bias", {span * span, bc.heads});
            }
            if (bc.has_conv()) {
                fn(prefix + "conv.kernel", {bc.kernel, bc.kernel, D});
                fn(prefix + "conv.bias", {D});
                if (bc.conv_pointwise) {
                    fn(prefix + "conv.pw_weight", {D, D});
                    fn(prefix + "conv.pw_bias", {D});
                }
            }
            fn(prefix + "mlp.w1", {D, hidden});
            fn(prefix + "mlp.b1", {hidden});
            fn(prefix + "mlp.w2", {hidden, D});
            fn(prefix + "mlp.b2", {D});
        }
        if (s < 3) {
            const std::string prefix = "stage" + std::to_string(s + 1) + ".downsample.";
            fn(prefix + "weight", {3, 3, D, cfg.stage_dim(s + 1)});
            fn(prefix + "bias", {cfg.stage_dim(s + 1)});
        }
    }
    fn("final_norm.gamma", {cfg.stage_dim(3)});
    fn("final_norm.beta", {cfg.stage_dim(3)});
    fn("head.weight", {cfg.stage_dim(3), cfg.num_classes});
    fn("head.bias", {cfg.num_classes});
}

std::int64_t count_params(const ModelConfig& cfg) {
    std::int64_t total = 0;
    for_each_param_shape(cfg, [&](const std::string&, const Shape& s) { total += shape_numel(s); });
    return total;
}

ModelWeights watch_weights(Tape& tape, const ModelWeights& w) {
    ModelWeights tracked = w;
    for_each_tensor(tracked, [&](const std::string&, Tensor& t) { t = tape.watch(t); });
    return tracked;
}

// --------------------------------------------------------------------------

Tensor backbone_forward(const Tensor& image, const ModelConfig& cfg, const ModelWeights& w,
                        PermPath path) {
    cfg.validate();
    if (image.ndim() != 4 || image.dim(3) != 3) {
        throw ShapeError("backbone expects [B,H,W,3] images, got " + shape_str(image.shape()));
    }
    Tensor x = patch_embed(image, w.patch, w.patch_norm);
    if (cfg.pos_mode == PositionMode::absolute) {
        if (!w.abs_pos.defined()) throw ConfigError("absolute position mode without a table");
        if (w.abs_pos.dim(0) != x.dim(1) || w.abs_pos.dim(1) != x.dim(2)) {
            throw ShapeError("absolute position table " + shape_str(w.abs_pos.shape()) +
                             " does not match feature map " + shape_str(x.shape()) +
                             "; the table is bound to the training resolution");
        }
        x = add(x, reshape(w.abs_pos, {1, w.abs_pos.dim(0), w.abs_pos.dim(1), w.abs_pos.dim(2)}));
    }
    for (int s = 0; s < 4; ++s) {
        const BlockConfig bc = cfg.block_config(s);
        const auto& stage = w.stages[static_cast<std::size_t>(s)];
        for (const BlockWeights& blk : stage.blocks) {
            x = block_forward(x, bc, blk, path);
        }
        if (stage.has_downsample) {
            x = downsample(x, stage.downsample);
        }
    }
    Tensor pooled = global_avg_pool(x);
    Tensor normed = layernorm(pooled, w.final_norm.gamma, w.final_norm.beta, w.final_norm.eps);
    return linear(normed, w.head_w, w.head_b);
}

// --------------------------------------------------------------------------
// persistence

void save_model(const std::string& path, const ModelConfig& cfg, const ModelWeights& w) {
    std::vector<std::pair<std::string, Tensor>> items;
    for_each_tensor(w, [&](const std::string& name, const Tensor& t) {
        items.emplace_back(name, t);
    });
    save_tensors(path, items, {{"config", config_to_json(cfg)}});
}

LoadedModel load_model(const std::string& path) {
    TensorArchive archive = load_tensors(path);
    if (!archive.meta.count("config")) throw IoError(path + " has no embedded model config");
    LoadedModel m{config_from_json(archive.meta.at("config")), {}};
    m.weights = init_weights(m.config, 0);
    for_each_tensor(m.weights, [&](const std::string& name, Tensor& t) {
        auto it = archive.tensors.find(name);
        if (it == archive.tensors.end()) throw IoError("missing tensor in archive: " + name);
        if (!same_shape(it->second.shape(), t.shape())) {
            throw IoError("archived tensor " + name + " has shape " + shape_str(it->second.shape()) +
                          ", expected " + shape_str(t.shape()));
        }
        t = it->second;
    });
    return m;
}

}  // namespace iwin
