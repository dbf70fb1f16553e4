#pragma once

#include <array>
#include <functional>
#include <string>

#include "iwin/block.hpp"

namespace iwin {

// Four-stage hierarchical backbone description. Stage s runs at spatial
// extent resolution / (4 * 2^s) with 2^s * patch_dim channels.
struct ModelConfig {
    std::string name = "custom";
    std::int64_t patch_dim = 96;
    std::array<int, 4> depths{2, 2, 6, 2};
    std::array<int, 4> heads{3, 6, 12, 24};
    std::array<int, 4> kernels{3, 3, 3, 0};  // 0 = no conv branch
    std::int64_t window = 7;
    std::int64_t resolution = 224;
    int num_classes = 1000;
    double mlp_ratio = 4.0;
    BlockStructure structure = BlockStructure::S1;
    PositionMode pos_mode = PositionMode::none;
    bool conv_pointwise = false;  // experimental 1x1 stage on the conv branch

    std::int64_t stage_dim(int s) const { return patch_dim << s; }
    std::int64_t stage_map(int s) const { return resolution / 4 >> s; }
    BlockConfig block_config(int s) const;
    void validate() const;  // LayoutError names the first offending stage
};

// Window hyperparameter for a given input resolution: the published mapping
// for 224/384/512/1024, proportional (resolution / 32) otherwise.
std::int64_t window_for_resolution(std::int64_t resolution);

// T / S / B / L and the desk-scale "tiny-test" variant.
ModelConfig build_variant(const std::string& name, std::int64_t resolution);

std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& json_text);

// Human-readable per-stage table (one row per stage).
struct StageDescription {
    int stage;
    std::int64_t downsample_rate, output_size, dim;
    int heads, depth, kernel;
    std::int64_t window;
};
std::vector<StageDescription> describe(const ModelConfig& cfg);

// --------------------------------------------------------------------------

struct StageWeights {
    std::vector<BlockWeights> blocks;
    Conv2dParams downsample;  // absent on the last stage
    bool has_downsample = false;
};

struct ModelWeights {
    Conv2dParams patch;
    LayerNormParams patch_norm;
    Tensor abs_pos;  // [Hp, Wp, C0] in absolute position mode only
    std::vector<StageWeights> stages;
    LayerNormParams final_norm;
    Tensor head_w, head_b;
};

ModelWeights init_weights(const ModelConfig& cfg, std::uint64_t seed);

// Visits every parameter tensor as (name, tensor). The mutable overload is
// what the optimizer and serializer iterate.
void for_each_tensor(ModelWeights& w, const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_tensor(const ModelWeights& w,
                     const std::function<void(const std::string&, const Tensor&)>& fn);

// Shape-only walk of the same parameter set; count_params sums it. The
// instantiated-weights total must agree exactly (covered by tests).
void for_each_param_shape(const ModelConfig& cfg,
                          const std::function<void(const std::string&, const Shape&)>& fn);
std::int64_t count_params(const ModelConfig& cfg);

// Tracked copy whose tensors are watched leaves of `tape`.
ModelWeights watch_weights(Tape& tape, const ModelWeights& w);

Tensor backbone_forward(const Tensor& image, const ModelConfig& cfg, const ModelWeights& w,
                        PermPath path = PermPath::reshape);

void save_model(const std::string& path, const ModelConfig& cfg, const ModelWeights& w);
struct LoadedModel {
    ModelConfig config;
    ModelWeights weights;
};
LoadedModel load_model(const std::string& path);

}  // namespace iwin
