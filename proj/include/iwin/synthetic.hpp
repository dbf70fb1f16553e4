#pragma once

#include <string>
#include <vector>

#include "iwin/tensor.hpp"

namespace iwin {

// Seeded synthetic classification task: each class is keyed to a coarse
// block pattern upsampled to the image size, plus optional per-sample
// Gaussian noise. Identical seeds give bit-identical datasets; at noise 0
// the classes are distinct constant images, separable by construction.
struct SyntheticTask {
    int classes = 4;
    std::int64_t image_size = 64;
    std::uint64_t seed = 0;
    double noise = 0.0;
    int samples_per_class = 2;
    std::string kind = "blocks";
};

struct Dataset {
    Tensor images;  // [N, S, S, 3]
    std::vector<int> labels;
};

Dataset make_dataset(const SyntheticTask& task);

// Nearest-neighbour upscale by an integer factor (for resolution transfer).
Tensor upscale_nearest(const Tensor& images, int factor);

}  // namespace iwin
