#include "iwin/synthetic.hpp"

namespace iwin {

namespace {
constexpr std::int64_t kPatternGrid = 4;  // coarse cells per axis
}

Dataset make_dataset(const SyntheticTask& task) {
    if (task.kind != "blocks") throw ConfigError("unknown synthetic task kind: " + task.kind);
    if (task.classes < 2 || task.samples_per_class < 1 || task.image_size < kPatternGrid) {
        throw ConfigError("synthetic task needs >= 2 classes, >= 1 sample each, size >= 4");
    }
    const std::int64_t S = task.image_size;
    const std::int64_t N = static_cast<std::int64_t>(task.classes) * task.samples_per_class;
    const std::int64_t cell = S / kPatternGrid;

    // class-keyed coarse patterns: a per-class base color plus block texture,
    // so the classes stay separable by statistics that survive rescaling
    std::vector<Tensor> patterns;
    for (int k = 0; k < task.classes; ++k) {
        Rng rng(task.seed * 1000003ull + static_cast<std::uint64_t>(k) + 1);
        double base[3];
        for (double& b : base) b = rng.uniform(-0.8, 0.8);
        Tensor p({kPatternGrid, kPatternGrid, 3});
        for (std::int64_t i = 0; i < p.size(); ++i) {
            p.data()[i] = base[i % 3] + rng.uniform(-0.4, 0.4);
        }
        patterns.push_back(p);
    }

    Dataset ds;
    ds.images = Tensor({N, S, S, 3});
    Rng noise_rng(task.seed ^ 0x5eedULL);
    std::int64_t n = 0;
    for (int k = 0; k < task.classes; ++k) {
        for (int s = 0; s < task.samples_per_class; ++s, ++n) {
            ds.labels.push_back(k);
            for (std::int64_t i = 0; i < S; ++i) {
                for (std::int64_t j = 0; j < S; ++j) {
                    const std::int64_t ci = std::min(i / cell, kPatternGrid - 1);
                    const std::int64_t cj = std::min(j / cell, kPatternGrid - 1);
                    for (std::int64_t c = 0; c < 3; ++c) {
                        double v = patterns[static_cast<std::size_t>(k)].at({ci, cj, c});
                        if (task.noise > 0.0) v += task.noise * noise_rng.normal();
                        ds.images.data()[((n * S + i) * S + j) * 3 + c] = v;
                    }
                }
            }
        }
    }
    return ds;
}

Tensor upscale_nearest(const Tensor& images, int factor) {
    if (images.ndim() != 4) throw ShapeError("upscale expects [N,H,W,C]");
    if (factor < 1) throw ConfigError("upscale factor must be >= 1");
    const std::int64_t N = images.dim(0), H = images.dim(1), W = images.dim(2), C = images.dim(3);
    Tensor out({N, H * factor, W * factor, C});
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t i = 0; i < H * factor; ++i)
            for (std::int64_t j = 0; j < W * factor; ++j)
                for (std::int64_t c = 0; c < C; ++c)
                    out.data()[((n * H * factor + i) * W * factor + j) * C + c] =
                        images.at({n, i / factor, j / factor, c});
    return out;
}

}  // namespace iwin
