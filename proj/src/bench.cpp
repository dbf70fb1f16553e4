#include "iwin/bench.hpp"

#include <algorithm>
#include <chrono>

#include "iwin/analysis.hpp"
#include "iwin/layers.hpp"

namespace iwin::bench {

namespace {

struct Timing {
    double median = 0.0, min = 0.0, max = 0.0;
};

Timing time_repeats(const std::function<void()>& fn, int repeats) {
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(repeats));
    for (int i = 0; i < repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    return {times[times.size() / 2], times.front(), times.back()};
}

nlohmann::json timing_json(const Timing& t) {
    return {{"median_seconds", t.median}, {"min_seconds", t.min}, {"max_seconds", t.max},
            {"spread_seconds", t.max - t.min}};
}

}  // namespace

nlohmann::json bench_rearrange(std::int64_t H, std::int64_t W, std::int64_t C, std::int64_t M,
                               int repeats) {
    WindowLayout L(H, W, M);
    Rng rng(1);
    Tensor x = Tensor::randn({1, H, W, C}, rng);
    // correctness before timing
    if (max_abs_diff(restore(rearrange(x, L), L), x) != 0.0) {
        throw ContractError("rearrange/restore round trip broke before timing");
    }
    nlohmann::json j;
    j["op"] = "rearrange+restore";
    j["shape"] = {H, W, C};
    j["window"] = M;
    j["repeats"] = repeats;
    j["reshape_route"] = timing_json(time_repeats([&] { (void)restore(rearrange(x, L), L); }, repeats));
    j["index_route"] = timing_json(time_repeats(
        [&] { (void)restore(rearrange(x, L, PermPath::index_map), L, PermPath::index_map); },
        repeats));
    return j;
}

nlohmann::json bench_attention(std::int64_t H, std::int64_t W, std::int64_t C, std::int64_t M,
                               int heads, int repeats) {
    WindowLayout L(H, W, M);
    Rng rng(2);
    AttentionParams p = AttentionParams::init(C, heads, rng);
    Tensor x = Tensor::randn({1, H, W, C}, rng);

    // correctness probe: on a single-window layout the two paths coincide
    {
        WindowLayout probe(4, 4, 4);
        Tensor px = Tensor::randn({1, 4, 4, C}, rng);
        Tensor a = iw_msa(px, probe, p);
        Tensor b = reshape(window_msa(reshape(px, {1, 16, C}), p), {1, 4, 4, C});
        if (max_abs_diff(a, b) > 1e-10) {
            throw ContractError("attention equivalence probe failed before timing");
        }
    }

    const Timing t_iw = time_repeats([&] { (void)iw_msa(x, L, p); }, repeats);
    Tensor flat = reshape(x, {1, H * W, C});
    const Timing t_dense = time_repeats([&] { (void)window_msa(flat, p); }, repeats);

    const ModuleCost mc = module_flops(H, W, C, M, 0);
    nlohmann::json j;
    j["op"] = "iw_msa_vs_dense";
    j["shape"] = {H, W, C};
    j["window"] = M;
    j["heads"] = heads;
    j["repeats"] = repeats;
    j["iw_msa"] = timing_json(t_iw);
    j["dense"] = timing_json(t_dense);
    j["measured_speedup"] = t_dense.median / t_iw.median;
    // score work: windows * (M^2)^2 vs (HW)^2 pairs
    j["theoretical_score_work_ratio"] =
        static_cast<double>(M * M) / static_cast<double>(H * W);
    j["iw_module_flops"] = mc.total();
    j["swin_module_flops"] = mc.swin_total;
    return j;
}

nlohmann::json bench_dwconv(std::int64_t H, std::int64_t W, std::int64_t C, int K, int repeats) {
    Rng rng(3);
    DepthwiseConvParams p = DepthwiseConvParams::init(C, K, rng);
    Tensor x = Tensor::randn({1, H, W, C}, rng);
    // delta-kernel identity probe
    {
        DepthwiseConvParams delta = p;
        delta.kernel = Tensor::zeros({K, K, C});
        for (std::int64_t c = 0; c < C; ++c) {
            delta.kernel.data()[((K / 2) * K + K / 2) * C + c] = 1.0;
        }
        delta.bias = Tensor::zeros({C});
        if (max_abs_diff(depthwise_conv(x, delta), x) != 0.0) {
            throw ContractError("depthwise delta probe failed before timing");
        }
    }
    nlohmann::json j;
    j["op"] = "depthwise_conv";
    j["shape"] = {H, W, C};
    j["kernel"] = K;
    j["repeats"] = repeats;
    j["timing"] = timing_json(time_repeats([&] { (void)depthwise_conv(x, p); }, repeats));
    return j;
}

}  // namespace iwin::bench
