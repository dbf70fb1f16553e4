#pragma once

#include <json.hpp>

#include "iwin/tensor.hpp"

namespace iwin::bench {

// Wall-clock micro-benchmarks. Correctness of the benchmarked path is
// asserted before any timing. Results report the median over `repeats`.
nlohmann::json bench_rearrange(std::int64_t H, std::int64_t W, std::int64_t C, std::int64_t M,
                               int repeats);

// interleaved window attention vs dense global attention on the same map,
// with the analytic score-work ratio M^2 / (H*W) alongside the measured one
nlohmann::json bench_attention(std::int64_t H, std::int64_t W, std::int64_t C, std::int64_t M,
                               int heads, int repeats);

nlohmann::json bench_dwconv(std::int64_t H, std::int64_t W, std::int64_t C, int K, int repeats);

}  // namespace iwin::bench
