#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "iwin/kernels.hpp"
#include "iwin/rng.hpp"

using namespace iwin;
using kernels::i64;

namespace {

std::vector<double> random_vec(i64 n, Rng& rng) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = rng.normal();
    return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

// The AVX2 kernels are written to run the same IEEE operation sequence per
// output element as the scalar reference, so results must match exactly.
TEST_CASE("matmul: scalar and avx2 agree bit for bit") {
    const auto* avx2 = kernels::avx2_ops();
    if (!avx2) {
        MESSAGE("AVX2 unavailable; skipping");
        return;
    }
    Rng rng(7);
    // odd sizes exercise the remainder tails
    for (auto [m, k, n] : {std::tuple<i64, i64, i64>{1, 1, 1},
                           {3, 5, 7},
                           {8, 8, 8},
                           {13, 4, 9},
                           {5, 17, 6},
                           {16, 32, 33}}) {
        auto a = random_vec(m * k, rng);
        auto b = random_vec(k * n, rng);
        std::vector<double> cs(static_cast<std::size_t>(m * n)), cv(static_cast<std::size_t>(m * n));
        kernels::scalar_ops().matmul(a.data(), b.data(), cs.data(), m, k, n);
        avx2->matmul(a.data(), b.data(), cv.data(), m, k, n);
        CHECK(bit_equal(cs, cv));
    }
}

TEST_CASE("dwconv2d: scalar and avx2 agree bit for bit") {
    const auto* avx2 = kernels::avx2_ops();
    if (!avx2) {
        MESSAGE("AVX2 unavailable; skipping");
        return;
    }
    Rng rng(11);
    for (auto [H, W, C, K] : {std::tuple<i64, i64, i64, i64>{5, 5, 3, 3},
                              {7, 4, 8, 3},
                              {6, 6, 1, 5},
                              {9, 3, 10, 7},
                              {4, 4, 6, 1}}) {
        auto x = random_vec(H * W * C, rng);
        auto w = random_vec(K * K * C, rng);
        auto b = random_vec(C, rng);
        std::vector<double> ys(static_cast<std::size_t>(H * W * C)), yv(ys);
        kernels::scalar_ops().dwconv2d(x.data(), w.data(), b.data(), ys.data(), H, W, C, K);
        avx2->dwconv2d(x.data(), w.data(), b.data(), yv.data(), H, W, C, K);
        CHECK(bit_equal(ys, yv));
    }
}

TEST_CASE("elementwise kernels: scalar and avx2 agree bit for bit") {
    const auto* avx2 = kernels::avx2_ops();
    if (!avx2) {
        MESSAGE("AVX2 unavailable; skipping");
        return;
    }
    Rng rng(13);
    for (i64 n : {1, 3, 4, 7, 16, 31, 100}) {
        auto a = random_vec(n, rng);
        auto b = random_vec(n, rng);
        std::vector<double> s(static_cast<std::size_t>(n)), v(static_cast<std::size_t>(n));

        kernels::scalar_ops().add(a.data(), b.data(), s.data(), n);
        avx2->add(a.data(), b.data(), v.data(), n);
        CHECK(bit_equal(s, v));

        kernels::scalar_ops().sub(a.data(), b.data(), s.data(), n);
        avx2->sub(a.data(), b.data(), v.data(), n);
        CHECK(bit_equal(s, v));

        kernels::scalar_ops().mul(a.data(), b.data(), s.data(), n);
        avx2->mul(a.data(), b.data(), v.data(), n);
        CHECK(bit_equal(s, v));

        kernels::scalar_ops().scale(a.data(), 1.7, s.data(), n);
        avx2->scale(a.data(), 1.7, v.data(), n);
        CHECK(bit_equal(s, v));

        auto ys = b, yv = b;
        kernels::scalar_ops().axpy(-0.3, a.data(), ys.data(), n);
        avx2->axpy(-0.3, a.data(), yv.data(), n);
        CHECK(bit_equal(ys, yv));
    }
}

TEST_CASE("matmul against a naive triple loop") {
    Rng rng(3);
    const i64 m = 3, k = 4, n = 5;
    auto a = random_vec(m * k, rng);
    auto b = random_vec(k * n, rng);
    std::vector<double> c(static_cast<std::size_t>(m * n));
    kernels::active().matmul(a.data(), b.data(), c.data(), m, k, n);
    for (i64 i = 0; i < m; ++i) {
        for (i64 j = 0; j < n; ++j) {
            double acc = 0.0;
            for (i64 p = 0; p < k; ++p) acc += a[static_cast<std::size_t>(i * k + p)] *
                                                b[static_cast<std::size_t>(p * n + j)];
            CHECK(std::abs(c[static_cast<std::size_t>(i * n + j)] - acc) < 1e-12);
        }
    }
}

TEST_CASE("backend selection") {
    const auto initial = kernels::active_backend();
    kernels::set_backend(kernels::Backend::scalar);
    CHECK(kernels::active_backend() == kernels::Backend::scalar);
    CHECK(std::string(kernels::active().name) == "scalar");
    if (kernels::avx2_available()) {
        kernels::set_backend(kernels::Backend::avx2);
        CHECK(std::string(kernels::active().name) == "avx2");
    }
    kernels::set_backend(initial);
}
