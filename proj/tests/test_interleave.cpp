#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "iwin/interleave.hpp"
#include "iwin/tensor.hpp"

using namespace iwin;

namespace {

// Feature map whose single channel value encodes the flattened position.
Tensor tagged_grid(std::int64_t H, std::int64_t W) {
    Tensor x({1, H, W, 1});
    for (std::int64_t p = 0; p < H * W; ++p) x.data()[p] = static_cast<double>(p);
    return x;
}

std::vector<std::int64_t> divisors_of_both(std::int64_t h, std::int64_t w) {
    std::vector<std::int64_t> ms;
    for (std::int64_t m = 1; m <= std::min(h, w); ++m) {
        if (h % m == 0 && w % m == 0) ms.push_back(m);
    }
    return ms;
}

}  // namespace

TEST_CASE("layout validation") {
    CHECK_THROWS_AS(WindowLayout(6, 6, 4), LayoutError);
    CHECK_THROWS_AS(WindowLayout(0, 4, 2), LayoutError);
    WindowLayout L(6, 4, 2);
    CHECK(L.Hg == 3);
    CHECK(L.Wg == 2);
}

TEST_CASE("single window and M=1 are identity permutations") {
    for (auto [h, w, m] : {std::tuple<int, int, int>{4, 4, 4}, {5, 5, 5}, {6, 4, 1}, {8, 8, 1}}) {
        WindowLayout L(h, w, m);
        for (std::int64_t i = 0; i < L.H; ++i) {
            for (std::int64_t j = 0; j < L.W; ++j) {
                CHECK(interleave_pos({i, j}, L) == GridPos{i, j});
                CHECK(restore_pos({i, j}, L) == GridPos{i, j});
            }
        }
    }
}

TEST_CASE("4x4 M=2 forward map enumerated") {
    WindowLayout L(4, 4, 2);
    // row (and column) map is [0,1,2,3] -> [0,2,1,3]
    const std::int64_t row_map[4] = {0, 2, 1, 3};
    for (std::int64_t i = 0; i < 4; ++i) {
        for (std::int64_t j = 0; j < 4; ++j) {
            const GridPos q = interleave_pos({i, j}, L);
            CHECK(q.i == row_map[i]);
            CHECK(q.j == row_map[j]);
        }
    }
    CHECK(interleave_pos({1, 2}, L) == GridPos{2, 1});
}

TEST_CASE("inverse map enumerated: H=4, M=2 sends i'=2 to i=1") {
    WindowLayout L(4, 4, 2);
    CHECK(restore_pos({2, 0}, L).i == 1);
    for (std::int64_t i = 0; i < 4; ++i) {
        for (std::int64_t j = 0; j < 4; ++j) {
            CHECK(restore_pos(interleave_pos({i, j}, L), L) == GridPos{i, j});
        }
    }
}

TEST_CASE("bijectivity: image of the forward map covers the grid, no collisions") {
    for (std::int64_t h = 1; h <= 12; ++h) {
        for (std::int64_t w = 1; w <= 12; ++w) {
            for (std::int64_t m : divisors_of_both(h, w)) {
                WindowLayout L(h, w, m);
                std::set<std::pair<std::int64_t, std::int64_t>> image;
                for (std::int64_t i = 0; i < h; ++i) {
                    for (std::int64_t j = 0; j < w; ++j) {
                        const GridPos q = interleave_pos({i, j}, L);
                        CHECK(q.i >= 0);
                        CHECK(q.i < h);
                        CHECK(q.j >= 0);
                        CHECK(q.j < w);
                        image.insert({q.i, q.j});
                    }
                }
                CHECK(static_cast<std::int64_t>(image.size()) == h * w);
            }
        }
    }
}

TEST_CASE("restore(rearrange(x)) is the identity bit-exactly, both directions") {
    Rng rng(2024);
    for (std::int64_t h = 1; h <= 12; ++h) {
        for (std::int64_t w = 1; w <= 12; ++w) {
            for (std::int64_t m : divisors_of_both(h, w)) {
                WindowLayout L(h, w, m);
                Tensor x = Tensor::randn({2, h, w, 3}, rng);
                Tensor rt = restore(rearrange(x, L), L);
                CHECK(max_abs_diff(rt, x) == 0.0);
                Tensor tr = rearrange(restore(x, L), L);
                CHECK(max_abs_diff(tr, x) == 0.0);
            }
        }
    }
}

TEST_CASE("reshape route equals the closed-form index route bit-exactly") {
    Rng rng(7);
    for (auto [h, w, m] : {std::tuple<int, int, int>{4, 4, 2}, {6, 4, 2}, {9, 6, 3}, {12, 12, 4}}) {
        WindowLayout L(h, w, m);
        Tensor x = Tensor::randn({2, h, w, 5}, rng);
        CHECK(max_abs_diff(rearrange(x, L, PermPath::reshape),
                           rearrange(x, L, PermPath::index_map)) == 0.0);
        CHECK(max_abs_diff(restore(x, L, PermPath::reshape),
                           restore(x, L, PermPath::index_map)) == 0.0);
    }
}

TEST_CASE("window partition: single window holds all tokens in row-major order") {
    WindowLayout L(3, 3, 3);
    Tensor x = tagged_grid(3, 3);
    Tensor w = window_partition(rearrange(x, L), L);
    CHECK(w.shape() == Shape{1, 9, 1});
    for (int t = 0; t < 9; ++t) CHECK(w.data()[t] == static_cast<double>(t));
}

TEST_CASE("window partition: 4x4 M=2 gives 4 windows; window (0,0) holds {0,2}x{0,2}") {
    WindowLayout L(4, 4, 2);
    Tensor x = tagged_grid(4, 4);
    Tensor w = window_partition(rearrange(x, L), L);
    CHECK(w.dim(0) == L.windows());
    CHECK(w.dim(0) == 4);
    std::set<std::int64_t> first_window;
    for (int t = 0; t < 4; ++t) first_window.insert(static_cast<std::int64_t>(w.data()[t]));
    // original positions (i,j) with i,j in {0,2}: flattened 0, 2, 8, 10
    CHECK(first_window == std::set<std::int64_t>{0, 2, 8, 10});
}

TEST_CASE("window merge inverts partition bit-exactly, including non-square grids") {
    Rng rng(77);
    for (auto [h, w, m] : {std::tuple<int, int, int>{6, 4, 2}, {4, 4, 2}, {4, 4, 4}, {8, 6, 2}}) {
        WindowLayout L(h, w, m);
        Tensor x = Tensor::randn({3, h, w, 2}, rng);
        Tensor merged = window_merge(window_partition(x, L), L, 3);
        CHECK(max_abs_diff(merged, x) == 0.0);
    }
    WindowLayout L(4, 4, 2);
    Tensor bad({3, 4, 2});  // row count inconsistent with any batch
    CHECK_THROWS_AS(window_merge(bad, L, 1), LayoutError);
}

TEST_CASE("coset predicate: reflexive and hand-checked cases") {
    WindowLayout L(8, 8, 2);  // Hg = Wg = 4
    CHECK(same_window({3, 5}, {3, 5}, L));
    CHECK(same_window({0, 0}, {4, 4}, L));
    CHECK_FALSE(same_window({0, 0}, {1, 0}, L));
    CHECK_THROWS_AS(same_window({0, 0}, {8, 0}, L), BoundsError);
}

TEST_CASE("coset law matches window membership computed by permutation composition") {
    // run rearrange + tiling on a tagged grid; two tokens share a window
    // exactly when the modular predicate says so
    for (std::int64_t h = 2; h <= 8; h += 2) {
        for (std::int64_t w = 2; w <= 8; w += 2) {
            for (std::int64_t m : divisors_of_both(h, w)) {
                WindowLayout L(h, w, m);
                Tensor tags = window_partition(rearrange(tagged_grid(h, w), L), L);
                std::map<std::int64_t, std::int64_t> window_of;  // position -> window row
                for (std::int64_t wi = 0; wi < tags.dim(0); ++wi) {
                    for (std::int64_t t = 0; t < tags.dim(1); ++t) {
                        window_of[static_cast<std::int64_t>(tags.at({wi, t, 0}))] = wi;
                    }
                }
                for (std::int64_t p = 0; p < h * w; ++p) {
                    for (std::int64_t q = 0; q < h * w; ++q) {
                        const GridPos a{p / w, p % w}, b{q / w, q % w};
                        CHECK(same_window(a, b, L) == (window_of[p] == window_of[q]));
                    }
                }
            }
        }
    }
}

TEST_CASE("permutations commute with per-channel maps") {
    Rng rng(5);
    WindowLayout L(6, 6, 3);
    Tensor x = Tensor::randn({1, 6, 6, 4}, rng);
    Tensor gained = scale(rearrange(x, L), 2.5);
    Tensor other = rearrange(scale(x, 2.5), L);
    CHECK(max_abs_diff(gained, other) == 0.0);
}

TEST_CASE("gradient of rearrange is the inverse permutation of the upstream gradient") {
    Rng rng(9);
    WindowLayout L(4, 4, 2);
    Tensor x = Tensor::randn({1, 4, 4, 1}, rng);
    Tensor upstream = Tensor::randn({1, 4, 4, 1}, rng);
    Tape tape;
    Tensor xt = tape.watch(x);
    Tensor y = rearrange(xt, L);
    tape.backward(sum_all(mul(y, upstream.detached())));
    Tensor g = tape.grad(xt);
    // d/dx of <rearrange(x), u> is restore(u)
    Tensor expect = restore(upstream, L);
    CHECK(max_abs_diff(g, expect) == 0.0);
}

TEST_CASE("rearrange rejects mismatched feature maps") {
    WindowLayout L(4, 4, 2);
    Tensor x({1, 6, 4, 1});
    CHECK_THROWS_AS(rearrange(x, L), LayoutError);
}
