#pragma once

#include <cstdint>
#include <vector>

#include "iwin/tensor.hpp"

namespace iwin {

// Window geometry over an H x W grid with M x M windows. The grid splits
// into Hg = H/M rows and Wg = W/M columns of windows; M must divide both
// extents exactly (no padding policy exists on purpose).
struct WindowLayout {
    std::int64_t H, W, M, Hg, Wg;

    WindowLayout(std::int64_t h, std::int64_t w, std::int64_t m);

    std::int64_t positions() const { return H * W; }
    std::int64_t windows() const { return Hg * Wg; }
    bool single_window() const { return Hg == 1 && Wg == 1; }
};

struct GridPos {
    std::int64_t i = 0, j = 0;
    bool operator==(const GridPos&) const = default;
};

// Closed-form index maps of the interleave permutation.
//
// Forward: a token at (i, j) moves to
//     i' = (i mod Hg) * M + floor(i / Hg)
//     j' = (j mod Wg) * M + floor(j / Wg)
// so that after tiling into M x M windows, window (r, c) holds exactly the
// tokens with (i mod Hg, j mod Wg) == (r, c).
//
// Inverse: i = (i' mod M) * Hg + floor(i' / M), j analogous.
GridPos interleave_pos(GridPos p, const WindowLayout& layout);
GridPos restore_pos(GridPos p, const WindowLayout& layout);

// Flattened position tables (row-major p = i * W + j).
// forward[p] is where p lands; inverse[q] is which token lands on q.
struct IndexMap {
    std::vector<std::int64_t> forward;
    std::vector<std::int64_t> inverse;
};
IndexMap build_index_map(const WindowLayout& layout);

// The permutation can run through two routes: `reshape` is the pair of
// reshape-transpose-reshape passes (one per axis); `index_map` gathers
// through the closed-form tables. They are bit-identical; the tests hold
// the reshape route to the index route as its oracle.
enum class PermPath { reshape, index_map };

// [B,H,W,C] -> [B,H,W,C], channels untouched.
Tensor rearrange(const Tensor& x, const WindowLayout& layout, PermPath path = PermPath::reshape);
Tensor restore(const Tensor& x, const WindowLayout& layout, PermPath path = PermPath::reshape);

// Tiles the (already rearranged) map into rows of window tokens:
// [B,H,W,C] -> [B*Hg*Wg, M*M, C]. Windows are row-major over the window
// grid; tokens are row-major within each tile.
Tensor window_partition(const Tensor& x, const WindowLayout& layout);
Tensor window_merge(const Tensor& w, const WindowLayout& layout, std::int64_t batch);

// Coset predicate: true iff the two tokens share a post-interleave window,
// i.e. their residues mod (Hg, Wg) agree.
bool same_window(GridPos a, GridPos b, const WindowLayout& layout);

}  // namespace iwin
