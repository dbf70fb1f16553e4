#include "iwin/interleave.hpp"

namespace iwin {

WindowLayout::WindowLayout(std::int64_t h, std::int64_t w, std::int64_t m) : H(h), W(w), M(m) {
    if (h < 1 || w < 1 || m < 1) {
        throw LayoutError("window layout extents must be >= 1");
    }
    if (h % m != 0 || w % m != 0) {
        throw LayoutError("window size " + std::to_string(m) + " does not divide grid " +
                          std::to_string(h) + "x" + std::to_string(w));
    }
    Hg = h / m;
    Wg = w / m;
}

GridPos interleave_pos(GridPos p, const WindowLayout& L) {
    return {(p.i % L.Hg) * L.M + p.i / L.Hg, (p.j % L.Wg) * L.M + p.j / L.Wg};
}

GridPos restore_pos(GridPos p, const WindowLayout& L) {
    return {(p.i % L.M) * L.Hg + p.i / L.M, (p.j % L.M) * L.Wg + p.j / L.M};
}

IndexMap build_index_map(const WindowLayout& L) {
    IndexMap map;
    map.forward.resize(static_cast<std::size_t>(L.positions()));
    map.inverse.resize(static_cast<std::size_t>(L.positions()));
    for (std::int64_t i = 0; i < L.H; ++i) {
        for (std::int64_t j = 0; j < L.W; ++j) {
            const GridPos q = interleave_pos({i, j}, L);
            map.forward[static_cast<std::size_t>(i * L.W + j)] = q.i * L.W + q.j;
            map.inverse[static_cast<std::size_t>(q.i * L.W + q.j)] = i * L.W + j;
        }
    }
    return map;
}

namespace {

void check_spatial(const Tensor& x, const WindowLayout& L, const char* op) {
    if (x.ndim() != 4) {
        throw ShapeError(std::string(op) + " expects [B,H,W,C], got " + shape_str(x.shape()));
    }
    if (x.dim(1) != L.H || x.dim(2) != L.W) {
        throw LayoutError(std::string(op) + ": feature map " + shape_str(x.shape()) +
                          " does not match layout " + std::to_string(L.H) + "x" + std::to_string(L.W));
    }
}

// out[:, p, :] = in[:, gather[p], :] over flattened positions
Tensor apply_position_gather(const Tensor& x, const std::vector<std::int64_t>& gather,
                             const WindowLayout& L) {
    Tensor flat = reshape(x, {x.dim(0), L.positions(), x.dim(3)});
    Tensor moved = permute_dim1(flat, gather);
    return reshape(moved, {x.dim(0), L.H, L.W, x.dim(3)});
}

}  // namespace

Tensor rearrange(const Tensor& x, const WindowLayout& L, PermPath path) {
    check_spatial(x, L, "rearrange");
    const std::int64_t B = x.dim(0), C = x.dim(3);
    if (path == PermPath::index_map) {
        // output position q receives token inverse[q]
        return apply_position_gather(x, build_index_map(L).inverse, L);
    }
    // rows: [B,M,Hg,W,C] -> [B,Hg,M,W,C]
    Tensor t = reshape(x, {B, L.M, L.Hg, L.W, C});
    t = permute(t, {0, 2, 1, 3, 4});
    t = reshape(t, {B, L.H, L.W, C});
    // columns: [B,H,M,Wg,C] -> [B,H,Wg,M,C]
    t = reshape(t, {B, L.H, L.M, L.Wg, C});
    t = permute(t, {0, 1, 3, 2, 4});
    return reshape(t, {B, L.H, L.W, C});
}

Tensor restore(const Tensor& x, const WindowLayout& L, PermPath path) {
    check_spatial(x, L, "restore");
    const std::int64_t B = x.dim(0), C = x.dim(3);
    if (path == PermPath::index_map) {
        // output position p receives token forward[p]
        return apply_position_gather(x, build_index_map(L).forward, L);
    }
    // columns: [B,H,Wg,M,C] -> [B,H,M,Wg,C]
    Tensor t = reshape(x, {B, L.H, L.Wg, L.M, C});
    t = permute(t, {0, 1, 3, 2, 4});
    t = reshape(t, {B, L.H, L.W, C});
    // rows: [B,Hg,M,W,C] -> [B,M,Hg,W,C]
    t = reshape(t, {B, L.Hg, L.M, L.W, C});
    t = permute(t, {0, 2, 1, 3, 4});
    return reshape(t, {B, L.H, L.W, C});
}

Tensor window_partition(const Tensor& x, const WindowLayout& L) {
    check_spatial(x, L, "window_partition");
    const std::int64_t B = x.dim(0), C = x.dim(3);
    Tensor t = reshape(x, {B, L.Hg, L.M, L.Wg, L.M, C});
    t = permute(t, {0, 1, 3, 2, 4, 5});
    return reshape(t, {B * L.Hg * L.Wg, L.M * L.M, C});
}

Tensor window_merge(const Tensor& w, const WindowLayout& L, std::int64_t batch) {
    if (w.ndim() != 3 || w.dim(1) != L.M * L.M) {
        throw LayoutError("window_merge: rows " + shape_str(w.shape()) +
                          " inconsistent with window size " + std::to_string(L.M));
    }
    if (w.dim(0) != batch * L.windows()) {
        throw LayoutError("window_merge: window count " + std::to_string(w.dim(0)) +
                          " != batch " + std::to_string(batch) + " x " +
                          std::to_string(L.windows()) + " windows");
    }
    const std::int64_t C = w.dim(2);
    Tensor t = reshape(w, {batch, L.Hg, L.Wg, L.M, L.M, C});
    t = permute(t, {0, 1, 3, 2, 4, 5});
    return reshape(t, {batch, L.H, L.W, C});
}

bool same_window(GridPos a, GridPos b, const WindowLayout& L) {
    for (const GridPos& p : {a, b}) {
        if (p.i < 0 || p.i >= L.H || p.j < 0 || p.j >= L.W) {
            throw BoundsError("position (" + std::to_string(p.i) + "," + std::to_string(p.j) +
                              ") outside " + std::to_string(L.H) + "x" + std::to_string(L.W) + " grid");
        }
    }
    return a.i % L.Hg == b.i % L.Hg && a.j % L.Wg == b.j % L.Wg;
}

}  // namespace iwin
