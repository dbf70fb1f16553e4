#include "iwin/kernels.hpp"

#include <cstring>

namespace iwin::kernels {
namespace {

void matmul_scalar(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
    std::memset(c, 0, static_cast<std::size_t>(m * n) * sizeof(double));
    for (i64 i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (i64 p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (i64 j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

void dwconv2d_scalar(const double* x, const double* w, const double* bias, double* y,
                     i64 H, i64 W, i64 C, i64 K) {
    const i64 P = K / 2;
    for (i64 i = 0; i < H; ++i) {
        for (i64 j = 0; j < W; ++j) {
            double* yout = y + (i * W + j) * C;
            for (i64 c = 0; c < C; ++c) yout[c] = bias[c];
            for (i64 u = 0; u < K; ++u) {
                const i64 si = i + u - P;
                if (si < 0 || si >= H) continue;
                for (i64 v = 0; v < K; ++v) {
                    const i64 sj = j + v - P;
                    if (sj < 0 || sj >= W) continue;
                    const double* xin = x + (si * W + sj) * C;
                    const double* wk = w + (u * K + v) * C;
                    for (i64 c = 0; c < C; ++c) {
                        yout[c] += xin[c] * wk[c];
                    }
                }
            }
        }
    }
}

void add_scalar(const double* a, const double* b, double* out, i64 n) {
    for (i64 i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* out, i64 n) {
    for (i64 i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(const double* a, const double* b, double* out, i64 n) {
    for (i64 i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar(const double* x, double s, double* out, i64 n) {
    for (i64 i = 0; i < n; ++i) out[i] = x[i] * s;
}

void axpy_scalar(double a, const double* x, double* y, i64 n) {
    for (i64 i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace

const Ops& scalar_ops() {
    static const Ops ops = {
        "scalar",
        matmul_scalar,
        dwconv2d_scalar,
        add_scalar,
        sub_scalar,
        mul_scalar,
        scale_scalar,
        axpy_scalar,
    };
    return ops;
}

}  // namespace iwin::kernels
