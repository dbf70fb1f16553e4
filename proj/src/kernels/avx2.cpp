// AVX2 variants of the inner-loop kernels. Each computes every output
// element with the same sequence of IEEE operations as the scalar reference
// (same k-order in matmul, same tap order in dwconv2d, plain mul+add), so the
// two backends agree bit for bit.

#include "iwin/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define IWIN_HAVE_AVX2_BUILD 1
#else
#define IWIN_HAVE_AVX2_BUILD 0
#endif

#if IWIN_HAVE_AVX2_BUILD

#include <immintrin.h>

#include <cstring>

namespace iwin::kernels {
namespace {

void matmul_avx2(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
    std::memset(c, 0, static_cast<std::size_t>(m * n) * sizeof(double));
    for (i64 i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (i64 p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            const __m256d avv = _mm256_set1_pd(av);
            i64 j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d cv = _mm256_loadu_pd(crow + j);
                __m256d bv = _mm256_loadu_pd(brow + j);
                cv = _mm256_add_pd(cv, _mm256_mul_pd(avv, bv));
                _mm256_storeu_pd(crow + j, cv);
            }
            for (; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

// Vectorized over channels; channel extent C is contiguous in NHWC.
void dwconv2d_avx2(const double* x, const double* w, const double* bias, double* y,
                   i64 H, i64 W, i64 C, i64 K) {
    const i64 P = K / 2;
    for (i64 i = 0; i < H; ++i) {
        for (i64 j = 0; j < W; ++j) {
            double* yout = y + (i * W + j) * C;
            std::memcpy(yout, bias, static_cast<std::size_t>(C) * sizeof(double));
            for (i64 u = 0; u < K; ++u) {
                const i64 si = i + u - P;
                if (si < 0 || si >= H) continue;
                for (i64 v = 0; v < K; ++v) {
                    const i64 sj = j + v - P;
                    if (sj < 0 || sj >= W) continue;
                    const double* xin = x + (si * W + sj) * C;
                    const double* wk = w + (u * K + v) * C;
                    i64 c = 0;
                    for (; c + 4 <= C; c += 4) {
                        __m256d acc = _mm256_loadu_pd(yout + c);
                        __m256d xv = _mm256_loadu_pd(xin + c);
                        __m256d wv = _mm256_loadu_pd(wk + c);
                        acc = _mm256_add_pd(acc, _mm256_mul_pd(xv, wv));
                        _mm256_storeu_pd(yout + c, acc);
                    }
                    for (; c < C; ++c) {
                        yout[c] += xin[c] * wk[c];
                    }
                }
            }
        }
    }
}

void add_avx2(const double* a, const double* b, double* out, i64 n) {
    i64 i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx2(const double* a, const double* b, double* out, i64 n) {
    i64 i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_avx2(const double* a, const double* b, double* out, i64 n) {
    i64 i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_avx2(const double* x, double s, double* out, i64 n) {
    const __m256d sv = _mm256_set1_pd(s);
    i64 i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), sv));
    }
    for (; i < n; ++i) out[i] = x[i] * s;
}

void axpy_avx2(double a, const double* x, double* y, i64 n) {
    const __m256d av = _mm256_set1_pd(a);
    i64 i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_add_pd(yv, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

}  // namespace

const Ops* avx2_ops() {
    if (!__builtin_cpu_supports("avx2")) return nullptr;
    static const Ops ops = {
        "avx2",
        matmul_avx2,
        dwconv2d_avx2,
        add_avx2,
        sub_avx2,
        mul_avx2,
        scale_avx2,
        axpy_avx2,
    };
    return &ops;
}

}  // namespace iwin::kernels

#else  // !IWIN_HAVE_AVX2_BUILD

namespace iwin::kernels {
const Ops* avx2_ops() { return nullptr; }
}  // namespace iwin::kernels

#endif
