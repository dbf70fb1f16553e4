#pragma once

#include <cstdint>
#include <string>

// Data-parallel inner loops behind the tensor engine. Every kernel exists as
// a scalar reference implementation and, on x86-64, as an AVX2 variant chosen
// at runtime. The AVX2 variants keep the scalar per-element operation order
// (plain mul+add, no FMA contraction), so both backends produce bit-identical
// results and the equivalence tests compare them exactly.

namespace iwin::kernels {

using i64 = std::int64_t;

struct Ops {
    const char* name;

    // c[m,n] = a[m,k] * b[k,n], row-major, c overwritten
    void (*matmul)(const double* a, const double* b, double* c, i64 m, i64 k, i64 n);

    // NHWC single image, per-channel K*K kernel, zero padding K/2:
    // y[i,j,c] = bias[c] + sum_{u,v} x[i+u-P, j+v-P, c] * w[u,v,c]
    void (*dwconv2d)(const double* x, const double* w, const double* bias, double* y,
                     i64 H, i64 W, i64 C, i64 K);

    void (*add)(const double* a, const double* b, double* out, i64 n);
    void (*sub)(const double* a, const double* b, double* out, i64 n);
    void (*mul)(const double* a, const double* b, double* out, i64 n);
    void (*scale)(const double* x, double s, double* out, i64 n);
    void (*axpy)(double a, const double* x, double* y, i64 n);  // y += a*x
};

enum class Backend { scalar, avx2 };

const Ops& scalar_ops();
const Ops* avx2_ops();  // nullptr if unavailable on this CPU/build

// Selected at first use: AVX2 when the CPU supports it, unless overridden by
// set_backend() or the IWIN_BACKEND environment variable (scalar|avx2).
const Ops& active();
Backend active_backend();
void set_backend(Backend b);  // ConfigError if the backend is unavailable
bool avx2_available();
std::string backend_name(Backend b);

}  // namespace iwin::kernels
