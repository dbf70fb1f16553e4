#include "iwin/kernels.hpp"

#include <cstdlib>
#include <cstring>

#include "iwin/error.hpp"

namespace iwin::kernels {
namespace {

Backend initial_backend() {
    Backend b = avx2_ops() ? Backend::avx2 : Backend::scalar;
    if (const char* env = std::getenv("IWIN_BACKEND")) {
        if (std::strcmp(env, "scalar") == 0) {
            b = Backend::scalar;
        } else if (std::strcmp(env, "avx2") == 0) {
            if (!avx2_ops()) throw ConfigError("IWIN_BACKEND=avx2 requested but AVX2 is unavailable");
            b = Backend::avx2;
        } else {
            throw ConfigError(std::string("unknown IWIN_BACKEND value: ") + env);
        }
    }
    return b;
}

// thread-safe first-use initialization
Backend& backend_slot() {
    static Backend b = initial_backend();
    return b;
}

}  // namespace

bool avx2_available() { return avx2_ops() != nullptr; }

const Ops& active() {
    return backend_slot() == Backend::avx2 ? *avx2_ops() : scalar_ops();
}

Backend active_backend() { return backend_slot(); }

void set_backend(Backend b) {
    if (b == Backend::avx2 && !avx2_ops()) {
        throw ConfigError("AVX2 backend requested but unavailable on this CPU");
    }
    backend_slot() = b;
}

std::string backend_name(Backend b) {
    return b == Backend::avx2 ? "avx2" : "scalar";
}

}  // namespace iwin::kernels
