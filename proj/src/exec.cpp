#include "vista/exec.hpp"

#include <algorithm>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vista::exec {

namespace {

int resolve_threads() {
    int hw = 1;
#ifdef _OPENMP
    hw = omp_get_max_threads();
#endif
    if (const char* env = std::getenv("VISTA_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return std::min(n, hw > 0 ? std::max(hw, n) : n);
    }
    return std::max(hw, 1);
}

int g_threads = resolve_threads();
bool g_parallel = true;

}  // namespace

int threads() { return g_threads; }
void set_threads(int n) { g_threads = n > 0 ? n : 1; }

bool parallel_enabled() { return g_parallel && g_threads > 1; }
void set_parallel(bool on) { g_parallel = on; }

}  // namespace vista::exec
