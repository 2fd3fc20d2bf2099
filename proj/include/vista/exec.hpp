#pragma once

namespace vista::exec {

// Thread cap for the OpenMP kernels. Resolved once from VISTA_THREADS
// (default: all hardware threads); set_threads overrides for tests.
int threads();
void set_threads(int n);

// When false every kernel routes through its serial reference path.
bool parallel_enabled();
void set_parallel(bool on);

}  // namespace vista::exec
