#pragma once

#include <cstddef>

namespace hutd::parallel {

// Worker count used by the OpenMP kernels. Initialised from HUTD_THREADS
// (falls back to the OpenMP default); always 1 in builds without OpenMP.
int thread_count();
void set_thread_count(int n);

bool openmp_enabled();

// Below this many output rows the dispatchers stay serial.
inline constexpr std::size_t kMinParallelRows = 64;

} // namespace hutd::parallel
