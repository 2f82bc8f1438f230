#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace magnet {

// Effective worker count: hardware threads capped by the MAGNET_THREADS
// environment variable. All parallel loops use schedule(static) and write
// disjoint slots, so output is identical for any thread count.
inline int max_threads() {
#ifdef _OPENMP
    int n = omp_get_max_threads();
#else
    int n = 1;
#endif
    if (const char* env = std::getenv("MAGNET_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1) n = std::min(n, cap);
    }
    return n;
}

inline int thread_id() {
#ifdef _OPENMP
    return omp_get_thread_num();
#else
    return 0;
#endif
}

// Size for per-thread scratch buffers regardless of whether the cap from
// MAGNET_THREADS has been applied to the OpenMP runtime yet.
inline int thread_slots() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// Install the MAGNET_THREADS cap into the OpenMP runtime (call once at
// startup). Bit-exact reproducibility holds for a fixed thread count.
inline void apply_thread_cap() {
#ifdef _OPENMP
    omp_set_num_threads(max_threads());
#endif
}

}  // namespace magnet
