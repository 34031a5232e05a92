#include "hutd/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#ifdef HUTD_HAVE_OPENMP
#include <omp.h>
#endif

namespace hutd::parallel {
namespace {

int initial_threads()
{
#ifdef HUTD_HAVE_OPENMP
    int n = omp_get_max_threads();
    if (const char* env = std::getenv("HUTD_THREADS")) {
        try {
            const int cap = std::stoi(env);
            if (cap >= 1 && cap < n) n = cap;
        } catch (...) {
            // unparsable value: keep the OpenMP default
        }
    }
    return n < 1 ? 1 : n;
#else
    return 1;
#endif
}

std::atomic<int>& threads()
{
    static std::atomic<int> value{initial_threads()};
    return value;
}

} // namespace

int thread_count() { return threads().load(std::memory_order_relaxed); }

void set_thread_count(int n)
{
#ifdef HUTD_HAVE_OPENMP
    threads().store(n < 1 ? 1 : n, std::memory_order_relaxed);
#else
    (void)n;
#endif
}

bool openmp_enabled()
{
#ifdef HUTD_HAVE_OPENMP
    return true;
#else
    return false;
#endif
}

} // namespace hutd::parallel
