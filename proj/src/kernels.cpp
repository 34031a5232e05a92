#include "hutd/kernels.hpp"

#include "hutd/parallel.hpp"

#include <cmath>
#include <cstdint>
#include <limits>

namespace hutd::kernels {
namespace {

// Row bodies shared by both variants; the loop order inside a row fixes the
// floating-point summation order.

inline void gemm_nn_row(const double* a, const double* b, double* c, std::size_t i,
                        std::size_t k, std::size_t m)
{
    double* crow = c + i * m;
    for (std::size_t j = 0; j < m; ++j) crow[j] = 0.0;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
        const double av = arow[p];
        const double* brow = b + p * m;
        for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
}

inline void gemm_nt_row(const double* a, const double* b, double* c, std::size_t i,
                        std::size_t k, std::size_t m)
{
    const double* arow = a + i * k;
    double* crow = c + i * m;
    for (std::size_t j = 0; j < m; ++j) {
        const double* brow = b + j * k;
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
        crow[j] = s;
    }
}

// Row p of A^T B: sum over i of A[i,p] * B[i,:]
inline void gemm_tn_row(const double* a, const double* b, double* c, std::size_t p,
                        std::size_t n, std::size_t k, std::size_t m)
{
    double* crow = c + p * m;
    for (std::size_t j = 0; j < m; ++j) crow[j] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double av = a[i * k + p];
        if (av == 0.0) continue;
        const double* brow = b + i * m;
        for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
}

inline void sq_distance_row(const double* x, const double* p, double* out, std::size_t i,
                            std::size_t c, std::size_t d)
{
    const double* xr = x + i * d;
    for (std::size_t j = 0; j < c; ++j) {
        const double* pr = p + j * d;
        double s = 0.0;
        for (std::size_t q = 0; q < d; ++q) {
            const double diff = xr[q] - pr[q];
            s += diff * diff;
        }
        out[i * c + j] = s;
    }
}

inline double dot(const double* a, const double* b, std::size_t d)
{
    double s = 0.0;
    for (std::size_t q = 0; q < d; ++q) s += a[q] * b[q];
    return s;
}

inline double cosine_with(const double* xr, const double* v, double vnorm, std::size_t d)
{
    const double xn = std::sqrt(dot(xr, xr, d));
    if (xn == 0.0 || vnorm == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return dot(xr, v, d) / (xn * vnorm);
}

// Row r of X^T X / n, accumulated over samples in index order.
inline void gram_row(const double* x, double* out, std::size_t r, std::size_t n, std::size_t d)
{
    double* orow = out + r * d;
    for (std::size_t j = 0; j < d; ++j) orow[j] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* xr = x + i * d;
        const double xv = xr[r];
        for (std::size_t j = 0; j < d; ++j) orow[j] += xv * xr[j];
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j) orow[j] *= inv;
}

bool use_parallel(std::size_t rows)
{
    return parallel::openmp_enabled() && parallel::thread_count() > 1 &&
           rows >= parallel::kMinParallelRows;
}

} // namespace

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m)
{
    for (std::size_t i = 0; i < n; ++i) gemm_nn_row(a.data(), b.data(), c.data(), i, k, m);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m)
{
    for (std::size_t i = 0; i < n; ++i) gemm_nt_row(a.data(), b.data(), c.data(), i, k, m);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m)
{
    for (std::size_t p = 0; p < k; ++p) gemm_tn_row(a.data(), b.data(), c.data(), p, n, k, m);
}

void sq_distances(std::span<const double> x, std::span<const double> p, std::span<double> out,
                  std::size_t n, std::size_t c, std::size_t d)
{
    for (std::size_t i = 0; i < n; ++i) sq_distance_row(x.data(), p.data(), out.data(), i, c, d);
}

void row_dot(std::span<const double> x, std::span<const double> v, std::span<double> out,
             std::size_t n, std::size_t d)
{
    for (std::size_t i = 0; i < n; ++i) out[i] = dot(x.data() + i * d, v.data(), d);
}

void row_cosine(std::span<const double> x, std::span<const double> v, std::span<double> out,
                std::size_t n, std::size_t d)
{
    const double vnorm = std::sqrt(dot(v.data(), v.data(), d));
    for (std::size_t i = 0; i < n; ++i) out[i] = cosine_with(x.data() + i * d, v.data(), vnorm, d);
}

void gram(std::span<const double> x, std::span<double> out, std::size_t n, std::size_t d)
{
    for (std::size_t r = 0; r < d; ++r) gram_row(x.data(), out.data(), r, n, d);
}

} // namespace serial

namespace omp {

// Signed loop counters keep OpenMP 2.0 style compilers happy.

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m)
{
    const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) num_threads(parallel::thread_count())
    for (std::int64_t i = 0; i < rows; ++i)
        gemm_nn_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), k, m);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m)
{
    const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) num_threads(parallel::thread_count())
    for (std::int64_t i = 0; i < rows; ++i)
        gemm_nt_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), k, m);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m)
{
    const auto rows = static_cast<std::int64_t>(k);
#pragma omp parallel for schedule(static) num_threads(parallel::thread_count())
    for (std::int64_t p = 0; p < rows; ++p)
        gemm_tn_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(p), n, k, m);
}

void sq_distances(std::span<const double> x, std::span<const double> p, std::span<double> out,
                  std::size_t n, std::size_t c, std::size_t d)
{
    const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) num_threads(parallel::thread_count())
    for (std::int64_t i = 0; i < rows; ++i)
        sq_distance_row(x.data(), p.data(), out.data(), static_cast<std::size_t>(i), c, d);
}

void row_dot(std::span<const double> x, std::span<const double> v, std::span<double> out,
             std::size_t n, std::size_t d)
{
    const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) num_threads(parallel::thread_count())
    for (std::int64_t i = 0; i < rows; ++i) {
        const auto r = static_cast<std::size_t>(i);
        out[r] = dot(x.data() + r * d, v.data(), d);
    }
}

void row_cosine(std::span<const double> x, std::span<const double> v, std::span<double> out,
                std::size_t n, std::size_t d)
{
    const double vnorm = std::sqrt(dot(v.data(), v.data(), d));
    const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) num_threads(parallel::thread_count())
    for (std::int64_t i = 0; i < rows; ++i) {
        const auto r = static_cast<std::size_t>(i);
        out[r] = cosine_with(x.data() + r * d, v.data(), vnorm, d);
    }
}

void gram(std::span<const double> x, std::span<double> out, std::size_t n, std::size_t d)
{
    const auto rows = static_cast<std::int64_t>(d);
#pragma omp parallel for schedule(static) num_threads(parallel::thread_count())
    for (std::int64_t r = 0; r < rows; ++r)
        gram_row(x.data(), out.data(), static_cast<std::size_t>(r), n, d);
}

} // namespace omp

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m)
{
    use_parallel(n) ? omp::gemm_nn(a, b, c, n, k, m) : serial::gemm_nn(a, b, c, n, k, m);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m)
{
    use_parallel(n) ? omp::gemm_nt(a, b, c, n, k, m) : serial::gemm_nt(a, b, c, n, k, m);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m)
{
    use_parallel(k) ? omp::gemm_tn(a, b, c, n, k, m) : serial::gemm_tn(a, b, c, n, k, m);
}

void sq_distances(std::span<const double> x, std::span<const double> p, std::span<double> out,
                  std::size_t n, std::size_t c, std::size_t d)
{
    use_parallel(n) ? omp::sq_distances(x, p, out, n, c, d) : serial::sq_distances(x, p, out, n, c, d);
}

void row_dot(std::span<const double> x, std::span<const double> v, std::span<double> out,
             std::size_t n, std::size_t d)
{
    use_parallel(n) ? omp::row_dot(x, v, out, n, d) : serial::row_dot(x, v, out, n, d);
}

void row_cosine(std::span<const double> x, std::span<const double> v, std::span<double> out,
                std::size_t n, std::size_t d)
{
    use_parallel(n) ? omp::row_cosine(x, v, out, n, d) : serial::row_cosine(x, v, out, n, d);
}

void gram(std::span<const double> x, std::span<double> out, std::size_t n, std::size_t d)
{
    use_parallel(d) ? omp::gram(x, out, n, d) : serial::gram(x, out, n, d);
}

} // namespace hutd::kernels
