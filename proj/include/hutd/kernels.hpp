#pragma once

// Dense double-precision kernels behind the autodiff core, clustering and
// detectors. Each kernel exists twice: serial:: is the reference loop nest,
// omp:: splits the same loop nest over output rows. Every output element is
// produced by exactly one thread with the serial summation order, so both
// variants are bitwise identical for any thread count.

#include <cstddef>
#include <span>

namespace hutd::kernels {

// C(n x m) = A(n x k) * B(k x m)
// C(n x m) = A(n x k) * B(m x k)^T
// C(k x m) = A(n x k)^T * B(n x m)
// out(n x c) = squared euclidean distance of every X row to every P row
// out(n) = X row i . v
// out(n) = cos(X row i, v); rows with zero norm yield NaN
// out(d x d) = X^T X / n

namespace serial {
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m);
void sq_distances(std::span<const double> x, std::span<const double> p, std::span<double> out,
                  std::size_t n, std::size_t c, std::size_t d);
void row_dot(std::span<const double> x, std::span<const double> v, std::span<double> out,
             std::size_t n, std::size_t d);
void row_cosine(std::span<const double> x, std::span<const double> v, std::span<double> out,
                std::size_t n, std::size_t d);
void gram(std::span<const double> x, std::span<double> out, std::size_t n, std::size_t d);
} // namespace serial

namespace omp {
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m);
void sq_distances(std::span<const double> x, std::span<const double> p, std::span<double> out,
                  std::size_t n, std::size_t c, std::size_t d);
void row_dot(std::span<const double> x, std::span<const double> v, std::span<double> out,
             std::size_t n, std::size_t d);
void row_cosine(std::span<const double> x, std::span<const double> v, std::span<double> out,
                std::size_t n, std::size_t d);
void gram(std::span<const double> x, std::span<double> out, std::size_t n, std::size_t d);
} // namespace omp

// Dispatchers: omp:: when more than one worker is configured and the problem
// has enough rows, serial:: otherwise.
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m);
void sq_distances(std::span<const double> x, std::span<const double> p, std::span<double> out,
                  std::size_t n, std::size_t c, std::size_t d);
void row_dot(std::span<const double> x, std::span<const double> v, std::span<double> out,
             std::size_t n, std::size_t d);
void row_cosine(std::span<const double> x, std::span<const double> v, std::span<double> out,
                std::size_t n, std::size_t d);
void gram(std::span<const double> x, std::span<double> out, std::size_t n, std::size_t d);

} // namespace hutd::kernels
