#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Dense vector kernels behind the metric and solver inner loops.
//
// Every kernel exists as a scalar reference implementation and, on x86-64,
// an AVX2/FMA variant. The dispatched entry points pick a backend once at
// startup: AVX2 when the CPU supports it, scalar otherwise. LABQ_KERNELS
// (=scalar|avx2|auto) overrides the choice, which the equivalence tests use
// to pin each path. SIMD accumulation order differs from scalar, so the two
// backends agree to rounding, not bit-for-bit.

namespace labq::kernels {

enum class Backend { scalar, avx2 };

namespace scalar {
double sum(const double* x, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double sum_sq_diff(const double* x, const double* y, std::size_t n);
double sum_abs_diff(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
}  // namespace scalar

#ifdef LABQ_HAVE_AVX2
namespace avx2 {
bool supported();  // runtime CPU check
double sum(const double* x, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double sum_sq_diff(const double* x, const double* y, std::size_t n);
double sum_abs_diff(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
}  // namespace avx2
#endif

Backend active_backend();
std::string_view backend_name();
// Throws labq::Error if the backend is not compiled in or not supported
// by this CPU.
void set_backend(Backend b);

double sum(const double* x, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double sum_sq_diff(const double* x, const double* y, std::size_t n);
double sum_abs_diff(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);

inline double sum(std::span<const double> x) { return sum(x.data(), x.size()); }
inline double dot(std::span<const double> x, std::span<const double> y) {
    return dot(x.data(), y.data(), x.size());
}
inline double sum_sq_diff(std::span<const double> x, std::span<const double> y) {
    return sum_sq_diff(x.data(), y.data(), x.size());
}
inline double sum_abs_diff(std::span<const double> x, std::span<const double> y) {
    return sum_abs_diff(x.data(), y.data(), x.size());
}
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
    axpy(a, x.data(), y.data(), x.size());
}

}  // namespace labq::kernels
