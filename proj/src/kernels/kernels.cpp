#include "labq/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

#include "labq/errors.hpp"

namespace labq::kernels {

namespace scalar {

double sum(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double dot(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

double sum_sq_diff(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = x[i] - y[i];
        acc += d * d;
    }
    return acc;
}

double sum_abs_diff(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::fabs(x[i] - y[i]);
    return acc;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace scalar

namespace {

struct KernelTable {
    Backend backend;
    double (*sum)(const double*, std::size_t);
    double (*dot)(const double*, const double*, std::size_t);
    double (*sum_sq_diff)(const double*, const double*, std::size_t);
    double (*sum_abs_diff)(const double*, const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
};

constexpr KernelTable kScalarTable{
    Backend::scalar,       scalar::sum,          scalar::dot,
    scalar::sum_sq_diff,   scalar::sum_abs_diff, scalar::axpy,
};

#ifdef LABQ_HAVE_AVX2
constexpr KernelTable kAvx2Table{
    Backend::avx2,       avx2::sum,          avx2::dot,
    avx2::sum_sq_diff,   avx2::sum_abs_diff, avx2::axpy,
};
#endif

bool avx2_usable() {
#ifdef LABQ_HAVE_AVX2
    return avx2::supported();
#else
    return false;
#endif
}

const KernelTable* table_for(Backend b) {
#ifdef LABQ_HAVE_AVX2
    if (b == Backend::avx2) return &kAvx2Table;
#endif
    (void)b;
    return &kScalarTable;
}

const KernelTable* initial_table() {
    if (const char* env = std::getenv("LABQ_KERNELS")) {
        std::string v{env};
        if (v == "scalar") return &kScalarTable;
        if (v == "avx2" && avx2_usable()) return table_for(Backend::avx2);
        // "auto" or anything unusable falls through to detection
    }
    return avx2_usable() ? table_for(Backend::avx2) : &kScalarTable;
}

const KernelTable*& active_table() {
    static const KernelTable* table = initial_table();
    return table;
}

}  // namespace

Backend active_backend() { return active_table()->backend; }

std::string_view backend_name() {
    return active_backend() == Backend::avx2 ? "avx2" : "scalar";
}

void set_backend(Backend b) {
    if (b == Backend::avx2 && !avx2_usable())
        throw Error("avx2 kernels unavailable on this build/CPU");
    active_table() = table_for(b);
}

double sum(const double* x, std::size_t n) { return active_table()->sum(x, n); }
double dot(const double* x, const double* y, std::size_t n) {
    return active_table()->dot(x, y, n);
}
double sum_sq_diff(const double* x, const double* y, std::size_t n) {
    return active_table()->sum_sq_diff(x, y, n);
}
double sum_abs_diff(const double* x, const double* y, std::size_t n) {
    return active_table()->sum_abs_diff(x, y, n);
}
void axpy(double a, const double* x, double* y, std::size_t n) {
    active_table()->axpy(a, x, y, n);
}

}  // namespace labq::kernels
