#pragma once

#include <cstddef>
#include <string>

namespace ner::kernels {

// Dense f64 inner loops. Every operation has a scalar reference
// implementation and, on x86-64 with AVX2, a vectorized variant. The
// backend is picked once at startup (overridable with the
// NER_KERNEL_BACKEND environment variable or force()); both variants
// agree to rounding-order differences and are equivalence-tested.

enum class Backend { scalar, avx2 };

Backend active();
bool supported(Backend b);
void force(Backend b);  // throws std::invalid_argument if unsupported
const char* backend_name(Backend b);

double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);  // y += alpha * x
void scale(double* x, double alpha, std::size_t n);
double sum(const double* x, std::size_t n);
double max_value(const double* x, std::size_t n);  // n >= 1

namespace detail {
double dot_scalar(const double* a, const double* b, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
void scale_scalar(double* x, double alpha, std::size_t n);
double sum_scalar(const double* x, std::size_t n);
double max_value_scalar(const double* x, std::size_t n);

#if defined(NER_HAVE_AVX2)
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
void scale_avx2(double* x, double alpha, std::size_t n);
double sum_avx2(const double* x, std::size_t n);
double max_value_avx2(const double* x, std::size_t n);
#endif
}  // namespace detail

}  // namespace ner::kernels
