#include "ner/kernels.hpp"

#include <cstdlib>
#include <stdexcept>

namespace ner::kernels {

namespace detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double* x, double alpha, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

double sum_scalar(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double max_value_scalar(const double* x, std::size_t n) {
    double m = x[0];
    for (std::size_t i = 1; i < n; ++i)
        if (x[i] > m) m = x[i];
    return m;
}

}  // namespace detail

namespace {

struct Dispatch {
    Backend backend;
    double (*dot)(const double*, const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*scale)(double*, double, std::size_t);
    double (*sum)(const double*, std::size_t);
    double (*max_value)(const double*, std::size_t);
};

constexpr Dispatch kScalar{Backend::scalar,
                           detail::dot_scalar,
                           detail::axpy_scalar,
                           detail::scale_scalar,
                           detail::sum_scalar,
                           detail::max_value_scalar};

#if defined(NER_HAVE_AVX2)
constexpr Dispatch kAvx2{Backend::avx2,
                         detail::dot_avx2,
                         detail::axpy_avx2,
                         detail::scale_avx2,
                         detail::sum_avx2,
                         detail::max_value_avx2};
#endif

bool avx2_usable() {
#if defined(NER_HAVE_AVX2)
    return __builtin_cpu_supports("avx2") != 0;
#else
    return false;
#endif
}

const Dispatch* table_for(Backend b) {
    switch (b) {
        case Backend::scalar:
            return &kScalar;
        case Backend::avx2:
#if defined(NER_HAVE_AVX2)
            if (avx2_usable()) return &kAvx2;
#endif
            return nullptr;
    }
    return nullptr;
}

const Dispatch* initial_table() {
    if (const char* env = std::getenv("NER_KERNEL_BACKEND")) {
        std::string s(env);
        if (s == "scalar") return &kScalar;
        if (s == "avx2") {
            if (const Dispatch* t = table_for(Backend::avx2)) return t;
            throw std::invalid_argument("NER_KERNEL_BACKEND=avx2 requested but AVX2 is unavailable");
        }
        throw std::invalid_argument("NER_KERNEL_BACKEND: unknown backend '" + s + "'");
    }
    if (const Dispatch* t = table_for(Backend::avx2)) return t;
    return &kScalar;
}

const Dispatch*& current() {
    static const Dispatch* table = initial_table();
    return table;
}

}  // namespace

Backend active() { return current()->backend; }

bool supported(Backend b) { return table_for(b) != nullptr; }

void force(Backend b) {
    const Dispatch* t = table_for(b);
    if (!t) throw std::invalid_argument(std::string("kernel backend unavailable: ") + backend_name(b));
    current() = t;
}

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
    }
    return "?";
}

double dot(const double* a, const double* b, std::size_t n) { return current()->dot(a, b, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { current()->axpy(alpha, x, y, n); }
void scale(double* x, double alpha, std::size_t n) { current()->scale(x, alpha, n); }
double sum(const double* x, std::size_t n) { return current()->sum(x, n); }
double max_value(const double* x, std::size_t n) { return current()->max_value(x, n); }

}  // namespace ner::kernels
