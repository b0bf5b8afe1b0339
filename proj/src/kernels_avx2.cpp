// AVX2 kernel variants. This translation unit is compiled with -mavx2;
// callers reach it only through the dispatch table after a cpuid check.

#include "ner/kernels.hpp"

#if defined(NER_HAVE_AVX2)

#include <immintrin.h>

namespace ner::kernels::detail {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

inline double hmax(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_max_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_max_sd(lo, shuf));
}

}  // namespace

double dot_avx2(const double* a, const double* b, std::size_t n) {
    std::size_t n4 = n & ~std::size_t{3};
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t i = 0; i < n4; i += 4) {
        __m256d va = _mm256_loadu_pd(a + i);
        __m256d vb = _mm256_loadu_pd(b + i);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(va, vb));
    }
    double r = hsum(acc);
    for (std::size_t i = n4; i < n; ++i) r += a[i] * b[i];
    return r;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    std::size_t n4 = n & ~std::size_t{3};
    __m256d va = _mm256_set1_pd(alpha);
    for (std::size_t i = 0; i < n4; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        __m256d vx = _mm256_loadu_pd(x + i);
        _mm256_storeu_pd(y + i, _mm256_add_pd(vy, _mm256_mul_pd(va, vx)));
    }
    for (std::size_t i = n4; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(double* x, double alpha, std::size_t n) {
    std::size_t n4 = n & ~std::size_t{3};
    __m256d va = _mm256_set1_pd(alpha);
    for (std::size_t i = 0; i < n4; i += 4)
        _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (std::size_t i = n4; i < n; ++i) x[i] *= alpha;
}

double sum_avx2(const double* x, std::size_t n) {
    std::size_t n4 = n & ~std::size_t{3};
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t i = 0; i < n4; i += 4)
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double r = hsum(acc);
    for (std::size_t i = n4; i < n; ++i) r += x[i];
    return r;
}

double max_value_avx2(const double* x, std::size_t n) {
    if (n < 4) {
        double m = x[0];
        for (std::size_t i = 1; i < n; ++i)
            if (x[i] > m) m = x[i];
        return m;
    }
    std::size_t n4 = n & ~std::size_t{3};
    __m256d acc = _mm256_loadu_pd(x);
    for (std::size_t i = 4; i < n4; i += 4)
        acc = _mm256_max_pd(acc, _mm256_loadu_pd(x + i));
    double m = hmax(acc);
    for (std::size_t i = n4; i < n; ++i)
        if (x[i] > m) m = x[i];
    return m;
}

}  // namespace ner::kernels::detail

#endif  // NER_HAVE_AVX2
