#include <cmath>
#include <cstdlib>
#include <vector>

#include <doctest.h>

#include "ner/kernels.hpp"
#include "ner/rng.hpp"

using namespace ner;
namespace K = ner::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("scalar reference values") {
    std::vector<double> a{1.0, -2.0, 3.0, 0.5};
    std::vector<double> b{4.0, 0.25, -1.0, 8.0};
    CHECK(K::detail::dot_scalar(a.data(), b.data(), 4) == doctest::Approx(1.0 * 4 - 2 * 0.25 - 3 + 0.5 * 8).epsilon(1e-15));
    CHECK(K::detail::sum_scalar(a.data(), 4) == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(K::detail::max_value_scalar(a.data(), 4) == 3.0);

    std::vector<double> y{1.0, 1.0, 1.0, 1.0};
    K::detail::axpy_scalar(2.0, a.data(), y.data(), 4);
    CHECK(y == std::vector<double>{3.0, -3.0, 7.0, 2.0});

    K::detail::scale_scalar(y.data(), 0.5, 4);
    CHECK(y == std::vector<double>{1.5, -1.5, 3.5, 1.0});
}

TEST_CASE("empty and single element") {
    CHECK(K::dot(nullptr, nullptr, 0) == 0.0);
    CHECK(K::sum(nullptr, 0) == 0.0);
    double x = -7.5;
    CHECK(K::max_value(&x, 1) == -7.5);
    K::scale(&x, -2.0, 1);
    CHECK(x == 15.0);
}

TEST_CASE("active backend matches every size against scalar") {
    Rng rng(41);
    for (std::size_t n = 1; n <= 67; ++n) {
        std::vector<double> a = random_vec(n, rng);
        std::vector<double> b = random_vec(n, rng);

        double d0 = K::detail::dot_scalar(a.data(), b.data(), n);
        double d1 = K::dot(a.data(), b.data(), n);
        CHECK(d1 == doctest::Approx(d0).epsilon(1e-12));

        CHECK(K::sum(a.data(), n) ==
              doctest::Approx(K::detail::sum_scalar(a.data(), n)).epsilon(1e-12));
        CHECK(K::max_value(a.data(), n) == K::detail::max_value_scalar(a.data(), n));

        std::vector<double> y0 = b, y1 = b;
        K::detail::axpy_scalar(1.75, a.data(), y0.data(), n);
        K::axpy(1.75, a.data(), y1.data(), n);
        CHECK(y0 == y1);  // elementwise, no reassociation

        std::vector<double> s0 = a, s1 = a;
        K::detail::scale_scalar(s0.data(), -0.3, n);
        K::scale(s1.data(), -0.3, n);
        CHECK(s0 == s1);
    }
}

#if defined(__x86_64__) || defined(_M_X64)
TEST_CASE("forcing backends") {
    K::Backend before = K::active();
    CHECK(K::supported(K::Backend::scalar));
    K::force(K::Backend::scalar);
    CHECK(K::active() == K::Backend::scalar);
    if (K::supported(K::Backend::avx2)) {
        K::force(K::Backend::avx2);
        CHECK(K::active() == K::Backend::avx2);

        Rng rng(17);
        std::vector<double> a = random_vec(1001, rng), b = random_vec(1001, rng);
        double vec = K::dot(a.data(), b.data(), a.size());
        K::force(K::Backend::scalar);
        double sca = K::dot(a.data(), b.data(), a.size());
        CHECK(vec == doctest::Approx(sca).epsilon(1e-12));
    }
    K::force(before);
}
#endif

TEST_CASE("backend names") {
    CHECK(std::string(K::backend_name(K::Backend::scalar)) == "scalar");
    CHECK(std::string(K::backend_name(K::Backend::avx2)) == "avx2");
}

}  // TEST_SUITE
