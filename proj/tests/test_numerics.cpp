#include <cmath>
#include <vector>

#include <doctest.h>

#include "ner/errors.hpp"
#include "ner/numerics.hpp"
#include "ner/rng.hpp"

using namespace ner;

TEST_SUITE("numerics") {

TEST_CASE("log_sum_exp against direct evaluation") {
    std::vector<double> v{0.3, -1.2, 2.0};
    double direct = std::log(std::exp(0.3) + std::exp(-1.2) + std::exp(2.0));
    CHECK(log_sum_exp(v) == doctest::Approx(direct).epsilon(1e-14));

    std::vector<double> one{4.2};
    CHECK(log_sum_exp(one) == doctest::Approx(4.2).epsilon(1e-15));
}

TEST_CASE("log_sum_exp is stable at large magnitudes") {
    std::vector<double> big{1000.0, 1000.0};
    CHECK(log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-14));
    std::vector<double> mixed{-1000.0, 0.0};
    CHECK(log_sum_exp(mixed) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(std::isfinite(log_sum_exp(mixed)));
}

TEST_CASE("log_sum_exp shift invariance") {
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> v(1 + rng.uniform_int(8));
        for (double& x : v) x = 3.0 * rng.normal();
        double base = log_sum_exp(v);
        double c = rng.normal();
        std::vector<double> shifted = v;
        for (double& x : shifted) x += c;
        CHECK(log_sum_exp(shifted) == doctest::Approx(base + c).epsilon(1e-12));
    }
}

TEST_CASE("softmax matches direct evaluation and sums to one") {
    std::vector<double> v{1.0, 2.0, 3.0};
    std::vector<double> p = softmax(v);
    double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    CHECK(p[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-14));
    CHECK(p[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));
    CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("softmax stays finite and ordered at extremes") {
    std::vector<double> v{-800.0, 0.0, 800.0};
    std::vector<double> p = softmax(v);
    for (double x : p) {
        CHECK(std::isfinite(x));
        CHECK(x >= 0.0);
    }
    CHECK(p[2] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p[0] <= p[1]);
    CHECK(p[1] <= p[2]);
}

TEST_CASE("softmax_inplace equals softmax") {
    Rng rng(9);
    for (int rep = 0; rep < 30; ++rep) {
        std::vector<double> v(1 + rng.uniform_int(10));
        for (double& x : v) x = 5.0 * rng.normal();
        std::vector<double> expect = softmax(v);
        std::vector<double> got = v;
        softmax_inplace(got.data(), got.size());
        REQUIRE(got.size() == expect.size());
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-14));
    }
}

TEST_CASE("finite_diff_check accepts a correct gradient") {
    auto f = [](const std::vector<double>& x) {
        double s = 0.0;
        for (double v : x) s += v * v;
        return s;
    };
    std::vector<double> point{0.5, -1.5, 2.0};
    std::vector<double> grad{1.0, -3.0, 4.0};
    CHECK(finite_diff_check(f, grad, point, 1e-5) < 1e-8);
}

TEST_CASE("finite_diff_check flags a wrong gradient") {
    auto f = [](const std::vector<double>& x) { return x[0] * x[0]; };
    std::vector<double> point{1.0};
    std::vector<double> wrong{3.0};
    CHECK(finite_diff_check(f, wrong, point, 1e-5) > 0.1);
}

TEST_CASE("finite_diff_check rejects non-finite evaluation") {
    auto f = [](const std::vector<double>& x) { return std::log(x[0]); };
    std::vector<double> point{0.0};  // log(-eps) is nan
    std::vector<double> grad{0.0};
    CHECK_THROWS_AS((void)finite_diff_check(f, grad, point, 1e-5), NumericError);
}

}  // TEST_SUITE
