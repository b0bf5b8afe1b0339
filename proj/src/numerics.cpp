#include "ner/numerics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ner/errors.hpp"
#include "ner/kernels.hpp"

namespace ner {

double log_sum_exp(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("log_sum_exp: empty input");
    double m = kernels::max_value(v.data(), v.size());
    if (!std::isfinite(m)) {
        // All -inf would be a degenerate distribution; propagate the max.
        if (std::isinf(m) && m < 0) return m;
        throw NumericError("log_sum_exp: non-finite input");
    }
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - m);
    return m + std::log(acc);
}

std::vector<double> softmax(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("softmax: empty input");
    for (double x : v)
        if (!std::isfinite(x)) throw NumericError("softmax: non-finite input");
    std::vector<double> out(v.begin(), v.end());
    softmax_inplace(out.data(), out.size());
    return out;
}

void softmax_inplace(double* v, std::size_t n) {
    double m = kernels::max_value(v, n);
    for (std::size_t i = 0; i < n; ++i) v[i] = std::exp(v[i] - m);
    double z = kernels::sum(v, n);
    kernels::scale(v, 1.0 / z, n);
}

double finite_diff_check(const std::function<double(const std::vector<double>&)>& f,
                         std::span<const double> grad,
                         std::span<const double> point,
                         double eps) {
    if (eps <= 0.0) throw std::invalid_argument("finite_diff_check: eps must be > 0");
    if (grad.size() != point.size())
        throw std::invalid_argument("finite_diff_check: grad/point length mismatch");
    std::vector<double> x(point.begin(), point.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double saved = x[i];
        x[i] = saved + eps;
        double fp = f(x);
        x[i] = saved - eps;
        double fm = f(x);
        x[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("finite_diff_check: non-finite evaluation at coordinate " +
                               std::to_string(i));
        double numeric = (fp - fm) / (2.0 * eps);
        double analytic = grad[i];
        double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
        double rel = std::fabs(analytic - numeric) / denom;
        if (rel > worst) worst = rel;
    }
    return worst;
}

}  // namespace ner
