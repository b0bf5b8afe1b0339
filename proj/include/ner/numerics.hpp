#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace ner {

// log(sum_i exp(v[i])), max-shifted. v must be non-empty.
double log_sum_exp(std::span<const double> v);

// Probability-simplex projection of v via exp and normalization,
// max-shifted. v must be non-empty and finite.
std::vector<double> softmax(std::span<const double> v);

// In-place row variant used by the hot paths.
void softmax_inplace(double* v, std::size_t n);

// Central-difference check of a claimed gradient. Returns the maximum over
// coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|).
// Throws NumericError (naming the coordinate) if f evaluates non-finite.
double finite_diff_check(const std::function<double(const std::vector<double>&)>& f,
                         std::span<const double> grad,
                         std::span<const double> point,
                         double eps);

}  // namespace ner
