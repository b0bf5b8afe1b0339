#include "ner/matrix.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ner/errors.hpp"
#include "ner/kernels.hpp"

namespace ner {

namespace {

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void check_finite(const Matrix& m, const char* op) {
    if (!m.all_finite())
        throw NumericError(std::string(op) + ": non-finite result (" + shape_str(m) + ")");
}

}  // namespace

bool Matrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Matrix::add_scaled(const Matrix& o, double alpha) {
    if (!same_shape(o))
        throw std::invalid_argument("add_scaled: shape mismatch " + shape_str(*this) + " vs " + shape_str(o));
    kernels::axpy(alpha, o.data(), data(), size());
}

void Matrix::scale_inplace(double alpha) { kernels::scale(data(), alpha, size()); }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: dimension mismatch " + shape_str(a) + " * " + shape_str(b));
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k)
            kernels::axpy(ai[k], b.row(k), ci, b.cols());
    }
    check_finite(c, "matmul");
    return c;
}

Matrix matmul_ta(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw std::invalid_argument("matmul_ta: dimension mismatch " + shape_str(a) + "^T * " + shape_str(b));
    Matrix c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* ak = a.row(k);
        const double* bk = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i)
            kernels::axpy(ak[i], bk, c.row(i), b.cols());
    }
    check_finite(c, "matmul_ta");
    return c;
}

Matrix matmul_tb(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols())
        throw std::invalid_argument("matmul_tb: dimension mismatch " + shape_str(a) + " * " + shape_str(b) + "^T");
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j)
            c(i, j) = kernels::dot(a.row(i), b.row(j), a.cols());
    check_finite(c, "matmul_tb");
    return c;
}

}  // namespace ner
