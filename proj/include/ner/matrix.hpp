#pragma once

#include <cstddef>
#include <vector>

#include "ner/rng.hpp"

namespace ner {

// Dense row-major f64 matrix. Sequences here are short (<= 128 positions,
// hidden dims <= 64), so there is no blocked or sparse storage.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, value) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix randn(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0) {
        Matrix m(rows, cols);
        for (double& v : m.data_) v = stddev * rng.normal();
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const;

    void fill(double v) { data_.assign(data_.size(), v); }
    void add_scaled(const Matrix& o, double alpha);  // *this += alpha * o
    void scale_inplace(double alpha);

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// C = A * B. Throws std::invalid_argument on inner-dimension mismatch,
// NumericError if the product is not finite.
Matrix matmul(const Matrix& a, const Matrix& b);

// C = A^T * B and C = A * B^T, used by the backward passes.
Matrix matmul_ta(const Matrix& a, const Matrix& b);
Matrix matmul_tb(const Matrix& a, const Matrix& b);

}  // namespace ner
