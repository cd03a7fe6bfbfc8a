#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace legend {

// Dense row-major matrix of doubles. The only numeric carrier in the
// project: weights, activations, gradients, adapter factors.
class Matrix {
public:
    Matrix() : rows_(0), cols_(0) {}
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    std::string shape_str() const;

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> data_;
};

// a * b; throws std::invalid_argument naming both shapes on mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

// alpha * x + y elementwise; shapes must match.
Matrix axpy(double alpha, const Matrix& x, const Matrix& y);

Matrix transpose(const Matrix& m);

// Elementwise product.
Matrix hadamard(const Matrix& a, const Matrix& b);

double frobenius_norm(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

// Throws std::domain_error if any element is NaN or Inf.
void require_finite(const Matrix& m, const char* what);

}  // namespace legend
