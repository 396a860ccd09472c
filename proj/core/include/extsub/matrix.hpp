#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace extsub {

// Dense row-major F64 matrix. All library arithmetic happens in this
// representation; storage dtypes only exist at the container boundary.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double & at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    bool same_shape(const Matrix & o) const { return rows == o.rows && cols == o.cols; }

    bool operator==(const Matrix & o) const = default;
};

// B (d x r) times A (r x k), fixed ijk summation order for determinism.
Matrix matmul(const Matrix & b, const Matrix & a);

Matrix transpose(const Matrix & m);

double frobenius_norm(const Matrix & m);

} // namespace extsub
