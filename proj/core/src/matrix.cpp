#include "extsub/matrix.hpp"

#include "extsub/errors.hpp"

#include <cmath>

namespace extsub {

Matrix matmul(const Matrix & b, const Matrix & a) {
    if (b.cols != a.rows) {
        throw shape_mismatch("matmul: inner dimensions differ");
    }
    Matrix out(b.rows, a.cols);
    for (std::size_t i = 0; i < b.rows; i++) {
        for (std::size_t l = 0; l < b.cols; l++) {
            const double bil = b.at(i, l);
            for (std::size_t j = 0; j < a.cols; j++) {
                out.at(i, j) += bil * a.at(l, j);
            }
        }
    }
    return out;
}

Matrix transpose(const Matrix & m) {
    Matrix out(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; i++) {
        for (std::size_t j = 0; j < m.cols; j++) {
            out.at(j, i) = m.at(i, j);
        }
    }
    return out;
}

double frobenius_norm(const Matrix & m) {
    double s = 0.0;
    for (double v : m.data) s += v * v;
    return std::sqrt(s);
}

} // namespace extsub
