#include "extsub/lowrank.hpp"

#include "extsub/errors.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace extsub {

static Eigen::MatrixXd to_eigen(const Matrix & m) {
    Eigen::MatrixXd e((Eigen::Index)m.rows, (Eigen::Index)m.cols);
    for (std::size_t i = 0; i < m.rows; i++) {
        for (std::size_t j = 0; j < m.cols; j++) {
            e((Eigen::Index)i, (Eigen::Index)j) = m.at(i, j);
        }
    }
    return e;
}

TruncationResult svd_truncate(const Matrix & delta, std::size_t target_rank) {
    const std::size_t max_rank = std::min(delta.rows, delta.cols);
    if (target_rank == 0 || target_rank > max_rank) {
        throw rank_too_large("target rank " + std::to_string(target_rank) +
                             " outside [1, " + std::to_string(max_rank) + "]");
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(delta),
                                          Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::MatrixXd u = svd.matrixU();
    Eigen::MatrixXd v = svd.matrixV();
    const Eigen::VectorXd & sigma = svd.singularValues();

    // deterministic sign fix per singular pair
    for (Eigen::Index j = 0; j < u.cols(); j++) {
        Eigen::Index arg = 0;
        double best = 0.0;
        for (Eigen::Index i = 0; i < u.rows(); i++) {
            if (std::abs(u(i, j)) > best) {
                best = std::abs(u(i, j));
                arg = i;
            }
        }
        if (u(arg, j) < 0.0) {
            u.col(j) = -u.col(j);
            v.col(j) = -v.col(j);
        }
    }

    TruncationResult result;
    result.singular_values.assign(sigma.data(), sigma.data() + sigma.size());

    double total = 0.0;
    double tail = 0.0;
    for (Eigen::Index i = 0; i < sigma.size(); i++) {
        const double s2 = sigma(i) * sigma(i);
        total += s2;
        if ((std::size_t)i >= target_rank) tail += s2;
    }
    result.rel_frobenius_error = total > 0.0 ? std::sqrt(tail / total) : 0.0;

    result.b_out = Matrix(delta.rows, target_rank);
    result.a_out = Matrix(target_rank, delta.cols);
    for (std::size_t r = 0; r < target_rank; r++) {
        const double root = std::sqrt(sigma((Eigen::Index)r));
        for (std::size_t i = 0; i < delta.rows; i++) {
            result.b_out.at(i, r) = u((Eigen::Index)i, (Eigen::Index)r) * root;
        }
        for (std::size_t j = 0; j < delta.cols; j++) {
            result.a_out.at(r, j) = root * v((Eigen::Index)j, (Eigen::Index)r);
        }
    }
    return result;
}

std::size_t effective_rank(const Matrix & delta, double tol_ratio) {
    if (tol_ratio <= 0.0 || tol_ratio >= 1.0) {
        throw invalid_argument_error("tol_ratio must be in (0, 1)");
    }
    if (delta.rows == 0 || delta.cols == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(delta));
    const Eigen::VectorXd & sigma = svd.singularValues();
    if (sigma.size() == 0 || sigma(0) <= 0.0) return 0;
    std::size_t count = 0;
    for (Eigen::Index i = 0; i < sigma.size(); i++) {
        if (sigma(i) >= tol_ratio * sigma(0)) count++;
    }
    return count;
}

} // namespace extsub
