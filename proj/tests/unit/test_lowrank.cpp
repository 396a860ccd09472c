#include "extsub/lowrank.hpp"

#include "extsub/errors.hpp"
#include "../oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace extsub;

namespace {

Matrix reassemble(const TruncationResult & r) {
    return matmul(r.b_out, r.a_out);
}

double rel_error(const Matrix & approx, const Matrix & exact) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < exact.data.size(); i++) {
        num += std::pow(approx.data[i] - exact.data[i], 2);
        den += std::pow(exact.data[i], 2);
    }
    return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

} // namespace

TEST_CASE("rank-1 matrix has spectrum (5, 0)") {
    // oracle: eigenvalues of delta^T delta = [[5,10],[10,20]]: trace 25, det 0
    Matrix delta(2, 2);
    delta.data = {1, 2, 2, 4};
    const auto r = svd_truncate(delta, 1);
    REQUIRE(r.singular_values.size() == 2);
    CHECK(r.singular_values[0] == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(r.singular_values[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.rel_frobenius_error == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rel_error(reassemble(r), delta) <= 1e-9);
}

TEST_CASE("identity truncated at full rank is exact") {
    Matrix eye(3, 3);
    for (int i = 0; i < 3; i++) eye.at(i, i) = 1.0;
    const auto r = svd_truncate(eye, 3);
    CHECK(r.rel_frobenius_error == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rel_error(reassemble(r), eye) <= 1e-9);
}

TEST_CASE("reconstruction error matches the tail-energy formula") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; trial++) {
        const Matrix delta = oracle::random_matrix(rng, 8, 8);
        const auto r = svd_truncate(delta, 4);

        const auto sigma_ref = oracle::singular_values_ref(delta);
        double total = 0, tail = 0;
        for (std::size_t i = 0; i < sigma_ref.size(); i++) {
            total += sigma_ref[i] * sigma_ref[i];
            if (i >= 4) tail += sigma_ref[i] * sigma_ref[i];
        }
        CHECK(r.rel_frobenius_error == doctest::Approx(std::sqrt(tail / total)).epsilon(1e-9));

        // the truncated reassembly realizes exactly that error
        CHECK(rel_error(reassemble(r), delta) ==
              doctest::Approx(r.rel_frobenius_error).epsilon(1e-8));
    }
}

TEST_CASE("singular values are descending and non-negative") {
    std::mt19937_64 rng(9);
    const Matrix delta = oracle::random_matrix(rng, 12, 7);
    const auto r = svd_truncate(delta, 3);
    for (std::size_t i = 0; i < r.singular_values.size(); i++) {
        CHECK(r.singular_values[i] >= 0.0);
        if (i > 0) CHECK(r.singular_values[i] <= r.singular_values[i - 1]);
    }
}

TEST_CASE("factors are balanced in Frobenius norm") {
    std::mt19937_64 rng(10);
    const Matrix delta = oracle::random_matrix(rng, 10, 6);
    const auto r = svd_truncate(delta, 4);
    CHECK(frobenius_norm(r.b_out) == doctest::Approx(frobenius_norm(r.a_out)).epsilon(1e-9));
}

TEST_CASE("exact reconstruction when target rank covers the true rank") {
    std::mt19937_64 rng(12);
    const Matrix b = oracle::random_matrix(rng, 9, 3);
    const Matrix a = oracle::random_matrix(rng, 3, 9);
    const Matrix delta = matmul(b, a); // true rank 3
    for (std::size_t rank : {3u, 5u, 9u}) {
        const auto r = svd_truncate(delta, rank);
        CHECK(rel_error(reassemble(r), delta) <= 1e-9);
    }
}

TEST_CASE("sign convention makes truncation deterministic") {
    std::mt19937_64 rng(13);
    const Matrix delta = oracle::random_matrix(rng, 6, 6);
    const auto r1 = svd_truncate(delta, 3);
    const auto r2 = svd_truncate(delta, 3);
    CHECK(r1.b_out == r2.b_out);
    CHECK(r1.a_out == r2.a_out);
    // largest-magnitude entry of each left vector is non-negative
    for (std::size_t j = 0; j < 3; j++) {
        std::size_t arg = 0;
        double best = 0;
        for (std::size_t i = 0; i < 6; i++) {
            if (std::abs(r1.b_out.at(i, j)) > best) {
                best = std::abs(r1.b_out.at(i, j));
                arg = i;
            }
        }
        CHECK(r1.b_out.at(arg, j) >= 0.0);
    }
}

TEST_CASE("truncation beats random factorizations of the same rank") {
    // Eckart-Young spot check: random orthonormal bases with least-squares
    // coefficients never reconstruct better than the SVD truncation.
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 10; trial++) {
        const Matrix delta = oracle::random_matrix(rng, 8, 8);
        const std::size_t rank = 3;
        const auto r = svd_truncate(delta, rank);
        const double svd_err = rel_error(reassemble(r), delta);

        for (int alt = 0; alt < 20; alt++) {
            // random basis B (8 x rank), least-squares A = (B^T B)^-1 B^T delta
            // via Gram-Schmidt so B^T B = I and A = B^T delta
            Matrix basis = oracle::random_matrix(rng, 8, rank);
            for (std::size_t c = 0; c < rank; c++) {
                for (std::size_t p = 0; p < c; p++) {
                    double proj = 0;
                    for (std::size_t i = 0; i < 8; i++) proj += basis.at(i, c) * basis.at(i, p);
                    for (std::size_t i = 0; i < 8; i++) basis.at(i, c) -= proj * basis.at(i, p);
                }
                double nrm = 0;
                for (std::size_t i = 0; i < 8; i++) nrm += basis.at(i, c) * basis.at(i, c);
                nrm = std::sqrt(nrm);
                for (std::size_t i = 0; i < 8; i++) basis.at(i, c) /= nrm;
            }
            const Matrix coeff = matmul(transpose(basis), delta);
            const double alt_err = rel_error(matmul(basis, coeff), delta);
            CHECK(svd_err <= alt_err + 1e-12);
        }
    }
}

TEST_CASE("rank too large is rejected") {
    Matrix delta(3, 5);
    try {
        svd_truncate(delta, 4);
        FAIL("expected RankTooLarge");
    } catch (const Error & e) {
        CHECK(e.code() == "RankTooLarge");
    }
}

TEST_CASE("effective rank") {
    Matrix zero(4, 4);
    CHECK(effective_rank(zero, 0.5) == 0);

    Matrix eye(4, 4);
    for (int i = 0; i < 4; i++) eye.at(i, i) = 1.0;
    CHECK(effective_rank(eye, 0.5) == 4);

    Matrix rank1(2, 2);
    rank1.data = {1, 2, 2, 4};
    CHECK(effective_rank(rank1, 1e-8) == 1);
}
