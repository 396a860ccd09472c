#include "extsub/adapter.hpp"

#include "extsub/errors.hpp"
#include "../oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

using namespace extsub;

namespace {

TensorEntry matrix_entry(const Matrix & m) {
    return from_compute(m, DType::F32);
}

TensorStore factor_store(const std::string & key, const Matrix & b, const Matrix & a) {
    TensorStore store;
    store.entries[key + ".lora_B.weight"] = matrix_entry(b);
    store.entries[key + ".lora_A.weight"] = matrix_entry(a);
    return store;
}

} // namespace

TEST_CASE("assemble pairs factors by shared prefix") {
    Matrix b(4, 2), a(2, 8);
    const auto model = assemble(factor_store("x", b, a));
    REQUIRE(model.layers.contains("x"));
    CHECK(model.layers.at("x").rank == 2);
    CHECK(model.layers.at("x").b.rows == 4);
    CHECK(model.layers.at("x").a.cols == 8);
    CHECK(model.passthrough.empty());
}

TEST_CASE("a B factor alone is unpaired") {
    TensorStore store;
    store.entries["x.lora_B.weight"] = matrix_entry(Matrix(4, 2));
    try {
        assemble(store);
        FAIL("expected UnpairedFactor");
    } catch (const Error & e) {
        CHECK(e.code() == "UnpairedFactor");
    }
}

TEST_CASE("non-matching tensors pass through verbatim") {
    auto store = factor_store("x", Matrix(4, 2), Matrix(2, 8));
    TensorEntry blob;
    blob.dtype = DType::F32;
    blob.shape = {3};
    blob.data = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    store.entries["tokenizer_config"] = blob;

    const auto model = assemble(store);
    REQUIRE(model.passthrough.contains("tokenizer_config"));
    CHECK(model.passthrough.at("tokenizer_config").data == blob.data);

    const auto delta = compose_delta(model);
    CHECK(delta.passthrough.at("tokenizer_config").data == blob.data);
}

TEST_CASE("compose_delta rank-1 outer product") {
    Matrix b(2, 1), a(1, 2);
    b.at(0, 0) = 1;
    b.at(1, 0) = 0;
    a.at(0, 0) = 0;
    a.at(0, 1) = 2;
    const auto delta = compose_delta(assemble(factor_store("x", b, a)));
    const Matrix & d = delta.deltas.at("x");
    CHECK(d.at(0, 0) == 0);
    CHECK(d.at(0, 1) == 2);
    CHECK(d.at(1, 0) == 0);
    CHECK(d.at(1, 1) == 0);
}

TEST_CASE("zero B annihilates the delta") {
    Matrix b(3, 2), a(2, 4);
    for (double & v : a.data) v = 1.5;
    const auto delta = compose_delta(assemble(factor_store("x", b, a)));
    for (double v : delta.deltas.at("x").data) CHECK(v == 0.0);
}

TEST_CASE("compose_delta matches the triple-loop oracle") {
    std::mt19937_64 rng(42);
    const Matrix b = oracle::random_matrix(rng, 4, 2);
    const Matrix a = oracle::random_matrix(rng, 2, 3);
    const auto delta = compose_delta(assemble(factor_store("x", b, a)));
    const Matrix expect = oracle::naive_matmul(b, a);
    for (std::size_t i = 0; i < expect.data.size(); i++) {
        CHECK(delta.deltas.at("x").data[i] ==
              doctest::Approx(expect.data[i]).epsilon(1e-6));
    }
}

TEST_CASE("orientation is inferred for transposed factors") {
    // B stored as r x d, A as r x k: only transposing B matches
    std::mt19937_64 rng(3);
    const Matrix b = oracle::random_matrix(rng, 2, 5); // r x d
    const Matrix a = oracle::random_matrix(rng, 2, 7); // r x k
    TensorStore store;
    store.entries["x.lora_B.weight"] = matrix_entry(b);
    store.entries["x.lora_A.weight"] = matrix_entry(a);
    const auto model = assemble(store);
    CHECK(model.layers.at("x").rank == 2);
    CHECK(model.layers.at("x").b.rows == 5);
    CHECK(model.layers.at("x").a.cols == 7);
}

TEST_CASE("square d x k layer is not ambiguous") {
    const auto model = assemble(factor_store("x", Matrix(64, 16), Matrix(16, 64)));
    CHECK(model.layers.at("x").rank == 16);
}

TEST_CASE("fully square factors are flagged as ambiguous") {
    try {
        assemble(factor_store("x", Matrix(4, 4), Matrix(4, 4)));
        FAIL("expected AmbiguousOrientation");
    } catch (const Error & e) {
        CHECK(e.code() == "AmbiguousOrientation");
    }
}

TEST_CASE("check_compatible accepts equal keys and shapes, differing ranks") {
    const auto d1 = compose_delta(assemble(factor_store("x", Matrix(32, 16), Matrix(16, 32))));
    const auto d2 = compose_delta(assemble(factor_store("x", Matrix(32, 4), Matrix(4, 32))));
    CHECK_NOTHROW(check_compatible(d1, d2));
}

TEST_CASE("check_compatible names the missing key") {
    DeltaModel a, b;
    a.deltas["x"] = Matrix(2, 2);
    try {
        check_compatible(a, b);
        FAIL("expected KeySetMismatch");
    } catch (const Error & e) {
        CHECK(e.code() == "KeySetMismatch");
        CHECK(std::string(e.what()).find("'x'") != std::string::npos);
    }
}

TEST_CASE("check_compatible rejects shape mismatch") {
    DeltaModel a, b;
    a.deltas["x"] = Matrix(2, 2);
    b.deltas["x"] = Matrix(2, 3);
    try {
        check_compatible(a, b);
        FAIL("expected ShapeMismatch");
    } catch (const Error & e) {
        CHECK(e.code() == "ShapeMismatch");
    }
}

TEST_CASE("delta store roundtrip") {
    std::mt19937_64 rng(11);
    DeltaModel model;
    model.deltas["x"] = oracle::random_matrix(rng, 4, 6);
    model.storage_dtypes["x"] = DType::F64;
    const auto store = to_store(model, DType::F64);
    REQUIRE(store.entries.contains("x.delta.weight"));
    const auto back = delta_from_store(store);
    CHECK(back.deltas.at("x") == model.deltas.at("x"));
}
