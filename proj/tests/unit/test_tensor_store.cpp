#include "extsub/tensor_store.hpp"

#include "extsub/errors.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

using namespace extsub;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string & name) {
    return fs::temp_directory_path() / name;
}

TensorEntry f32_entry(std::vector<std::size_t> shape, const std::vector<float> & values) {
    TensorEntry e;
    e.dtype = DType::F32;
    e.shape = std::move(shape);
    e.data.resize(values.size() * 4);
    std::memcpy(e.data.data(), values.data(), e.data.size());
    return e;
}

std::vector<uint8_t> read_file(const fs::path & p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_raw(const fs::path & p, const std::string & header,
               const std::vector<uint8_t> & data) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    const uint64_t len = header.size();
    f.write(reinterpret_cast<const char *>(&len), 8);
    f.write(header.data(), (std::streamsize)header.size());
    f.write(reinterpret_cast<const char *>(data.data()), (std::streamsize)data.size());
}

} // namespace

TEST_CASE("identity matrix roundtrip") {
    TensorStore store;
    store.entries["w"] = f32_entry({2, 2}, {1, 0, 0, 1});
    const auto path = temp_file("ts_identity.safetensors");
    save_store(store, path);

    const auto loaded = load_store(path);
    REQUIRE(loaded.entries.contains("w"));
    CHECK(loaded.entries.at("w").shape == std::vector<std::size_t>{2, 2});
    CHECK(loaded == store);
}

TEST_CASE("header length exceeding file size is malformed") {
    const auto path = temp_file("ts_badlen.safetensors");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    const uint64_t len = 1 << 20;
    f.write(reinterpret_cast<const char *>(&len), 8);
    f.write("{}", 2);
    f.close();

    try {
        load_store(path);
        FAIL("expected MalformedHeader");
    } catch (const Error & e) {
        CHECK(e.code() == "MalformedHeader");
    }
}

TEST_CASE("save then load is byte-identical per entry") {
    std::mt19937_64 rng(7);
    TensorStore store;
    for (int i = 0; i < 5; i++) {
        TensorEntry e;
        e.dtype = i % 2 ? DType::F16 : DType::F64;
        e.shape = {3, 4};
        e.data.resize(12 * byte_width(e.dtype));
        for (auto & b : e.data) b = (uint8_t)rng();
        store.entries["t" + std::to_string(i)] = std::move(e);
    }
    store.metadata["source"] = "unit-test";

    const auto path = temp_file("ts_roundtrip.safetensors");
    save_store(store, path);
    const auto loaded = load_store(path);
    REQUIRE(loaded.entries.size() == store.entries.size());
    for (const auto & [name, entry] : store.entries) {
        CHECK(loaded.entries.at(name).data == entry.data);
    }
    CHECK(loaded.metadata == store.metadata);
}

TEST_CASE("empty store writes an empty header and nothing else") {
    const auto path = temp_file("ts_empty.safetensors");
    save_store(TensorStore{}, path);
    const auto bytes = read_file(path);
    REQUIRE(bytes.size() == 10);
    CHECK(bytes[8] == '{');
    CHECK(bytes[9] == '}');
    CHECK(load_store(path).entries.empty());
}

TEST_CASE("offsets are back-to-back in lexicographic name order") {
    TensorStore store;
    store.entries["b"] = f32_entry({2}, {1, 2});
    store.entries["a"] = f32_entry({3}, {3, 4, 5});
    const auto path = temp_file("ts_offsets.safetensors");
    save_store(store, path);

    // re-parse the header directly
    const auto bytes = read_file(path);
    uint64_t len = 0;
    std::memcpy(&len, bytes.data(), 8);
    const auto header = nlohmann::json::parse(std::string(bytes.begin() + 8,
                                                          bytes.begin() + 8 + (long)len));
    CHECK(header["a"]["data_offsets"] == nlohmann::json({0, 12}));
    CHECK(header["b"]["data_offsets"] == nlohmann::json({12, 20}));
}

TEST_CASE("save is deterministic") {
    TensorStore store;
    store.entries["x"] = f32_entry({2, 2}, {1, 2, 3, 4});
    store.metadata["k"] = "v";
    const auto p1 = temp_file("ts_det1.safetensors");
    const auto p2 = temp_file("ts_det2.safetensors");
    save_store(store, p1);
    save_store(store, p2);
    CHECK(read_file(p1) == read_file(p2));
}

TEST_CASE("unknown dtype is rejected") {
    const auto path = temp_file("ts_unknown.safetensors");
    write_raw(path, R"({"w":{"dtype":"I64","shape":[1],"data_offsets":[0,8]}})",
              std::vector<uint8_t>(8, 0));
    CHECK_THROWS_AS(load_store(path), Error);
    try {
        load_store(path);
    } catch (const Error & e) {
        CHECK(e.code() == "UnknownDtype");
    }
}

TEST_CASE("overlapping data ranges are rejected") {
    const auto path = temp_file("ts_overlap.safetensors");
    write_raw(path,
              R"({"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},)"
              R"("b":{"dtype":"F32","shape":[2],"data_offsets":[4,12]}})",
              std::vector<uint8_t>(12, 0));
    try {
        load_store(path);
        FAIL("expected OffsetOverlap");
    } catch (const Error & e) {
        CHECK(e.code() == "OffsetOverlap");
    }
}

TEST_CASE("length mismatch against shape is malformed") {
    const auto path = temp_file("ts_lenmismatch.safetensors");
    write_raw(path, R"({"a":{"dtype":"F32","shape":[3],"data_offsets":[0,8]}})",
              std::vector<uint8_t>(8, 0));
    try {
        load_store(path);
        FAIL("expected MalformedHeader");
    } catch (const Error & e) {
        CHECK(e.code() == "MalformedHeader");
    }
}

TEST_CASE("to_compute upcasts losslessly") {
    TensorEntry e;
    e.dtype = DType::F16;
    e.shape = {1};
    e.data = {0x00, 0x3C}; // 1.0 in half
    const auto m = to_compute(e);
    CHECK(m.rows == 1);
    CHECK(m.cols == 1);
    CHECK(m.at(0, 0) == 1.0);

    TensorEntry bf;
    bf.dtype = DType::BF16;
    bf.shape = {1};
    bf.data = {0x80, 0x3F}; // 0x3F80 little-endian
    CHECK(to_compute(bf).at(0, 0) == 1.0);
}

TEST_CASE("to_compute rejects rank 3") {
    TensorEntry e;
    e.dtype = DType::F32;
    e.shape = {2, 2, 2};
    e.data.resize(32);
    try {
        to_compute(e);
        FAIL("expected ShapeUnsupported");
    } catch (const Error & err) {
        CHECK(err.code() == "ShapeUnsupported");
    }
}

TEST_CASE("to_compute with f32 target rounds through float") {
    TensorEntry e;
    e.dtype = DType::F64;
    e.shape = {1};
    const double v = 0.1; // not f32-representable
    e.data.resize(8);
    std::memcpy(e.data.data(), &v, 8);
    CHECK(to_compute(e, DType::F32).at(0, 0) == (double)(float)0.1);
    CHECK(to_compute(e, DType::F64).at(0, 0) == 0.1);
}
