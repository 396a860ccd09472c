#pragma once

#include "extsub/dtype.hpp"
#include "extsub/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace extsub {

struct TensorEntry {
    DType dtype = DType::F32;
    std::vector<std::size_t> shape;
    std::vector<uint8_t> data; // little-endian, row-major

    std::size_t element_count() const {
        std::size_t n = 1;
        for (std::size_t s : shape) n *= s;
        return n;
    }

    bool operator==(const TensorEntry &) const = default;
};

// Named-tensor container matching the header-prefixed safetensor layout:
// 8-byte LE header length, UTF-8 JSON header, raw tensor bytes. Immutable
// by convention after load; safe to share read-only across threads.
struct TensorStore {
    std::map<std::string, TensorEntry> entries;
    std::map<std::string, std::string> metadata;

    bool operator==(const TensorStore &) const = default;
};

TensorStore load_store(const std::filesystem::path & path);

// Writes tensors in lexicographic name order with tightly packed offsets.
// Byte-deterministic for a given store.
void save_store(const TensorStore & store, const std::filesystem::path & path);

// Converts a rank-1 or rank-2 entry into an F64 compute matrix (rank 1 is
// treated as 1 x k). Upcasts from F16/BF16/F32 are exact.
Matrix to_compute(const TensorEntry & entry);

// Same, but values carry only the target precision (each element is
// representable in `target` even though the matrix stores doubles).
Matrix to_compute(const TensorEntry & entry, DType target);

// Rounds a compute matrix back into a raw buffer of the given dtype
// (round-to-nearest-even on downcast).
TensorEntry from_compute(const Matrix & m, DType dtype);

} // namespace extsub
