#include "extsub/tensor_store.hpp"

#include "extsub/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstring>
#include <fstream>

namespace extsub {

using ordered_json = nlohmann::ordered_json;

TensorStore load_store(const std::filesystem::path & path) {
    std::ifstream file(path, std::ios::binary | std::ios::ate);
    if (!file) {
        throw io_failure("cannot open " + path.string());
    }
    const uint64_t file_size = (uint64_t)file.tellg();
    file.seekg(0);

    if (file_size < 8) {
        throw malformed_header("file shorter than the 8-byte length prefix");
    }
    uint64_t header_len = 0;
    file.read(reinterpret_cast<char *>(&header_len), 8);
    if (header_len > file_size - 8) {
        throw malformed_header("header length " + std::to_string(header_len) +
                               " exceeds file size " + std::to_string(file_size));
    }

    std::string header_text(header_len, '\0');
    file.read(header_text.data(), (std::streamsize)header_len);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_text);
    } catch (const nlohmann::json::exception & e) {
        throw malformed_header(std::string("header is not valid JSON: ") + e.what());
    }
    if (!header.is_object()) {
        throw malformed_header("header is not a JSON object");
    }

    const uint64_t data_size = file_size - 8 - header_len;
    std::vector<uint8_t> data(data_size);
    file.read(reinterpret_cast<char *>(data.data()), (std::streamsize)data_size);
    if (!file) {
        throw io_failure("short read on " + path.string());
    }

    TensorStore store;
    std::vector<std::pair<uint64_t, uint64_t>> ranges;

    for (const auto & [name, value] : header.items()) {
        if (name == "__metadata__") {
            if (!value.is_object()) {
                throw malformed_header("__metadata__ is not an object");
            }
            for (const auto & [k, v] : value.items()) {
                if (!v.is_string()) {
                    throw malformed_header("__metadata__ values must be strings");
                }
                store.metadata[k] = v.get<std::string>();
            }
            continue;
        }
        if (!value.is_object() || !value.contains("dtype") || !value.contains("shape") ||
            !value.contains("data_offsets")) {
            throw malformed_header("tensor '" + name + "' misses dtype/shape/data_offsets");
        }

        TensorEntry entry;
        const std::string dtype_str = value["dtype"].get<std::string>();
        if (!parse_dtype(dtype_str, entry.dtype)) {
            throw unknown_dtype("tensor '" + name + "' has dtype '" + dtype_str + "'");
        }
        for (const auto & s : value["shape"]) {
            const int64_t dim = s.get<int64_t>();
            if (dim < 0) {
                throw malformed_header("tensor '" + name + "' has a negative dimension");
            }
            entry.shape.push_back((std::size_t)dim);
        }

        const auto & off = value["data_offsets"];
        if (!off.is_array() || off.size() != 2) {
            throw malformed_header("tensor '" + name + "' data_offsets is not a pair");
        }
        const uint64_t begin = off[0].get<uint64_t>();
        const uint64_t end   = off[1].get<uint64_t>();
        if (begin > end || end > data_size) {
            throw offset_overlap("tensor '" + name + "' data range [" + std::to_string(begin) +
                                 ", " + std::to_string(end) + ") exceeds data section of " +
                                 std::to_string(data_size) + " bytes");
        }
        const uint64_t expected = (uint64_t)entry.element_count() * byte_width(entry.dtype);
        if (end - begin != expected) {
            throw malformed_header("tensor '" + name + "' byte length " +
                                   std::to_string(end - begin) + " does not match shape (" +
                                   std::to_string(expected) + " expected)");
        }

        entry.data.assign(data.begin() + (std::ptrdiff_t)begin, data.begin() + (std::ptrdiff_t)end);
        ranges.emplace_back(begin, end);
        if (!store.entries.emplace(name, std::move(entry)).second) {
            throw malformed_header("duplicate tensor name '" + name + "'");
        }
    }

    std::sort(ranges.begin(), ranges.end());
    for (std::size_t i = 1; i < ranges.size(); i++) {
        if (ranges[i].first < ranges[i - 1].second) {
            throw offset_overlap("tensor data ranges overlap");
        }
    }

    return store;
}

void save_store(const TensorStore & store, const std::filesystem::path & path) {
    ordered_json header = ordered_json::object();
    if (!store.metadata.empty()) {
        ordered_json meta = ordered_json::object();
        for (const auto & [k, v] : store.metadata) meta[k] = v;
        header["__metadata__"] = std::move(meta);
    }

    // entries map is ordered, so tensors come out in lexicographic name order
    uint64_t offset = 0;
    for (const auto & [name, entry] : store.entries) {
        ordered_json e = ordered_json::object();
        e["dtype"] = dtype_name(entry.dtype);
        e["shape"] = entry.shape;
        e["data_offsets"] = {offset, offset + entry.data.size()};
        header[name] = std::move(e);
        offset += entry.data.size();
    }

    const std::string header_text = header.dump();
    const uint64_t header_len = header_text.size();

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) {
        throw io_failure("cannot open " + path.string() + " for writing");
    }
    file.write(reinterpret_cast<const char *>(&header_len), 8);
    file.write(header_text.data(), (std::streamsize)header_len);
    for (const auto & [name, entry] : store.entries) {
        file.write(reinterpret_cast<const char *>(entry.data.data()),
                   (std::streamsize)entry.data.size());
    }
    if (!file) {
        throw io_failure("write failed on " + path.string());
    }
}

static void check_rank(const TensorEntry & entry) {
    if (entry.shape.size() > 2) {
        throw shape_unsupported("rank " + std::to_string(entry.shape.size()) +
                                " tensors are not supported");
    }
}

Matrix to_compute(const TensorEntry & entry) {
    check_rank(entry);
    const std::size_t rows = entry.shape.size() == 2 ? entry.shape[0] : 1;
    const std::size_t cols = entry.shape.empty()
        ? entry.element_count()
        : entry.shape.back();
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.data.size(); i++) {
        m.data[i] = read_element(entry.data.data(), entry.dtype, i);
    }
    return m;
}

Matrix to_compute(const TensorEntry & entry, DType target) {
    Matrix m = to_compute(entry);
    if (target == DType::F64) return m;
    for (double & v : m.data) {
        switch (target) {
            case DType::F32:  v = (double)(float)v; break;
            case DType::F16:  v = (double)f16_to_f32(f32_to_f16((float)v)); break;
            case DType::BF16: v = (double)bf16_to_f32(f32_to_bf16((float)v)); break;
            case DType::F64:  break;
        }
    }
    return m;
}

TensorEntry from_compute(const Matrix & m, DType dtype) {
    TensorEntry entry;
    entry.dtype = dtype;
    entry.shape = {m.rows, m.cols};
    entry.data.resize(m.data.size() * byte_width(dtype));
    for (std::size_t i = 0; i < m.data.size(); i++) {
        write_element(entry.data.data(), dtype, i, m.data[i]);
    }
    return entry;
}

} // namespace extsub
