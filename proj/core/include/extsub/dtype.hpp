#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace extsub {

enum class DType { F64, F32, F16, BF16 };

constexpr std::size_t byte_width(DType d) {
    switch (d) {
        case DType::F64:  return 8;
        case DType::F32:  return 4;
        case DType::F16:  return 2;
        case DType::BF16: return 2;
    }
    return 0;
}

const char * dtype_name(DType d);
bool parse_dtype(const std::string & name, DType & out);

// IEEE half / bfloat16 conversions. Upcasts are exact; downcasts use
// round-to-nearest-even.
float    f16_to_f32(uint16_t bits);
uint16_t f32_to_f16(float value);
float    bf16_to_f32(uint16_t bits);
uint16_t f32_to_bf16(float value);

// Scalar element access into a little-endian raw buffer.
double read_element(const uint8_t * data, DType dtype, std::size_t index);
void   write_element(uint8_t * data, DType dtype, std::size_t index, double value);

} // namespace extsub
