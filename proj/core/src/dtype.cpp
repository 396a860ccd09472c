#include "extsub/dtype.hpp"

#include "extsub/errors.hpp"

#include <bit>
#include <cmath>
#include <cstring>

namespace extsub {

const char * dtype_name(DType d) {
    switch (d) {
        case DType::F64:  return "F64";
        case DType::F32:  return "F32";
        case DType::F16:  return "F16";
        case DType::BF16: return "BF16";
    }
    return "?";
}

bool parse_dtype(const std::string & name, DType & out) {
    if (name == "F64")  { out = DType::F64;  return true; }
    if (name == "F32")  { out = DType::F32;  return true; }
    if (name == "F16")  { out = DType::F16;  return true; }
    if (name == "BF16") { out = DType::BF16; return true; }
    return false;
}

float f16_to_f32(uint16_t bits) {
    const uint32_t sign = (bits & 0x8000u) << 16;
    const uint32_t exp  = (bits >> 10) & 0x1F;
    const uint32_t mant = bits & 0x3FF;

    uint32_t out;
    if (exp == 0) {
        if (mant == 0) {
            out = sign;
        } else {
            // subnormal: renormalize
            int e = -1;
            uint32_t m = mant;
            do {
                e++;
                m <<= 1;
            } while ((m & 0x400) == 0);
            out = sign | ((uint32_t)(127 - 15 - e) << 23) | ((m & 0x3FF) << 13);
        }
    } else if (exp == 0x1F) {
        out = sign | 0x7F800000u | (mant << 13);
    } else {
        out = sign | ((exp - 15 + 127) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(out);
}

uint16_t f32_to_f16(float value) {
    const uint32_t x = std::bit_cast<uint32_t>(value);
    const uint16_t sign = (uint16_t)((x >> 16) & 0x8000u);
    const uint32_t abs = x & 0x7FFFFFFFu;

    if (abs >= 0x7F800000u) {
        // inf / nan
        uint16_t mant = (abs > 0x7F800000u) ? (uint16_t)((abs >> 13) & 0x3FF) : 0;
        if (abs > 0x7F800000u && mant == 0) mant = 1;
        return sign | 0x7C00 | mant;
    }
    if (abs >= 0x477FF000u) {
        // rounds to overflow
        const uint32_t rounded = abs + 0x00000FFFu + ((abs >> 13) & 1);
        if (rounded >= 0x47800000u) return sign | 0x7C00;
    }

    int32_t exp = (int32_t)(abs >> 23) - 127 + 15;
    uint32_t mant = abs & 0x7FFFFFu;

    if (exp >= 0x1F) return sign | 0x7C00;
    if (exp <= 0) {
        if (exp < -10) return sign; // underflow to zero
        // subnormal half: shift mantissa (with hidden bit) right
        mant |= 0x800000u;
        const int shift = 14 - exp;
        const uint32_t half = 1u << (shift - 1);
        const uint32_t rem = mant & ((1u << shift) - 1);
        uint32_t m = mant >> shift;
        if (rem > half || (rem == half && (m & 1))) m++;
        return sign | (uint16_t)m;
    }

    // normal: round mantissa from 23 to 10 bits, RNE
    uint32_t m = mant >> 13;
    const uint32_t rem = mant & 0x1FFFu;
    if (rem > 0x1000u || (rem == 0x1000u && (m & 1))) {
        m++;
        if (m == 0x400u) { m = 0; exp++; if (exp >= 0x1F) return sign | 0x7C00; }
    }
    return sign | (uint16_t)(exp << 10) | (uint16_t)m;
}

float bf16_to_f32(uint16_t bits) {
    return std::bit_cast<float>((uint32_t)bits << 16);
}

uint16_t f32_to_bf16(float value) {
    uint32_t x = std::bit_cast<uint32_t>(value);
    if ((x & 0x7FFFFFFFu) > 0x7F800000u) {
        // nan: keep payload bit set
        return (uint16_t)((x >> 16) | 0x0040u);
    }
    const uint32_t rem = x & 0xFFFFu;
    uint32_t hi = x >> 16;
    if (rem > 0x8000u || (rem == 0x8000u && (hi & 1))) hi++;
    return (uint16_t)hi;
}

double read_element(const uint8_t * data, DType dtype, std::size_t index) {
    switch (dtype) {
        case DType::F64: {
            uint64_t u;
            std::memcpy(&u, data + index * 8, 8);
            return std::bit_cast<double>(u);
        }
        case DType::F32: {
            uint32_t u;
            std::memcpy(&u, data + index * 4, 4);
            return (double)std::bit_cast<float>(u);
        }
        case DType::F16: {
            uint16_t u;
            std::memcpy(&u, data + index * 2, 2);
            return (double)f16_to_f32(u);
        }
        case DType::BF16: {
            uint16_t u;
            std::memcpy(&u, data + index * 2, 2);
            return (double)bf16_to_f32(u);
        }
    }
    return 0.0;
}

void write_element(uint8_t * data, DType dtype, std::size_t index, double value) {
    switch (dtype) {
        case DType::F64: {
            const uint64_t u = std::bit_cast<uint64_t>(value);
            std::memcpy(data + index * 8, &u, 8);
            return;
        }
        case DType::F32: {
            const uint32_t u = std::bit_cast<uint32_t>((float)value);
            std::memcpy(data + index * 4, &u, 4);
            return;
        }
        case DType::F16: {
            const uint16_t u = f32_to_f16((float)value);
            std::memcpy(data + index * 2, &u, 2);
            return;
        }
        case DType::BF16: {
            const uint16_t u = f32_to_bf16((float)value);
            std::memcpy(data + index * 2, &u, 2);
            return;
        }
    }
}

} // namespace extsub
