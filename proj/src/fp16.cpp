#include "inferlab/fp16.hpp"

#include <bit>

namespace inferlab::fp16 {

namespace {

// x >> shift with round-to-nearest-even on the dropped bits.
std::uint32_t shift_rne(std::uint32_t x, int shift) {
  if (shift <= 0) return x << -shift;
  if (shift > 31) return 0;
  const std::uint32_t kept = x >> shift;
  const std::uint32_t rem = x & ((1u << shift) - 1);
  const std::uint32_t half = 1u << (shift - 1);
  if (rem > half || (rem == half && (kept & 1))) return kept + 1;
  return kept;
}

}  // namespace

std::uint16_t fp32_to_fp16(float x) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(x);
  const std::uint16_t sign = static_cast<std::uint16_t>((bits >> 16) & 0x8000u);
  const std::uint32_t exp = (bits >> 23) & 0xFFu;
  const std::uint32_t mant = bits & 0x7FFFFFu;

  if (exp == 255) {
    if (mant == 0) return sign | 0x7C00u;  // ±inf
    // Quiet the NaN; keep the top payload bits so distinct NaNs stay distinct.
    return static_cast<std::uint16_t>(sign | 0x7C00u | 0x0200u | (mant >> 13));
  }

  const int e = static_cast<int>(exp) - 127;
  if (e >= 16) return sign | 0x7C00u;  // already past the largest half
  if (e >= -14) {
    // Normal range: exponent re-biased, mantissa narrowed 23 -> 10 bits.
    // A mantissa carry propagates into the exponent, and 0x7BFF + 1 = 0x7C00
    // turns the boundary case (≥ 65520) into inf, exactly as RNE demands.
    std::uint32_t half = (static_cast<std::uint32_t>(e + 15) << 10) | (mant >> 13);
    const std::uint32_t dropped = mant & 0x1FFFu;
    if (dropped > 0x1000u || (dropped == 0x1000u && (half & 1))) ++half;
    if (half >= 0x7C00u) return sign | 0x7C00u;
    return static_cast<std::uint16_t>(sign | half);
  }
  if (e < -25) return sign;  // below half of the smallest subnormal
  // Subnormal: value = (2^23 + mant)·2^(e−23); quantum is 2^−24, so the
  // quantized mantissa is that 24-bit significand shifted right by −e−1.
  // A carry out of 10 bits lands on 0x0400, the smallest normal — correct.
  const std::uint32_t sig = mant | 0x800000u;
  return static_cast<std::uint16_t>(sign | shift_rne(sig, -e - 1));
}

float fp16_to_fp32(std::uint16_t bits) {
  const std::uint32_t sign = static_cast<std::uint32_t>(bits & 0x8000u) << 16;
  const std::uint32_t exp = (bits >> 10) & 0x1Fu;
  std::uint32_t mant = bits & 0x3FFu;

  std::uint32_t out;
  if (exp == 0) {
    if (mant == 0) {
      out = sign;  // ±0
    } else {
      // Subnormal half: renormalize into an f32 normal (f32 has the range).
      // mant·2^−24 with top bit at position p gives exponent p−24 = −14−shifts.
      int e = -14;
      while (!(mant & 0x400u)) {
        mant <<= 1;
        --e;
      }
      mant &= 0x3FFu;
      out = sign | (static_cast<std::uint32_t>(e + 127) << 23) | (mant << 13);
    }
  } else if (exp == 31) {
    out = sign | 0x7F800000u | (mant << 13);  // inf or NaN, payload widened
  } else {
    out = sign | ((exp - 15 + 127) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(out);
}

}  // namespace inferlab::fp16
