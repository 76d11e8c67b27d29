#pragma once

#include <cstdint>

namespace inferlab::fp16 {

// IEEE 754 binary16 conversions, implemented over integer bit patterns so the
// results do not depend on the host rounding mode or x87/SSE quirks.
// fp32_to_fp16 rounds to nearest, ties to even; overflow goes to ±inf,
// subnormals are kept (flushed only below half the smallest subnormal), and
// NaNs are quieted with the top ten payload bits preserved.
std::uint16_t fp32_to_fp16(float x);
float fp16_to_fp32(std::uint16_t bits);

}  // namespace inferlab::fp16
