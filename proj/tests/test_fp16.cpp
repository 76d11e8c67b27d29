#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "inferlab/common.hpp"
#include "inferlab/fp16.hpp"

using inferlab::fp16::fp16_to_fp32;
using inferlab::fp16::fp32_to_fp16;

namespace {

// Independent oracle: the real value of a finite half pattern, straight from
// the IEEE formula. Exact in double (worst case needs 11 significand bits).
double half_value(std::uint16_t h) {
  const double sign = (h & 0x8000) ? -1.0 : 1.0;
  const int exp = (h >> 10) & 0x1F;
  const int mant = h & 0x3FF;
  if (exp == 0) return sign * std::ldexp(mant, -24);
  return sign * std::ldexp(1024 + mant, exp - 25);
}

// Brute-force RNE oracle: nearest finite half by linear scan, ties to the
// pattern with even mantissa; magnitudes at or past 65520 round to inf.
std::uint16_t oracle_to_fp16(float f) {
  const std::uint16_t sign = std::signbit(f) ? 0x8000 : 0x0000;
  const double a = std::fabs(static_cast<double>(f));
  if (a >= 65520.0) return sign | 0x7C00;
  std::uint16_t best = 0;
  double best_diff = std::numeric_limits<double>::infinity();
  for (std::uint16_t m = 0; m <= 0x7BFF; ++m) {
    const double d = std::fabs(half_value(m) - a);
    if (d < best_diff || (d == best_diff && (m & 1) == 0)) {
      best_diff = d;
      best = m;
    }
  }
  return sign | best;
}

float f32_from_bits(std::uint32_t u) {
  float f;
  std::memcpy(&f, &u, sizeof(f));
  return f;
}

}  // namespace

TEST_CASE("anchor encodings") {
  CHECK(fp32_to_fp16(0.0f) == 0x0000);
  CHECK(fp32_to_fp16(-0.0f) == 0x8000);
  CHECK(fp32_to_fp16(1.0f) == 0x3C00);
  CHECK(fp32_to_fp16(-1.0f) == 0xBC00);
  CHECK(fp32_to_fp16(2.0f) == 0x4000);
  CHECK(fp32_to_fp16(0.5f) == 0x3800);
  CHECK(fp32_to_fp16(65504.0f) == 0x7BFF);  // largest finite half
  CHECK(fp32_to_fp16(65520.0f) == 0x7C00);  // boundary tie rounds to inf
  CHECK(fp32_to_fp16(65519.0f) == 0x7BFF);
  CHECK(fp32_to_fp16(1e9f) == 0x7C00);
  CHECK(fp32_to_fp16(std::numeric_limits<float>::infinity()) == 0x7C00);
  CHECK(fp32_to_fp16(-std::numeric_limits<float>::infinity()) == 0xFC00);
  CHECK(fp32_to_fp16(std::ldexp(1.0f, -24)) == 0x0001);  // smallest subnormal
  CHECK(fp32_to_fp16(std::ldexp(1.0f, -14)) == 0x0400);  // smallest normal
  CHECK(fp32_to_fp16(std::ldexp(1.0f, -15)) == 0x0200);
  CHECK(fp32_to_fp16(std::ldexp(1.0f, -25)) == 0x0000);  // tie at zero, even
}

TEST_CASE("ties go to even") {
  // 1 + 2^-11 sits exactly between 0x3C00 and 0x3C01.
  CHECK(fp32_to_fp16(1.0f + std::ldexp(1.0f, -11)) == 0x3C00);
  // 1 + 3*2^-11 sits exactly between 0x3C01 and 0x3C02.
  CHECK(fp32_to_fp16(1.0f + 3 * std::ldexp(1.0f, -11)) == 0x3C02);
  // Just above a tie rounds up.
  CHECK(fp32_to_fp16(1.0f + std::ldexp(1.0f, -11) + std::ldexp(1.0f, -20)) == 0x3C01);
  // Subnormal tie: 1.5 * 2^-25 is nearer to 2^-24 than to 0.
  CHECK(fp32_to_fp16(3 * std::ldexp(1.0f, -26)) == 0x0001);
}

TEST_CASE("NaNs are quieted with payload kept") {
  const std::uint16_t q = fp32_to_fp16(std::numeric_limits<float>::quiet_NaN());
  CHECK((q & 0x7C00) == 0x7C00);
  CHECK((q & 0x03FF) != 0);
  CHECK((q & 0x0200) != 0);

  // Signaling-style payload: quiet bit forced on, top payload bits survive.
  const std::uint16_t s = fp32_to_fp16(f32_from_bits(0x7F800000u | (0x155u << 13)));
  CHECK((s & 0x0200) != 0);
  CHECK((s & 0x03FF) == (0x155 | 0x200));

  const float back = fp16_to_fp32(q);
  CHECK(std::isnan(back));
}

TEST_CASE("fp16_to_fp32 matches the value oracle on every pattern") {
  for (std::uint32_t h = 0; h <= 0xFFFF; ++h) {
    const auto u = static_cast<std::uint16_t>(h);
    const int exp = (u >> 10) & 0x1F;
    const float f = fp16_to_fp32(u);
    if (exp == 31) {
      if ((u & 0x3FF) == 0) {
        CHECK(std::isinf(f));
        CHECK(std::signbit(f) == ((u & 0x8000) != 0));
      } else {
        CHECK(std::isnan(f));
      }
      continue;
    }
    CHECK(static_cast<double>(f) == half_value(u));
    if (u == 0x8000) CHECK(std::signbit(f));
  }
}

TEST_CASE("round trip half -> float -> half is the identity off NaNs") {
  for (std::uint32_t h = 0; h <= 0xFFFF; ++h) {
    const auto u = static_cast<std::uint16_t>(h);
    if (((u >> 10) & 0x1F) == 31 && (u & 0x3FF) != 0) continue;
    CHECK(fp32_to_fp16(fp16_to_fp32(u)) == u);
  }
}

TEST_CASE("converter equals brute-force RNE oracle on random floats") {
  inferlab::SplitMix64 rng(7);
  int checked = 0;
  while (checked < 400) {
    // Bias the samples toward the half-precision range.
    const std::uint32_t exp = static_cast<std::uint32_t>(96 + rng.uniform_int(0, 63));
    const std::uint32_t bits = (static_cast<std::uint32_t>(rng.next_u64()) & 0x807FFFFFu) |
                               (exp << 23);
    const float f = f32_from_bits(bits);
    if (std::isnan(f)) continue;
    CHECK(fp32_to_fp16(f) == oracle_to_fp16(f));
    ++checked;
  }
}

TEST_CASE("documented conversion examples") {
  CHECK(fp32_to_fp16(65504.0f) == 0x7BFF);
  CHECK(fp16_to_fp32(0x7BFF) == 65504.0f);
  CHECK(fp16_to_fp32(0x0001) == std::ldexp(1.0f, -24));
  CHECK(fp16_to_fp32(0x3C00) == 1.0f);
  // The RNE halfway case explicitly called out for storage-halving weights:
  // 1 + 2^-13 is below half a half-ulp of 1.0 and collapses to 1.0 exactly.
  CHECK(fp16_to_fp32(fp32_to_fp16(1.0f + std::ldexp(1.0f, -13))) == 1.0f);
}
