#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

namespace varsnn::detail {

// Branch-free float exp with ~2e-7 relative error, written as plain
// arithmetic so the compiler can vectorize the elementwise loops (libm calls
// defeat auto-vectorization without -ffast-math, which we avoid because it
// would strip the non-finite checks the trainer relies on). Doubles keep the
// standard library implementations; they sit on verification paths where
// full precision matters and off the hot loops.
inline float fast_exp(float x) {
  x = x < -87.0f ? -87.0f : (x > 88.0f ? 88.0f : x);
  const float y = x * 1.44269504088896341f;  // log2(e)
  const float n = std::nearbyintf(y);
  const float t = (y - n) * 0.6931471805599453f;  // back to natural scale
  // degree-6 Taylor on |t| <= 0.347
  float p = 1.0f / 720.0f;
  p = p * t + 1.0f / 120.0f;
  p = p * t + 1.0f / 24.0f;
  p = p * t + 1.0f / 6.0f;
  p = p * t + 0.5f;
  p = p * t + 1.0f;
  p = p * t + 1.0f;
  const int32_t e = static_cast<int32_t>(n);
  const float scale = std::bit_cast<float>(static_cast<uint32_t>(e + 127) << 23);
  return p * scale;
}

inline float scalar_exp(float x) { return fast_exp(x); }
inline double scalar_exp(double x) { return std::exp(x); }

inline float scalar_tanh(float x) {
  const float a = std::abs(x) > 9.0f ? 9.0f : std::abs(x);
  const float e = fast_exp(2.0f * a);
  const float t = (e - 1.0f) / (e + 1.0f);
  return x < 0 ? -t : t;
}
inline double scalar_tanh(double x) { return std::tanh(x); }

inline float scalar_sigmoid(float x) { return 1.0f / (1.0f + fast_exp(-x)); }
inline double scalar_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace varsnn::detail
