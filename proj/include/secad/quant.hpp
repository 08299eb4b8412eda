#pragma once

#include <algorithm>
#include <cmath>

namespace secad {

// Every numeric token lives on a 64-value grid. Three dequantization maps
// share it:
//   coordinates  v -> v/64            in [0, 1)
//   signed       v -> (v-32)/31       exact -1, 0, +1 at v = 1, 32, 63
//   scale        v -> (v+1)/32        in (0, 2], exact 1 at v = 31
// The signed map leaves v=0 as an out-of-band spare the quantizer never
// emits; in exchange the identity rotation and zero translation are exactly
// representable, which the orthonormality tolerance (1e-3) requires.
inline constexpr int kGrid = 64;

inline int clamp_token(int v, int grid = kGrid) {
  return std::clamp(v, 0, grid - 1);
}

inline double dequant_coord(int v, int grid = kGrid) {
  return static_cast<double>(v) / grid;
}

inline int quant_coord(double u, int grid = kGrid) {
  return clamp_token(static_cast<int>(std::lround(u * grid)), grid);
}

inline double dequant_signed(int v, int grid = kGrid) {
  const int half = grid / 2;
  return static_cast<double>(v - half) / (half - 1);
}

inline int quant_signed(double x, int grid = kGrid) {
  const int half = grid / 2;
  const int v = half + static_cast<int>(std::lround(x * (half - 1)));
  return std::clamp(v, 1, grid - 1);  // v=0 stays out of band
}

inline double dequant_scale(int v, int grid = kGrid) {
  const int half = grid / 2;
  return static_cast<double>(v + 1) / half;
}

inline int quant_scale(double s, int grid = kGrid) {
  const int half = grid / 2;
  return clamp_token(static_cast<int>(std::lround(s * half)) - 1, grid);
}

}  // namespace secad
