#pragma once

#include <vector>

#include "satrestore/errors.hpp"

namespace satrestore {

// 2-D convolution kernel with odd dimensions so the center tap is unambiguous.
struct Kernel {
  int height = 0;
  int width = 0;
  std::vector<double> taps;  // row-major

  Kernel() = default;
  Kernel(int h, int w) : height(h), width(w) {
    if (h <= 0 || w <= 0 || h % 2 == 0 || w % 2 == 0) {
      throw DimensionError("Kernel: dimensions must be positive and odd");
    }
    taps.assign(static_cast<std::size_t>(h) * w, 0.0);
  }

  double& at(int r, int c) { return taps[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return taps[static_cast<std::size_t>(r) * width + c]; }
  int center_row() const { return height / 2; }
  int center_col() const { return width / 2; }

  double mass() const {
    double s = 0.0;
    for (double t : taps) s += t;
    return s;
  }
  bool is_normalized(double tol = 1e-9) const {
    const double m = mass();
    return m > 1.0 - tol && m < 1.0 + tol;
  }
};

inline Kernel identity_kernel() {
  Kernel k(1, 1);
  k.taps[0] = 1.0;
  return k;
}

// Flip about the center tap; convolution with flipped(k) is correlation with k.
Kernel flipped(const Kernel& k);

// Scale taps so they sum to exactly 1. Throws if the mass is non-positive.
Kernel normalized(const Kernel& k);

}  // namespace satrestore
