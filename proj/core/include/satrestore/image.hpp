#pragma once

#include <cstddef>
#include <vector>

#include "satrestore/errors.hpp"

namespace satrestore {

// Single-band raster, row-major, values in normalized units (nominally [0, 1]
// for imagery, but solvers operate on arbitrary finite reals).
struct ImageGrid {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  ImageGrid() = default;
  ImageGrid(int h, int w, double fill = 0.0) : height(h), width(w) {
    if (h < 0 || w < 0) throw DimensionError("ImageGrid: negative dimensions");
    data.assign(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill);
  }

  std::size_t size() const { return data.size(); }
  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
  bool same_shape(const ImageGrid& o) const {
    return height == o.height && width == o.width;
  }
};

void require_same_shape(const ImageGrid& a, const ImageGrid& b, const char* where);

double mean_of(const ImageGrid& x);
double min_of(const ImageGrid& x);
double max_of(const ImageGrid& x);
double dot(const ImageGrid& a, const ImageGrid& b);
double norm_l2(const ImageGrid& x);
double norm_linf(const ImageGrid& x);
double mse(const ImageGrid& a, const ImageGrid& b);
bool all_finite(const ImageGrid& x);

// a + s * b
ImageGrid add_scaled(const ImageGrid& a, double s, const ImageGrid& b);

}  // namespace satrestore
