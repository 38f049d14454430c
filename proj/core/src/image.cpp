#include "satrestore/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace satrestore {

void require_same_shape(const ImageGrid& a, const ImageGrid& b, const char* where) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(where) + ": shape mismatch (" +
                         std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                         std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
  }
}

double mean_of(const ImageGrid& x) {
  if (x.data.empty()) return 0.0;
  double s = 0.0;
  for (double v : x.data) s += v;
  return s / static_cast<double>(x.data.size());
}

double min_of(const ImageGrid& x) {
  return *std::min_element(x.data.begin(), x.data.end());
}

double max_of(const ImageGrid& x) {
  return *std::max_element(x.data.begin(), x.data.end());
}

double dot(const ImageGrid& a, const ImageGrid& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

double norm_l2(const ImageGrid& x) { return std::sqrt(dot(x, x)); }

double norm_linf(const ImageGrid& x) {
  double m = 0.0;
  for (double v : x.data) m = std::max(m, std::abs(v));
  return m;
}

double mse(const ImageGrid& a, const ImageGrid& b) {
  require_same_shape(a, b, "mse");
  if (a.data.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

bool all_finite(const ImageGrid& x) {
  for (double v : x.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

ImageGrid add_scaled(const ImageGrid& a, double s, const ImageGrid& b) {
  require_same_shape(a, b, "add_scaled");
  ImageGrid out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += s * b.data[i];
  return out;
}

}  // namespace satrestore
