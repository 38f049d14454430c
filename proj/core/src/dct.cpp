#include "satrestore/dct.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <string>

namespace satrestore {
namespace {

const std::vector<double>& cached_basis(int n) {
  static std::mutex mu;
  static std::map<int, std::vector<double>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, dct_basis(n)).first;
  return it->second;
}

enum class Dir { Forward, Inverse };

// Apply the 1-D transform along rows then columns of each block.
ImageGrid blockwise(const ImageGrid& x, int block, Dir dir) {
  if (block < 1) throw ConfigError("blockwise DCT: block must be >= 1");
  if (x.height % block != 0 || x.width % block != 0) {
    throw DimensionError("blockwise DCT: dimensions must divide by block " +
                         std::to_string(block));
  }
  const std::vector<double>& B = cached_basis(block);
  auto b = [&](int k, int i) {
    return dir == Dir::Forward ? B[static_cast<std::size_t>(k) * block + i]
                               : B[static_cast<std::size_t>(i) * block + k];
  };
  ImageGrid out(x.height, x.width);
  std::vector<double> tmp(static_cast<std::size_t>(block) * block);
  for (int br = 0; br < x.height; br += block) {
    for (int bc = 0; bc < x.width; bc += block) {
      // rows
      for (int r = 0; r < block; ++r) {
        for (int k = 0; k < block; ++k) {
          double acc = 0.0;
          for (int i = 0; i < block; ++i) acc += b(k, i) * x.at(br + r, bc + i);
          tmp[static_cast<std::size_t>(r) * block + k] = acc;
        }
      }
      // columns
      for (int c = 0; c < block; ++c) {
        for (int k = 0; k < block; ++k) {
          double acc = 0.0;
          for (int i = 0; i < block; ++i) acc += b(k, i) * tmp[static_cast<std::size_t>(i) * block + c];
          out.at(br + k, bc + c) = acc;
        }
      }
    }
  }
  return out;
}

}  // namespace

std::vector<double> dct_basis(int n) {
  std::vector<double> B(static_cast<std::size_t>(n) * n);
  const double a0 = std::sqrt(1.0 / n);
  const double ak = std::sqrt(2.0 / n);
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      B[static_cast<std::size_t>(k) * n + i] =
          (k == 0 ? a0 : ak) * std::cos(M_PI * (2.0 * i + 1.0) * k / (2.0 * n));
    }
  }
  return B;
}

ImageGrid dct2_blocks(const ImageGrid& x, int block) { return blockwise(x, block, Dir::Forward); }

ImageGrid idct2_blocks(const ImageGrid& coeffs, int block) {
  return blockwise(coeffs, block, Dir::Inverse);
}

}  // namespace satrestore
