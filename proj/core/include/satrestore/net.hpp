#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "satrestore/errors.hpp"

namespace satrestore {

// C x H x W tensor of doubles (weights load from f32 and widen losslessly).
struct Tensor3 {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor3() = default;
  Tensor3(int c_, int h_, int w_, double fill = 0.0) : c(c_), h(h_), w(w_) {
    if (c_ < 0 || h_ < 0 || w_ < 0) throw DimensionError("Tensor3: negative dimensions");
    v.assign(static_cast<std::size_t>(c_) * h_ * w_, fill);
  }
  std::size_t size() const { return v.size(); }
  double& at(int ch, int r, int cc) {
    return v[(static_cast<std::size_t>(ch) * h + r) * w + cc];
  }
  double at(int ch, int r, int cc) const {
    return v[(static_cast<std::size_t>(ch) * h + r) * w + cc];
  }
  bool same_shape(const Tensor3& o) const { return c == o.c && h == o.h && w == o.w; }
};

enum class LayerKind { Conv2d, ConvTranspose2d, Relu, LeakyRelu, AddBias };

const char* layer_kind_name(LayerKind k);

struct LayerDesc {
  LayerKind kind = LayerKind::Relu;
  int in_ch = 0, out_ch = 0;  // conv layers; add_bias uses out_ch as channel count
  int kh = 0, kw = 0;
  int stride = 1, pad = 0;
  double slope = 0.01;        // leaky_relu
  std::size_t offset = 0;     // f32-element offset into the weights blob

  // Number of blob elements this layer consumes.
  std::size_t weight_count() const;
};

// A sequential stack over a shared weight vector. Forward-only inference plus
// an exact reverse-mode vector-Jacobian product with respect to the input.
// Weight layouts: conv2d [out][in][kh][kw]; conv_transpose2d [in][out][kh][kw]
// (output size (h-1)*stride - 2*pad + kh); add_bias [channels].
struct Network {
  std::vector<LayerDesc> layers;
  std::vector<double> weights;

  Tensor3 forward(const Tensor3& in) const;
  Tensor3 vjp(const Tensor3& in, const Tensor3& cotangent) const;

  // Walk the layer chain from the given input shape, validating channel and
  // spatial consistency; throws DataError naming the first offending layer.
  std::array<int, 3> infer_shape(const std::array<int, 3>& in) const;
};

// Manifest: JSON file with a "networks" table of layer stacks plus a binary
// little-endian f32 blob, SHA-256-checksummed. Offsets are validated against
// the blob size at load.
struct WeightsFile {
  std::map<std::string, Network> networks;
};
WeightsFile load_weights_file(const std::string& manifest_path);

// Writer used by fixture generators and model-conversion tooling.
void save_weights_file(const std::string& manifest_path,
                       const std::map<std::string, std::vector<LayerDesc>>& networks,
                       const std::vector<float>& blob);

std::string sha256_hex(const void* data, std::size_t bytes);

}  // namespace satrestore
