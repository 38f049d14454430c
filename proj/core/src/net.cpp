#include "satrestore/net.hpp"

#include <openssl/evp.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace satrestore {
namespace {

std::string layer_label(std::size_t index, const LayerDesc& l) {
  return "layer " + std::to_string(index) + " (" + layer_kind_name(l.kind) + ")";
}

void conv2d_forward(const LayerDesc& l, const double* w, const Tensor3& in, Tensor3& out) {
  for (int oc = 0; oc < l.out_ch; ++oc) {
    for (int orr = 0; orr < out.h; ++orr) {
      for (int occ = 0; occ < out.w; ++occ) {
        double acc = 0.0;
        for (int ic = 0; ic < l.in_ch; ++ic) {
          const double* wk = w + ((static_cast<std::size_t>(oc) * l.in_ch + ic) * l.kh) * l.kw;
          for (int i = 0; i < l.kh; ++i) {
            const int r = orr * l.stride - l.pad + i;
            if (r < 0 || r >= in.h) continue;
            for (int j = 0; j < l.kw; ++j) {
              const int c = occ * l.stride - l.pad + j;
              if (c < 0 || c >= in.w) continue;
              acc += wk[i * l.kw + j] * in.at(ic, r, c);
            }
          }
        }
        out.at(oc, orr, occ) = acc;
      }
    }
  }
}

void conv2d_vjp(const LayerDesc& l, const double* w, const Tensor3& cot, Tensor3& gin) {
  for (int oc = 0; oc < l.out_ch; ++oc) {
    for (int orr = 0; orr < cot.h; ++orr) {
      for (int occ = 0; occ < cot.w; ++occ) {
        const double g = cot.at(oc, orr, occ);
        if (g == 0.0) continue;
        for (int ic = 0; ic < l.in_ch; ++ic) {
          const double* wk = w + ((static_cast<std::size_t>(oc) * l.in_ch + ic) * l.kh) * l.kw;
          for (int i = 0; i < l.kh; ++i) {
            const int r = orr * l.stride - l.pad + i;
            if (r < 0 || r >= gin.h) continue;
            for (int j = 0; j < l.kw; ++j) {
              const int c = occ * l.stride - l.pad + j;
              if (c < 0 || c >= gin.w) continue;
              gin.at(ic, r, c) += wk[i * l.kw + j] * g;
            }
          }
        }
      }
    }
  }
}

void convt2d_forward(const LayerDesc& l, const double* w, const Tensor3& in, Tensor3& out) {
  for (int ic = 0; ic < l.in_ch; ++ic) {
    for (int ir = 0; ir < in.h; ++ir) {
      for (int jc = 0; jc < in.w; ++jc) {
        const double x = in.at(ic, ir, jc);
        if (x == 0.0) continue;
        for (int oc = 0; oc < l.out_ch; ++oc) {
          const double* wk = w + ((static_cast<std::size_t>(ic) * l.out_ch + oc) * l.kh) * l.kw;
          for (int i = 0; i < l.kh; ++i) {
            const int r = ir * l.stride - l.pad + i;
            if (r < 0 || r >= out.h) continue;
            for (int j = 0; j < l.kw; ++j) {
              const int c = jc * l.stride - l.pad + j;
              if (c < 0 || c >= out.w) continue;
              out.at(oc, r, c) += wk[i * l.kw + j] * x;
            }
          }
        }
      }
    }
  }
}

void convt2d_vjp(const LayerDesc& l, const double* w, const Tensor3& cot, Tensor3& gin) {
  for (int ic = 0; ic < l.in_ch; ++ic) {
    for (int ir = 0; ir < gin.h; ++ir) {
      for (int jc = 0; jc < gin.w; ++jc) {
        double acc = 0.0;
        for (int oc = 0; oc < l.out_ch; ++oc) {
          const double* wk = w + ((static_cast<std::size_t>(ic) * l.out_ch + oc) * l.kh) * l.kw;
          for (int i = 0; i < l.kh; ++i) {
            const int r = ir * l.stride - l.pad + i;
            if (r < 0 || r >= cot.h) continue;
            for (int j = 0; j < l.kw; ++j) {
              const int c = jc * l.stride - l.pad + j;
              if (c < 0 || c >= cot.w) continue;
              acc += wk[i * l.kw + j] * cot.at(oc, r, c);
            }
          }
        }
        gin.at(ic, ir, jc) = acc;
      }
    }
  }
}

Tensor3 forward_one(const LayerDesc& l, const double* wbase, const Tensor3& cur,
                    const std::string& label) {
  switch (l.kind) {
    case LayerKind::Conv2d: {
      if (cur.c != l.in_ch) throw DimensionError(label + ": channel mismatch");
      const int oh = (cur.h + 2 * l.pad - l.kh) / l.stride + 1;
      const int ow = (cur.w + 2 * l.pad - l.kw) / l.stride + 1;
      if (oh <= 0 || ow <= 0) throw DimensionError(label + ": input too small");
      Tensor3 out(l.out_ch, oh, ow);
      conv2d_forward(l, wbase + l.offset, cur, out);
      return out;
    }
    case LayerKind::ConvTranspose2d: {
      if (cur.c != l.in_ch) throw DimensionError(label + ": channel mismatch");
      const int oh = (cur.h - 1) * l.stride - 2 * l.pad + l.kh;
      const int ow = (cur.w - 1) * l.stride - 2 * l.pad + l.kw;
      if (oh <= 0 || ow <= 0) throw DimensionError(label + ": input too small");
      Tensor3 out(l.out_ch, oh, ow);
      convt2d_forward(l, wbase + l.offset, cur, out);
      return out;
    }
    case LayerKind::Relu: {
      Tensor3 out = cur;
      for (double& v : out.v) v = v > 0.0 ? v : 0.0;
      return out;
    }
    case LayerKind::LeakyRelu: {
      Tensor3 out = cur;
      for (double& v : out.v) v = v > 0.0 ? v : l.slope * v;
      return out;
    }
    case LayerKind::AddBias: {
      if (cur.c != l.out_ch) throw DimensionError(label + ": channel mismatch");
      Tensor3 out = cur;
      const double* b = wbase + l.offset;
      for (int ch = 0; ch < out.c; ++ch) {
        for (int r = 0; r < out.h; ++r) {
          for (int c2 = 0; c2 < out.w; ++c2) out.at(ch, r, c2) += b[ch];
        }
      }
      return out;
    }
  }
  throw ConfigError(label + ": unknown layer kind");
}

}  // namespace

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::ConvTranspose2d: return "conv_transpose2d";
    case LayerKind::Relu: return "relu";
    case LayerKind::LeakyRelu: return "leaky_relu";
    case LayerKind::AddBias: return "add_bias";
  }
  return "?";
}

std::size_t LayerDesc::weight_count() const {
  switch (kind) {
    case LayerKind::Conv2d:
    case LayerKind::ConvTranspose2d:
      return static_cast<std::size_t>(in_ch) * out_ch * kh * kw;
    case LayerKind::AddBias:
      return static_cast<std::size_t>(out_ch);
    default:
      return 0;
  }
}

std::array<int, 3> Network::infer_shape(const std::array<int, 3>& in) const {
  if (layers.empty()) throw DataError("network has zero layers");
  std::array<int, 3> s = in;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerDesc& l = layers[i];
    switch (l.kind) {
      case LayerKind::Conv2d: {
        if (s[0] != l.in_ch) {
          throw DataError(layer_label(i, l) + ": expects " + std::to_string(l.in_ch) +
                          " input channels, got " + std::to_string(s[0]));
        }
        const int oh = (s[1] + 2 * l.pad - l.kh) / l.stride + 1;
        const int ow = (s[2] + 2 * l.pad - l.kw) / l.stride + 1;
        if (oh <= 0 || ow <= 0) throw DataError(layer_label(i, l) + ": output collapses to zero");
        s = {l.out_ch, oh, ow};
        break;
      }
      case LayerKind::ConvTranspose2d: {
        if (s[0] != l.in_ch) {
          throw DataError(layer_label(i, l) + ": expects " + std::to_string(l.in_ch) +
                          " input channels, got " + std::to_string(s[0]));
        }
        const int oh = (s[1] - 1) * l.stride - 2 * l.pad + l.kh;
        const int ow = (s[2] - 1) * l.stride - 2 * l.pad + l.kw;
        if (oh <= 0 || ow <= 0) throw DataError(layer_label(i, l) + ": output collapses to zero");
        s = {l.out_ch, oh, ow};
        break;
      }
      case LayerKind::AddBias:
        if (s[0] != l.out_ch) {
          throw DataError(layer_label(i, l) + ": bias has " + std::to_string(l.out_ch) +
                          " channels, input has " + std::to_string(s[0]));
        }
        break;
      case LayerKind::Relu:
      case LayerKind::LeakyRelu:
        break;
    }
  }
  return s;
}

Tensor3 Network::forward(const Tensor3& in) const {
  if (layers.empty()) throw DataError("network has zero layers");
  Tensor3 cur = in;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    cur = forward_one(layers[i], weights.data(), cur, layer_label(i, layers[i]));
  }
  return cur;
}

Tensor3 Network::vjp(const Tensor3& in, const Tensor3& cotangent) const {
  if (layers.empty()) throw DataError("network has zero layers");
  // Forward pass keeping every activation, then walk backwards.
  std::vector<Tensor3> acts;
  acts.reserve(layers.size() + 1);
  acts.push_back(in);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    acts.push_back(forward_one(layers[i], weights.data(), acts.back(), layer_label(i, layers[i])));
  }
  if (!acts.back().same_shape(cotangent)) {
    throw DimensionError("vjp: cotangent shape does not match network output");
  }
  Tensor3 g = cotangent;
  for (std::size_t ri = layers.size(); ri-- > 0;) {
    const LayerDesc& l = layers[ri];
    const Tensor3& input = acts[ri];
    switch (l.kind) {
      case LayerKind::Conv2d: {
        Tensor3 gin(input.c, input.h, input.w);
        conv2d_vjp(l, weights.data() + l.offset, g, gin);
        g = std::move(gin);
        break;
      }
      case LayerKind::ConvTranspose2d: {
        Tensor3 gin(input.c, input.h, input.w);
        convt2d_vjp(l, weights.data() + l.offset, g, gin);
        g = std::move(gin);
        break;
      }
      case LayerKind::Relu:
        for (std::size_t i = 0; i < g.v.size(); ++i) {
          if (input.v[i] <= 0.0) g.v[i] = 0.0;
        }
        break;
      case LayerKind::LeakyRelu:
        for (std::size_t i = 0; i < g.v.size(); ++i) {
          if (input.v[i] <= 0.0) g.v[i] *= l.slope;
        }
        break;
      case LayerKind::AddBias:
        break;  // identity in the input direction
    }
  }
  return g;
}

std::string sha256_hex(const void* data, std::size_t bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, bytes, digest, &len, EVP_sha256(), nullptr) != 1) {
    throw NumericalError("sha256: digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

namespace {

LayerDesc parse_layer(const nlohmann::json& j, std::size_t index) {
  LayerDesc l;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "conv2d" || kind == "conv_transpose2d") {
    l.kind = kind == "conv2d" ? LayerKind::Conv2d : LayerKind::ConvTranspose2d;
    l.in_ch = j.at("in_ch").get<int>();
    l.out_ch = j.at("out_ch").get<int>();
    l.kh = j.at("kh").get<int>();
    l.kw = j.at("kw").get<int>();
    l.stride = j.value("stride", 1);
    l.pad = j.value("pad", 0);
    l.offset = j.at("offset").get<std::size_t>();
    if (l.in_ch <= 0 || l.out_ch <= 0 || l.kh <= 0 || l.kw <= 0 || l.stride <= 0 || l.pad < 0) {
      throw DataError("layer " + std::to_string(index) + " (" + kind + "): invalid geometry");
    }
  } else if (kind == "relu") {
    l.kind = LayerKind::Relu;
  } else if (kind == "leaky_relu") {
    l.kind = LayerKind::LeakyRelu;
    l.slope = j.value("slope", 0.01);
  } else if (kind == "add_bias") {
    l.kind = LayerKind::AddBias;
    l.out_ch = j.at("channels").get<int>();
    l.in_ch = l.out_ch;
    l.offset = j.at("offset").get<std::size_t>();
    if (l.out_ch <= 0) {
      throw DataError("layer " + std::to_string(index) + " (add_bias): invalid channel count");
    }
  } else {
    throw DataError("layer " + std::to_string(index) + ": unsupported kind \"" + kind + "\"");
  }
  return l;
}

}  // namespace

WeightsFile load_weights_file(const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw DataError(manifest_path + ": cannot open");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest_path + ": invalid JSON (" + e.what() + ")");
  }

  std::vector<float> blob;
  std::string declared_sha;
  try {
    const std::string blob_file = j.at("blob_file").get<std::string>();
    declared_sha = j.at("blob_sha256").get<std::string>();
    const auto bp = std::filesystem::path(manifest_path).parent_path() / blob_file;
    std::ifstream bs(bp, std::ios::binary);
    if (!bs) throw DataError(bp.string() + ": cannot open weights blob");
    bs.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(bs.tellg());
    bs.seekg(0);
    if (bytes % sizeof(float) != 0) {
      throw DataError(bp.string() + ": blob size " + std::to_string(bytes) +
                      " is not a multiple of 4");
    }
    blob.resize(bytes / sizeof(float));
    if (bytes > 0 && !bs.read(reinterpret_cast<char*>(blob.data()),
                              static_cast<std::streamsize>(bytes))) {
      throw DataError(bp.string() + ": short read");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest_path + ": missing or mistyped field (" + std::string(e.what()) + ")");
  }

  const std::string actual_sha = sha256_hex(blob.data(), blob.size() * sizeof(float));
  if (actual_sha != declared_sha) {
    throw DataError(manifest_path + ": blob checksum mismatch (manifest " + declared_sha +
                    ", blob " + actual_sha + ")");
  }

  WeightsFile out;
  try {
    const auto& nets = j.at("networks");
    if (!nets.is_object() || nets.empty()) {
      throw DataError(manifest_path + ": manifest declares no networks");
    }
    for (const auto& [name, layers_json] : nets.items()) {
      Network net;
      net.weights.assign(blob.begin(), blob.end());
      if (!layers_json.is_array() || layers_json.empty()) {
        throw DataError(manifest_path + ": network \"" + name + "\" has zero layers");
      }
      for (std::size_t i = 0; i < layers_json.size(); ++i) {
        LayerDesc l = parse_layer(layers_json[i], i);
        const std::size_t need = l.offset + l.weight_count();
        if (need > blob.size()) {
          throw DataError(manifest_path + ": weights blob truncated for network \"" + name +
                          "\" layer " + std::to_string(i) + " (" + layer_kind_name(l.kind) +
                          "): needs bytes up to " + std::to_string(need * sizeof(float)) +
                          ", blob has " + std::to_string(blob.size() * sizeof(float)));
        }
        net.layers.push_back(l);
      }
      out.networks.emplace(name, std::move(net));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest_path + ": malformed network table (" + std::string(e.what()) + ")");
  }
  return out;
}

void save_weights_file(const std::string& manifest_path,
                       const std::map<std::string, std::vector<LayerDesc>>& networks,
                       const std::vector<float>& blob) {
  const std::filesystem::path mp(manifest_path);
  std::filesystem::path bp = mp;
  bp.replace_extension(".bin");

  std::ofstream bs(bp, std::ios::binary);
  if (!bs) throw DataError(bp.string() + ": cannot open for writing");
  bs.write(reinterpret_cast<const char*>(blob.data()),
           static_cast<std::streamsize>(blob.size() * sizeof(float)));
  bs.close();

  nlohmann::json j;
  j["format"] = "satrestore-weights-v1";
  j["blob_file"] = bp.filename().string();
  j["blob_sha256"] = sha256_hex(blob.data(), blob.size() * sizeof(float));
  nlohmann::json nets = nlohmann::json::object();
  for (const auto& [name, layers] : networks) {
    nlohmann::json arr = nlohmann::json::array();
    for (const LayerDesc& l : layers) {
      nlohmann::json lj;
      lj["kind"] = layer_kind_name(l.kind);
      switch (l.kind) {
        case LayerKind::Conv2d:
        case LayerKind::ConvTranspose2d:
          lj["in_ch"] = l.in_ch;
          lj["out_ch"] = l.out_ch;
          lj["kh"] = l.kh;
          lj["kw"] = l.kw;
          lj["stride"] = l.stride;
          lj["pad"] = l.pad;
          lj["offset"] = l.offset;
          break;
        case LayerKind::AddBias:
          lj["channels"] = l.out_ch;
          lj["offset"] = l.offset;
          break;
        case LayerKind::LeakyRelu:
          lj["slope"] = l.slope;
          break;
        case LayerKind::Relu:
          break;
      }
      arr.push_back(lj);
    }
    nets[name] = arr;
  }
  j["networks"] = nets;
  std::ofstream os(mp);
  if (!os) throw DataError(manifest_path + ": cannot open for writing");
  os << j.dump(2) << "\n";
}

}  // namespace satrestore
