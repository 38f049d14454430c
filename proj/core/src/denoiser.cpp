#include "satrestore/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "satrestore/dct.hpp"

namespace satrestore {
namespace {

// div p, the adjoint of circular forward differences. Wrapping keeps the
// denoiser on the same boundary convention as every other operator, so a
// solve on a wrapped crop matches the same solve on the full grid.
void divergence(const ImageGrid& p1, const ImageGrid& p2, ImageGrid& out) {
  const int h = out.height, w = out.width;
  for (int r = 0; r < h; ++r) {
    const int rm = r == 0 ? h - 1 : r - 1;
    for (int c = 0; c < w; ++c) {
      const int cm = c == 0 ? w - 1 : c - 1;
      out.at(r, c) = p1.at(r, c) - p1.at(rm, c) + p2.at(r, c) - p2.at(r, cm);
    }
  }
}

std::vector<int> window_starts(int dim, int block, int stride) {
  std::vector<int> starts;
  for (int s = 0; s + block <= dim; s += stride) starts.push_back(s);
  if (starts.empty() || starts.back() + block < dim) starts.push_back(dim - block);
  return starts;
}

ImageGrid dct_shrink(const ImageGrid& x, double sigma_d, const Denoiser& d) {
  const int bh = std::min(d.dct_block, x.height);
  const int bw = std::min(d.dct_block, x.width);
  const std::vector<double> Bh = dct_basis(bh);
  const std::vector<double> Bw = dct_basis(bw);
  const double thresh = d.dct_thresh * sigma_d;

  ImageGrid acc(x.height, x.width);
  ImageGrid count(x.height, x.width);
  std::vector<double> win(static_cast<std::size_t>(bh) * bw);
  std::vector<double> tmp(win.size());
  std::vector<double> coef(win.size());

  for (int r0 : window_starts(x.height, bh, d.dct_stride)) {
    for (int c0 : window_starts(x.width, bw, d.dct_stride)) {
      for (int r = 0; r < bh; ++r) {
        for (int c = 0; c < bw; ++c) win[static_cast<std::size_t>(r) * bw + c] = x.at(r0 + r, c0 + c);
      }
      // coef = Bh * win * Bw^T
      for (int k = 0; k < bh; ++k) {
        for (int c = 0; c < bw; ++c) {
          double s = 0.0;
          for (int i = 0; i < bh; ++i) s += Bh[static_cast<std::size_t>(k) * bh + i] * win[static_cast<std::size_t>(i) * bw + c];
          tmp[static_cast<std::size_t>(k) * bw + c] = s;
        }
      }
      for (int k = 0; k < bh; ++k) {
        for (int l = 0; l < bw; ++l) {
          double s = 0.0;
          for (int i = 0; i < bw; ++i) s += tmp[static_cast<std::size_t>(k) * bw + i] * Bw[static_cast<std::size_t>(l) * bw + i];
          // Soft-threshold every AC coefficient; the DC tap passes through so
          // constants are fixed points.
          if (k != 0 || l != 0) {
            s = s > thresh ? s - thresh : (s < -thresh ? s + thresh : 0.0);
          }
          coef[static_cast<std::size_t>(k) * bw + l] = s;
        }
      }
      // win = Bh^T * coef * Bw
      for (int r = 0; r < bh; ++r) {
        for (int l = 0; l < bw; ++l) {
          double s = 0.0;
          for (int k = 0; k < bh; ++k) s += Bh[static_cast<std::size_t>(k) * bh + r] * coef[static_cast<std::size_t>(k) * bw + l];
          tmp[static_cast<std::size_t>(r) * bw + l] = s;
        }
      }
      for (int r = 0; r < bh; ++r) {
        for (int c = 0; c < bw; ++c) {
          double s = 0.0;
          for (int l = 0; l < bw; ++l) s += tmp[static_cast<std::size_t>(r) * bw + l] * Bw[static_cast<std::size_t>(l) * bw + c];
          acc.at(r0 + r, c0 + c) += s;
          count.at(r0 + r, c0 + c) += 1.0;
        }
      }
    }
  }
  for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] /= count.data[i];
  return acc;
}

ImageGrid cnn_denoise(const ImageGrid& x, double sigma_d, const Denoiser& d) {
  if (!d.net) throw ConfigError("denoise: cnn denoiser has no loaded network");
  Tensor3 in(2, x.height, x.width);
  for (int r = 0; r < x.height; ++r) {
    for (int c = 0; c < x.width; ++c) {
      in.at(0, r, c) = x.at(r, c);
      in.at(1, r, c) = sigma_d;
    }
  }
  const Tensor3 out = d.net->forward(in);
  if (out.c != 1 || out.h != x.height || out.w != x.width) {
    throw ConfigError("denoise: network output shape " + std::to_string(out.c) + "x" +
                      std::to_string(out.h) + "x" + std::to_string(out.w) +
                      " does not match the 1-band input size");
  }
  ImageGrid img(x.height, x.width);
  img.data.assign(out.v.begin(), out.v.end());
  return img;
}

}  // namespace

ImageGrid tv_prox(const ImageGrid& x, double weight, int iters, double step) {
  if (weight <= 0.0) return x;
  ImageGrid p1(x.height, x.width), p2(x.height, x.width);
  ImageGrid v(x.height, x.width);
  for (int it = 0; it < iters; ++it) {
    divergence(p1, p2, v);
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] -= x.data[i] / weight;
    for (int r = 0; r < x.height; ++r) {
      const int rp = r + 1 == x.height ? 0 : r + 1;
      for (int c = 0; c < x.width; ++c) {
        const int cp = c + 1 == x.width ? 0 : c + 1;
        const double gx = v.at(rp, c) - v.at(r, c);
        const double gy = v.at(r, cp) - v.at(r, c);
        const double denom = 1.0 + step * std::sqrt(gx * gx + gy * gy);
        p1.at(r, c) = (p1.at(r, c) + step * gx) / denom;
        p2.at(r, c) = (p2.at(r, c) + step * gy) / denom;
      }
    }
  }
  divergence(p1, p2, v);
  ImageGrid u = x;
  for (std::size_t i = 0; i < u.data.size(); ++i) u.data[i] -= weight * v.data[i];
  return u;
}

double total_variation(const ImageGrid& x) {
  double tv = 0.0;
  for (int r = 0; r < x.height; ++r) {
    const int rp = r + 1 == x.height ? 0 : r + 1;
    for (int c = 0; c < x.width; ++c) {
      const int cp = c + 1 == x.width ? 0 : c + 1;
      const double gx = x.at(rp, c) - x.at(r, c);
      const double gy = x.at(r, cp) - x.at(r, c);
      tv += std::sqrt(gx * gx + gy * gy);
    }
  }
  return tv;
}

Denoiser make_tv_denoiser(int iters, double step, double weight) {
  if (iters < 1 || step <= 0.0 || weight <= 0.0) {
    throw ConfigError("make_tv_denoiser: iters, step, weight must be positive");
  }
  Denoiser d;
  d.kind = DenoiserKind::TvChambolle;
  d.tv_iters = iters;
  d.tv_step = step;
  d.tv_weight = weight;
  return d;
}

Denoiser make_dct_denoiser(int block, int stride, double thresh) {
  if (block < 2 || stride < 1 || thresh <= 0.0) {
    throw ConfigError("make_dct_denoiser: invalid block/stride/threshold");
  }
  Denoiser d;
  d.kind = DenoiserKind::DctShrinkage;
  d.dct_block = block;
  d.dct_stride = stride;
  d.dct_thresh = thresh;
  return d;
}

Denoiser load_cnn_denoiser(const std::string& manifest_path) {
  WeightsFile wf = load_weights_file(manifest_path);
  auto it = wf.networks.find("denoiser");
  if (it == wf.networks.end()) {
    if (wf.networks.size() == 1) {
      it = wf.networks.begin();
    } else {
      throw DataError(manifest_path + ": no \"denoiser\" network in manifest");
    }
  }
  // Reference-shape walk: 2 channels in (image + noise plane), 1 out, spatial
  // size preserved.
  const auto out = it->second.infer_shape({2, 32, 32});
  if (out[0] != 1 || out[1] != 32 || out[2] != 32) {
    throw DataError(manifest_path + ": denoiser must map 2xHxW to 1xHxW, got " +
                    std::to_string(out[0]) + "x" + std::to_string(out[1]) + "x" +
                    std::to_string(out[2]) + " for a 2x32x32 input");
  }
  Denoiser d;
  d.kind = DenoiserKind::Cnn;
  d.net = std::make_shared<Network>(std::move(it->second));
  return d;
}

ImageGrid denoise(const ImageGrid& x, double sigma_d, const Denoiser& d) {
  if (!(sigma_d > 0.0) || sigma_d > 1.0) {
    throw ConfigError("denoise: sigma_d must lie in (0, 1]");
  }
  if (x.height == 0 || x.width == 0) throw DimensionError("denoise: empty image");
  switch (d.kind) {
    case DenoiserKind::TvChambolle:
      return tv_prox(x, d.tv_weight * sigma_d, d.tv_iters, d.tv_step);
    case DenoiserKind::DctShrinkage:
      return dct_shrink(x, sigma_d, d);
    case DenoiserKind::Cnn:
      return cnn_denoise(x, sigma_d, d);
  }
  throw ConfigError("denoise: unknown denoiser kind");
}

Denoiser parse_denoiser_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string name = spec.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);

  if (name == "cnn") {
    if (rest.empty()) throw ConfigError("denoiser spec: cnn requires a manifest path");
    return load_cnn_denoiser(rest);
  }

  auto get_kv = [&](const std::string& args) {
    std::vector<std::pair<std::string, double>> kv;
    std::size_t pos = 0;
    while (pos < args.size()) {
      auto comma = args.find(',', pos);
      if (comma == std::string::npos) comma = args.size();
      const std::string item = args.substr(pos, comma - pos);
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("denoiser spec: expected key=value in \"" + item + "\"");
      try {
        kv.emplace_back(item.substr(0, eq), std::stod(item.substr(eq + 1)));
      } catch (const std::exception&) {
        throw ConfigError("denoiser spec: bad numeric value in \"" + item + "\"");
      }
      pos = comma + 1;
    }
    return kv;
  };

  if (name == "tv") {
    Denoiser d = make_tv_denoiser();
    for (const auto& [k, v] : get_kv(rest)) {
      if (k == "iters") d.tv_iters = static_cast<int>(v);
      else if (k == "step") d.tv_step = v;
      else if (k == "weight") d.tv_weight = v;
      else throw ConfigError("denoiser spec: unknown tv option \"" + k + "\"");
    }
    return d;
  }
  if (name == "dct") {
    Denoiser d = make_dct_denoiser();
    for (const auto& [k, v] : get_kv(rest)) {
      if (k == "block") d.dct_block = static_cast<int>(v);
      else if (k == "stride") d.dct_stride = static_cast<int>(v);
      else if (k == "thresh") d.dct_thresh = v;
      else throw ConfigError("denoiser spec: unknown dct option \"" + k + "\"");
    }
    return d;
  }
  throw ConfigError("denoiser spec: unknown denoiser \"" + name + "\"");
}

}  // namespace satrestore
