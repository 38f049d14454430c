#include "satrestore/cae.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "satrestore/dct.hpp"
#include "satrestore/image.hpp"

namespace satrestore {
namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2*pi))

double softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}
double sigmoid(double t) {
  return t > 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

ImageGrid to_image(const Tensor3& t) {
  if (t.c != 1) throw DimensionError("expected a single-channel tensor");
  ImageGrid img(t.h, t.w);
  img.data = t.v;
  return img;
}

Tensor3 to_tensor(const ImageGrid& img) {
  Tensor3 t(1, img.height, img.width);
  t.v = img.data;
  return t;
}

}  // namespace

double latent_prior_logpdf(const GenerativeModel& m, const Tensor3& z, const Tensor3& h) {
  const HyperOut hp = m.hyper(h);
  if (!hp.mu_z.same_shape(z)) {
    throw DimensionError("latent_prior_logpdf: hyper output does not match z");
  }
  double lp = 0.0;
  for (std::size_t i = 0; i < z.v.size(); ++i) {
    const double s = hp.sigma_z.v[i];
    const double d = (z.v[i] - hp.mu_z.v[i]) / s;
    lp += -0.5 * d * d - std::log(s) - kLogSqrt2Pi;
  }
  for (std::size_t i = 0; i < h.v.size(); ++i) {
    lp += -0.5 * h.v[i] * h.v[i] - kLogSqrt2Pi;
  }
  return lp;
}

std::pair<Tensor3, Tensor3> vjp_latent(const GenerativeModel& m, const Tensor3& z,
                                       const Tensor3& h, const LatentCotangents& cot) {
  Tensor3 gz = m.decode_vjp(z, cot.on_mean, cot.on_sigma);
  Tensor3 gh = m.has_hyper() ? m.hyper_vjp(h, cot.on_mu_z, cot.on_sigma_z) : Tensor3();
  return {std::move(gz), std::move(gh)};
}

std::pair<Tensor3, Tensor3> encode_init(const GenerativeModel& m, const Tensor3& x) {
  Tensor3 z = m.encode(x);
  Tensor3 h = m.has_hyper() ? m.hyper_encode(z) : Tensor3();
  return {std::move(z), std::move(h)};
}

// ---------------------------------------------------------------------------
// CaeModel

std::shared_ptr<CaeModel> CaeModel::load(const std::string& manifest_path) {
  auto model = std::shared_ptr<CaeModel>(new CaeModel());
  model->nets_ = load_weights_file(manifest_path);

  for (const char* need :
       {"encoder", "decoder", "variance_decoder", "hyper_encoder", "hyper_decoder"}) {
    if (model->nets_.networks.find(need) == model->nets_.networks.end()) {
      throw DataError(manifest_path + ": manifest lacks required network \"" + need + "\"");
    }
  }

  // Optional reference size for the consistency walk.
  {
    std::ifstream is(manifest_path);
    nlohmann::json j;
    is >> j;
    if (j.contains("cae") && j["cae"].contains("image_size")) {
      const auto sz = j["cae"]["image_size"];
      model->reference_image_ = {1, sz.at(0).get<int>(), sz.at(1).get<int>()};
    }
  }

  const auto& nets = model->nets_.networks;
  const auto img = model->reference_image_;
  const auto latent = nets.at("encoder").infer_shape(img);
  model->latent_channels_ = latent[0];
  if (img[1] % latent[1] != 0 || img[2] % latent[2] != 0 ||
      img[1] / latent[1] != img[2] / latent[2]) {
    throw DataError(manifest_path + ": encoder downsampling is not an integer factor");
  }
  model->downsample_factor_ = img[1] / latent[1];

  const auto dec = nets.at("decoder").infer_shape(latent);
  if (dec != img) {
    throw DataError(manifest_path + ": decoder output " + std::to_string(dec[0]) + "x" +
                    std::to_string(dec[1]) + "x" + std::to_string(dec[2]) +
                    " does not invert the encoder at the reference size");
  }
  const auto var = nets.at("variance_decoder").infer_shape(latent);
  if (var != img) {
    throw DataError(manifest_path + ": variance_decoder output does not match the image shape");
  }
  const auto hshape = nets.at("hyper_encoder").infer_shape(latent);
  const auto hdec = nets.at("hyper_decoder").infer_shape(hshape);
  if (hdec[0] != 2 * latent[0] || hdec[1] != latent[1] || hdec[2] != latent[2]) {
    throw DataError(manifest_path + ": hyper_decoder must produce 2x latent channels at the "
                    "latent size (mu_z and sigma_z halves)");
  }
  return model;
}

DecodeOut CaeModel::decode(const Tensor3& z) const {
  DecodeOut out;
  out.mean = nets_.networks.at("decoder").forward(z);
  out.sigma = nets_.networks.at("variance_decoder").forward(z);
  for (double& v : out.sigma.v) v = softplus(v);
  return out;
}

Tensor3 CaeModel::decode_vjp(const Tensor3& z, const Tensor3& cot_mean,
                             const Tensor3& cot_sigma) const {
  Tensor3 g = nets_.networks.at("decoder").vjp(z, cot_mean);
  // Pull cot_sigma back through the softplus to the raw variance head.
  Tensor3 raw = nets_.networks.at("variance_decoder").forward(z);
  Tensor3 cot_raw = cot_sigma;
  if (!raw.same_shape(cot_raw)) throw DimensionError("decode_vjp: cot_sigma shape mismatch");
  for (std::size_t i = 0; i < raw.v.size(); ++i) cot_raw.v[i] *= sigmoid(raw.v[i]);
  const Tensor3 g2 = nets_.networks.at("variance_decoder").vjp(z, cot_raw);
  for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] += g2.v[i];
  return g;
}

HyperOut CaeModel::hyper(const Tensor3& h) const {
  const Tensor3 out = nets_.networks.at("hyper_decoder").forward(h);
  if (out.c % 2 != 0) throw DataError("hyper_decoder output channels must be even");
  const int half = out.c / 2;
  HyperOut ho;
  ho.mu_z = Tensor3(half, out.h, out.w);
  ho.sigma_z = Tensor3(half, out.h, out.w);
  const std::size_t plane = static_cast<std::size_t>(out.h) * out.w;
  for (int c = 0; c < half; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      ho.mu_z.v[c * plane + i] = out.v[c * plane + i];
      ho.sigma_z.v[c * plane + i] = softplus(out.v[(half + c) * plane + i]);
    }
  }
  return ho;
}

Tensor3 CaeModel::hyper_vjp(const Tensor3& h, const Tensor3& cot_mu,
                            const Tensor3& cot_sigma) const {
  const Tensor3 raw = nets_.networks.at("hyper_decoder").forward(h);
  const int half = raw.c / 2;
  if (cot_mu.c != half || cot_sigma.c != half) {
    throw DimensionError("hyper_vjp: cotangent channels do not match the latent");
  }
  Tensor3 cot(raw.c, raw.h, raw.w);
  const std::size_t plane = static_cast<std::size_t>(raw.h) * raw.w;
  for (int c = 0; c < half; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      cot.v[c * plane + i] = cot_mu.v[c * plane + i];
      cot.v[(half + c) * plane + i] =
          cot_sigma.v[c * plane + i] * sigmoid(raw.v[(half + c) * plane + i]);
    }
  }
  return nets_.networks.at("hyper_decoder").vjp(h, cot);
}

Tensor3 CaeModel::encode(const Tensor3& x) const {
  return nets_.networks.at("encoder").forward(x);
}

Tensor3 CaeModel::hyper_encode(const Tensor3& z) const {
  return nets_.networks.at("hyper_encoder").forward(z);
}

std::string CaeModel::describe() const {
  std::ostringstream os;
  auto walk = [&](const char* name, const std::array<int, 3>& in) {
    const Network& net = nets_.networks.at(name);
    os << name << ": " << in[0] << "x" << in[1] << "x" << in[2];
    std::array<int, 3> s = in;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      Network prefix;
      prefix.layers.assign(net.layers.begin(), net.layers.begin() + static_cast<long>(i) + 1);
      prefix.weights = {};  // infer_shape never touches weights
      s = prefix.infer_shape(in);
      os << " -[" << layer_kind_name(net.layers[i].kind) << "]-> " << s[0] << "x" << s[1] << "x"
         << s[2];
    }
    os << "\n";
    return s;
  };
  const auto latent = walk("encoder", reference_image_);
  walk("decoder", latent);
  walk("variance_decoder", latent);
  const auto h = walk("hyper_encoder", latent);
  walk("hyper_decoder", h);
  os << "latent channels: " << latent_channels_ << ", downsampling factor: " << downsample_factor_
     << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// AnalyticCae

AnalyticCae::AnalyticCae(int height, int width, int block, double tau, double gamma)
    : height_(height), width_(width), block_(block), tau_(tau), gamma_(gamma) {
  if (height <= 0 || width <= 0 || block <= 0 || height % block != 0 || width % block != 0) {
    throw ConfigError("AnalyticCae: dimensions must be positive multiples of the block size");
  }
  if (!(tau > 0.0) || !(gamma > 0.0)) throw ConfigError("AnalyticCae: tau and gamma must be positive");
}

DecodeOut AnalyticCae::decode(const Tensor3& z) const {
  if (z.c != 1 || z.h != height_ || z.w != width_) {
    throw DimensionError("AnalyticCae::decode: latent shape mismatch");
  }
  DecodeOut out;
  out.mean = to_tensor(idct2_blocks(to_image(z), block_));
  out.sigma = Tensor3(1, height_, width_, gamma_);
  return out;
}

Tensor3 AnalyticCae::decode_vjp(const Tensor3& z, const Tensor3& cot_mean,
                                const Tensor3& cot_sigma) const {
  (void)cot_sigma;  // sigma is constant in z
  if (!cot_mean.same_shape(z)) throw DimensionError("AnalyticCae::decode_vjp: shape mismatch");
  return to_tensor(dct2_blocks(to_image(cot_mean), block_));
}

HyperOut AnalyticCae::hyper(const Tensor3& h) const {
  if (h.size() != 0) throw DimensionError("AnalyticCae has no hyper latent");
  HyperOut out;
  out.mu_z = Tensor3(1, height_, width_, 0.0);
  out.sigma_z = Tensor3(1, height_, width_, tau_);
  return out;
}

Tensor3 AnalyticCae::hyper_vjp(const Tensor3&, const Tensor3&, const Tensor3&) const {
  return Tensor3();
}

Tensor3 AnalyticCae::encode(const Tensor3& x) const {
  if (x.c != 1 || x.h != height_ || x.w != width_) {
    throw DimensionError("AnalyticCae::encode: image shape mismatch");
  }
  return to_tensor(dct2_blocks(to_image(x), block_));
}

Tensor3 AnalyticCae::hyper_encode(const Tensor3&) const { return Tensor3(); }

}  // namespace satrestore
