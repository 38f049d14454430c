#pragma once

#include <array>
#include <memory>
#include <string>
#include <utility>

#include "satrestore/net.hpp"

namespace satrestore {

// Decoder outputs: per-pixel mean and positive scale of p(x | z).
struct DecodeOut {
  Tensor3 mean;
  Tensor3 sigma;
};

// Latent prior parameters produced from the hyper latent h: z ~ N(mu_z,
// diag(sigma_z^2)), h ~ N(0, I).
struct HyperOut {
  Tensor3 mu_z;
  Tensor3 sigma_z;
};

// Generative image model with an optional hyper latent. Everything the
// variational solver needs: forward maps, their exact input-direction VJPs,
// and deterministic encoders for initialization.
class GenerativeModel {
 public:
  virtual ~GenerativeModel() = default;

  virtual bool has_hyper() const = 0;

  virtual DecodeOut decode(const Tensor3& z) const = 0;
  // Gradient w.r.t. z of <cot_mean, mean(z)> + <cot_sigma, sigma(z)>.
  virtual Tensor3 decode_vjp(const Tensor3& z, const Tensor3& cot_mean,
                             const Tensor3& cot_sigma) const = 0;

  virtual HyperOut hyper(const Tensor3& h) const = 0;
  // Gradient w.r.t. h of <cot_mu, mu_z(h)> + <cot_sigma, sigma_z(h)>.
  virtual Tensor3 hyper_vjp(const Tensor3& h, const Tensor3& cot_mu,
                            const Tensor3& cot_sigma) const = 0;

  virtual Tensor3 encode(const Tensor3& x) const = 0;
  virtual Tensor3 hyper_encode(const Tensor3& z) const = 0;
};

// log p(z | h) + log p(h), full Gaussian constants included.
double latent_prior_logpdf(const GenerativeModel& m, const Tensor3& z, const Tensor3& h);

// Cotangents for the four model outputs (mean, sigma, mu_z, sigma_z).
struct LatentCotangents {
  Tensor3 on_mean, on_sigma, on_mu_z, on_sigma_z;
};

// Pull the cotangents back to the latents: exact reverse-mode gradients
// (grad_z, grad_h) of the weighted sum of outputs.
std::pair<Tensor3, Tensor3> vjp_latent(const GenerativeModel& m, const Tensor3& z,
                                       const Tensor3& h, const LatentCotangents& cot);

// Deterministic initialization: z = encode(x), h = hyper_encode(z).
std::pair<Tensor3, Tensor3> encode_init(const GenerativeModel& m, const Tensor3& x);

// Autoencoder loaded from a weights manifest with networks "encoder",
// "decoder", "variance_decoder", "hyper_encoder", "hyper_decoder". The
// variance decoder and the sigma_z half of the hyper decoder pass through
// softplus, so scales are strictly positive.
class CaeModel : public GenerativeModel {
 public:
  static std::shared_ptr<CaeModel> load(const std::string& manifest_path);

  bool has_hyper() const override { return true; }
  DecodeOut decode(const Tensor3& z) const override;
  Tensor3 decode_vjp(const Tensor3& z, const Tensor3& cot_mean,
                     const Tensor3& cot_sigma) const override;
  HyperOut hyper(const Tensor3& h) const override;
  Tensor3 hyper_vjp(const Tensor3& h, const Tensor3& cot_mu,
                    const Tensor3& cot_sigma) const override;
  Tensor3 encode(const Tensor3& x) const override;
  Tensor3 hyper_encode(const Tensor3& z) const override;

  int latent_channels() const { return latent_channels_; }
  int downsample_factor() const { return downsample_factor_; }
  // Human-readable shape chain for every network at the reference size.
  std::string describe() const;

 private:
  CaeModel() = default;
  WeightsFile nets_;
  std::array<int, 3> reference_image_{1, 64, 64};
  int latent_channels_ = 0;
  int downsample_factor_ = 1;
};

// Closed-form test model: the decoder is an orthogonal blockwise DCT
// synthesis, the prior is N(0, tau^2 I), the observation scale is the
// constant gamma, and there is no hyper latent. Linear and Gaussian, so
// restoration posteriors have dense closed forms.
class AnalyticCae : public GenerativeModel {
 public:
  AnalyticCae(int height, int width, int block, double tau, double gamma);

  bool has_hyper() const override { return false; }
  DecodeOut decode(const Tensor3& z) const override;
  Tensor3 decode_vjp(const Tensor3& z, const Tensor3& cot_mean,
                     const Tensor3& cot_sigma) const override;
  HyperOut hyper(const Tensor3& h) const override;
  Tensor3 hyper_vjp(const Tensor3& h, const Tensor3& cot_mu,
                    const Tensor3& cot_sigma) const override;
  Tensor3 encode(const Tensor3& x) const override;
  Tensor3 hyper_encode(const Tensor3& z) const override;

  int block() const { return block_; }
  double tau() const { return tau_; }
  double gamma() const { return gamma_; }

 private:
  int height_, width_, block_;
  double tau_, gamma_;
};

}  // namespace satrestore
