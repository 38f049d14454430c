#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "satrestore/cae.hpp"
#include "satrestore/forward_model.hpp"
#include "satrestore/image.hpp"
#include "satrestore/rng.hpp"

namespace satrestore {

// vble: samples live in latent space only, x = decode(z).
// vble_xz: additionally perturbs the image, x = mean + b * sigma * eps.
enum class VbleMode { Vble, VbleXz };

// Variational family parameters. Latent and hyper-latent factors are uniform
// boxes, z_k ~ U(z_bar_k +- a_k/2); the image-space factor is Gaussian with
// per-pixel scale b_i * sigma(z)_i. Widths are stored in log space so a, a_h,
// b stay positive under unconstrained updates. log_b is empty whenever the
// image-space factor is absent (vble mode, or b frozen at zero).
struct VariationalState {
  Tensor3 z_bar, log_a;
  Tensor3 h_bar, log_a_h;  // empty when the model has no hyper latent
  Tensor3 log_b;
};

struct AdamConfig {
  double step = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct VbleConfig {
  VbleMode mode = VbleMode::VbleXz;
  double lambda = 0.6;         // weight on prior + entropy terms
  int n_opt_iters = 1000;
  int mc_samples_per_step = 1;
  AdamConfig optimizer;
  int n_posterior_samples = 100;
  std::uint64_t seed = 0;

  // Keep b at init_b for the whole run; its objective terms (constant under
  // the freeze) are dropped so init_b = 0 stays finite. freeze_b with
  // init_b = 0 takes the exact vble-mode code path.
  bool freeze_b = false;
  double init_b = 1.0;
  // Tie b to one value per channel (gradient averaged across pixels).
  bool b_per_channel = false;
};

void validate(const VbleConfig& cfg);

// One Monte Carlo estimate of the objective
//   E[-nll(x)] + lambda * [log p(z|h) + log p(h) + sum log a (+ sum log a_h)
//                          (+ sum (log b - b^2/2) when b is free)]
// and its exact reparameterized ascent gradient with respect to
// (z_bar, log_a, h_bar, log_a_h, log_b). Additive constants of the
// likelihood are omitted. Rng is taken by value: calling twice with the same
// rng replays the same noise (common random numbers).
struct ElboEstimate {
  double value = 0.0;
  VariationalState grads;
  long clamped_variances = 0;
};
ElboEstimate elbo_estimate(const VariationalState& state, const ImageGrid& y,
                           const ForwardModel& fm, const GenerativeModel& model,
                           const VbleConfig& cfg, Rng rng);

struct FitResult {
  VariationalState state;
  std::vector<double> elbo_trace;  // one estimate per iteration
  int rejected_steps = 0;          // non-finite estimates (state left unchanged)
  bool quality_warning = false;    // more than 10% of steps rejected
  long clamped_variances = 0;
  double seconds = 0.0;
};

// Adaptive-moment ascent on the objective. Initialization: z_bar encodes the
// (bicubic-upsampled, for scale 2) measurement, widths a = a_h = 1, b =
// init_b. Deterministic given cfg.seed.
FitResult vble_fit(const ImageGrid& y, const ForwardModel& fm, const GenerativeModel& model,
                   const VbleConfig& cfg);

// Draw n images from the fitted family: z ~ q(z), then x = decode mean, plus
// b * sigma * eps in vble_xz mode. Sample i depends only on (rng, i), so
// draws are order-independent.
std::vector<ImageGrid> sample_posterior(const VariationalState& state,
                                        const GenerativeModel& model, int n, Rng rng,
                                        VbleMode mode);

// Per-pixel sample mean and empirical alpha-quantile of |sample - mean|.
std::pair<ImageGrid, ImageGrid> mmse_and_quantiles(const std::vector<ImageGrid>& samples,
                                                   double alpha);

}  // namespace satrestore
