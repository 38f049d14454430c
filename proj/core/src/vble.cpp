#include "satrestore/vble.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "satrestore/metrics.hpp"
#include "satrestore/ops.hpp"

namespace satrestore {
namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

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

void fill_uniform_centered(Tensor3& t, Rng& rng) {
  for (double& v : t.v) v = rng.uniform() - 0.5;
}

bool tensor_finite(const Tensor3& t) {
  for (double v : t.v) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// Draws for one reparameterized sample. Separate forks per noise source, so
// skipping the image-space draw (when b is absent) never shifts the others.
struct NoiseDraws {
  Tensor3 u, u_h, eps;
};

NoiseDraws draw_noise(const VariationalState& st, bool use_b, int img_h, int img_w, Rng rng) {
  NoiseDraws nd;
  nd.u = Tensor3(st.z_bar.c, st.z_bar.h, st.z_bar.w);
  Rng ru = rng.substream(0);
  fill_uniform_centered(nd.u, ru);
  if (st.h_bar.size() > 0) {
    nd.u_h = Tensor3(st.h_bar.c, st.h_bar.h, st.h_bar.w);
    Rng rh = rng.substream(1);
    fill_uniform_centered(nd.u_h, rh);
  }
  if (use_b) {
    nd.eps = Tensor3(1, img_h, img_w);
    Rng re = rng.substream(2);
    for (double& v : nd.eps.v) v = re.gaussian();
  }
  return nd;
}

struct AdamMoments {
  std::vector<double> m, v;
};

void adam_ascend(Tensor3& param, const Tensor3& grad, AdamMoments& mom, const AdamConfig& cfg,
                 double bias1, double bias2) {
  if (param.size() == 0) return;
  if (mom.m.empty()) {
    mom.m.assign(param.size(), 0.0);
    mom.v.assign(param.size(), 0.0);
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * grad.v[i];
    mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * grad.v[i] * grad.v[i];
    const double mhat = mom.m[i] / bias1;
    const double vhat = mom.v[i] / bias2;
    param.v[i] += cfg.step * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

}  // namespace

void validate(const VbleConfig& cfg) {
  if (!(cfg.lambda > 0.0)) throw ConfigError("vble: lambda must be positive");
  if (cfg.n_opt_iters < 1) throw ConfigError("vble: n_opt_iters must be at least 1");
  if (cfg.mc_samples_per_step < 1) throw ConfigError("vble: mc_samples_per_step must be >= 1");
  if (cfg.n_posterior_samples < 1) throw ConfigError("vble: n_posterior_samples must be >= 1");
  if (!(cfg.optimizer.step > 0.0)) throw ConfigError("vble: optimizer step must be positive");
  if (cfg.init_b < 0.0) throw ConfigError("vble: init_b must be nonnegative");
  if (cfg.mode == VbleMode::Vble && !cfg.freeze_b && cfg.init_b != 1.0) {
    throw ConfigError("vble: init_b is meaningful only in vble_xz mode or with freeze_b");
  }
}

ElboEstimate elbo_estimate(const VariationalState& state, const ImageGrid& y,
                           const ForwardModel& fm, const GenerativeModel& model,
                           const VbleConfig& cfg, Rng rng) {
  const bool use_b = state.log_b.size() > 0;
  const bool free_b = use_b && !cfg.freeze_b;
  const double lambda = cfg.lambda;

  Tensor3 a(state.z_bar.c, state.z_bar.h, state.z_bar.w);
  for (std::size_t i = 0; i < a.size(); ++i) a.v[i] = std::exp(state.log_a.v[i]);
  Tensor3 a_h(state.h_bar.c, state.h_bar.h, state.h_bar.w);
  for (std::size_t i = 0; i < a_h.size(); ++i) a_h.v[i] = std::exp(state.log_a_h.v[i]);
  Tensor3 b(state.log_b.c, state.log_b.h, state.log_b.w);
  for (std::size_t i = 0; i < b.size(); ++i) b.v[i] = std::exp(state.log_b.v[i]);

  ElboEstimate out;
  out.grads.z_bar = Tensor3(state.z_bar.c, state.z_bar.h, state.z_bar.w);
  out.grads.log_a = Tensor3(state.z_bar.c, state.z_bar.h, state.z_bar.w);
  out.grads.h_bar = Tensor3(state.h_bar.c, state.h_bar.h, state.h_bar.w);
  out.grads.log_a_h = Tensor3(state.h_bar.c, state.h_bar.h, state.h_bar.w);
  if (free_b) out.grads.log_b = Tensor3(b.c, b.h, b.w);

  // Entropy and b-prior terms do not depend on the Monte Carlo draw.
  double const_terms = 0.0;
  for (double la : state.log_a.v) const_terms += la;
  for (double la : state.log_a_h.v) const_terms += la;
  if (free_b) {
    for (std::size_t i = 0; i < b.size(); ++i) {
      const_terms += state.log_b.v[i] - 0.5 * b.v[i] * b.v[i];
    }
  }

  const int n_mc = cfg.mc_samples_per_step;
  for (int j = 0; j < n_mc; ++j) {
    const NoiseDraws nd = draw_noise(state, use_b, state.log_b.h, state.log_b.w,
                                     rng.substream(static_cast<std::uint64_t>(j)));

    Tensor3 z = state.z_bar;
    for (std::size_t i = 0; i < z.size(); ++i) z.v[i] += a.v[i] * nd.u.v[i];
    Tensor3 h = state.h_bar;
    for (std::size_t i = 0; i < h.size(); ++i) h.v[i] += a_h.v[i] * nd.u_h.v[i];

    const DecodeOut dec = model.decode(z);
    Tensor3 x = dec.mean;
    if (use_b) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        x.v[i] += b.v[i] * dec.sigma.v[i] * nd.eps.v[i];
      }
    }

    NllDiagnostics diag;
    const ImageGrid x_img = to_image(x);
    const double nll = neg_log_likelihood(x_img, y, fm, &diag);
    ImageGrid g_img = grad_neg_log_likelihood(x_img, y, fm);
    out.clamped_variances += diag.clamped_variances;
    Tensor3 g_x = to_tensor(g_img);
    for (double& v : g_x.v) v = -v;  // ascent on -nll

    const HyperOut hp = model.hyper(h);
    if (!hp.mu_z.same_shape(z)) {
      throw DimensionError("elbo_estimate: hyper output does not match the latent");
    }
    double log_prior = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double s = hp.sigma_z.v[i];
      const double d = (z.v[i] - hp.mu_z.v[i]) / s;
      log_prior += -0.5 * d * d - std::log(s) - kLogSqrt2Pi;
    }
    for (double hv : h.v) log_prior += -0.5 * hv * hv - kLogSqrt2Pi;

    out.value += (-nll + lambda * log_prior) / n_mc;

    // Reverse pass. Decoder cotangents: x = mean + b*sigma*eps.
    LatentCotangents cot;
    cot.on_mean = g_x;
    cot.on_sigma = Tensor3(dec.sigma.c, dec.sigma.h, dec.sigma.w);
    if (use_b) {
      for (std::size_t i = 0; i < cot.on_sigma.size(); ++i) {
        cot.on_sigma.v[i] = g_x.v[i] * b.v[i] * nd.eps.v[i];
      }
    }
    Tensor3 grad_z = model.decode_vjp(z, cot.on_mean, cot.on_sigma);
    for (std::size_t i = 0; i < z.size(); ++i) {
      grad_z.v[i] += lambda * (-(z.v[i] - hp.mu_z.v[i]) / (hp.sigma_z.v[i] * hp.sigma_z.v[i]));
    }

    Tensor3 grad_h;
    if (model.has_hyper()) {
      Tensor3 cot_mu(z.c, z.h, z.w);
      Tensor3 cot_sigz(z.c, z.h, z.w);
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double s = hp.sigma_z.v[i];
        const double d = z.v[i] - hp.mu_z.v[i];
        cot_mu.v[i] = lambda * d / (s * s);
        cot_sigz.v[i] = lambda * (d * d / (s * s * s) - 1.0 / s);
      }
      grad_h = model.hyper_vjp(h, cot_mu, cot_sigz);
      for (std::size_t i = 0; i < h.size(); ++i) grad_h.v[i] += lambda * (-h.v[i]);
    }

    const double inv = 1.0 / n_mc;
    for (std::size_t i = 0; i < z.size(); ++i) {
      out.grads.z_bar.v[i] += inv * grad_z.v[i];
      out.grads.log_a.v[i] += inv * (a.v[i] * grad_z.v[i] * nd.u.v[i] + lambda);
    }
    for (std::size_t i = 0; i < h.size(); ++i) {
      out.grads.h_bar.v[i] += inv * grad_h.v[i];
      out.grads.log_a_h.v[i] += inv * (a_h.v[i] * grad_h.v[i] * nd.u_h.v[i] + lambda);
    }
    if (free_b) {
      for (std::size_t i = 0; i < b.size(); ++i) {
        out.grads.log_b.v[i] +=
            inv * (b.v[i] * (g_x.v[i] * dec.sigma.v[i] * nd.eps.v[i]) +
                   lambda * (1.0 - b.v[i] * b.v[i]));
      }
    }
  }

  out.value += lambda * const_terms;

  if (free_b && cfg.b_per_channel) {
    const std::size_t plane = static_cast<std::size_t>(b.h) * b.w;
    for (int c = 0; c < b.c; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += out.grads.log_b.v[c * plane + i];
      const double m = s / static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) out.grads.log_b.v[c * plane + i] = m;
    }
  }
  return out;
}

FitResult vble_fit(const ImageGrid& y, const ForwardModel& fm, const GenerativeModel& model,
                   const VbleConfig& cfg) {
  validate(cfg);
  validate(fm);
  const auto t0 = std::chrono::steady_clock::now();

  const ImageGrid x0 = fm.scale == 2 ? bicubic_upsample2x(y) : y;
  auto [z0, h0] = encode_init(model, to_tensor(x0));

  FitResult res;
  VariationalState& st = res.state;
  st.z_bar = std::move(z0);
  st.log_a = Tensor3(st.z_bar.c, st.z_bar.h, st.z_bar.w, 0.0);
  st.h_bar = std::move(h0);
  st.log_a_h = Tensor3(st.h_bar.c, st.h_bar.h, st.h_bar.w, 0.0);

  const bool b_absent =
      cfg.mode == VbleMode::Vble || (cfg.freeze_b && cfg.init_b == 0.0);
  if (!b_absent) {
    const DecodeOut dec0 = model.decode(st.z_bar);
    st.log_b = Tensor3(dec0.mean.c, dec0.mean.h, dec0.mean.w, std::log(cfg.init_b));
  }

  Rng rng(cfg.seed);
  AdamMoments mz, ma, mh, mah, mb;
  double bias1 = 1.0, bias2 = 1.0;
  res.elbo_trace.reserve(static_cast<std::size_t>(cfg.n_opt_iters));

  for (int t = 0; t < cfg.n_opt_iters; ++t) {
    const ElboEstimate est =
        elbo_estimate(st, y, fm, model, cfg, rng.substream(static_cast<std::uint64_t>(t)));
    res.elbo_trace.push_back(est.value);
    res.clamped_variances += est.clamped_variances;

    const bool ok = std::isfinite(est.value) && tensor_finite(est.grads.z_bar) &&
                    tensor_finite(est.grads.log_a) && tensor_finite(est.grads.h_bar) &&
                    tensor_finite(est.grads.log_a_h) && tensor_finite(est.grads.log_b);
    if (!ok) {
      ++res.rejected_steps;
      continue;
    }

    bias1 *= cfg.optimizer.beta1;
    bias2 *= cfg.optimizer.beta2;
    adam_ascend(st.z_bar, est.grads.z_bar, mz, cfg.optimizer, 1.0 - bias1, 1.0 - bias2);
    adam_ascend(st.log_a, est.grads.log_a, ma, cfg.optimizer, 1.0 - bias1, 1.0 - bias2);
    adam_ascend(st.h_bar, est.grads.h_bar, mh, cfg.optimizer, 1.0 - bias1, 1.0 - bias2);
    adam_ascend(st.log_a_h, est.grads.log_a_h, mah, cfg.optimizer, 1.0 - bias1, 1.0 - bias2);
    if (st.log_b.size() > 0 && !cfg.freeze_b) {
      adam_ascend(st.log_b, est.grads.log_b, mb, cfg.optimizer, 1.0 - bias1, 1.0 - bias2);
    }
  }

  res.quality_warning = res.rejected_steps * 10 > cfg.n_opt_iters;
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

std::vector<ImageGrid> sample_posterior(const VariationalState& state,
                                        const GenerativeModel& model, int n, Rng rng,
                                        VbleMode mode) {
  if (n < 1) throw ConfigError("sample_posterior: need at least one sample");
  const bool use_b = mode == VbleMode::VbleXz && state.log_b.size() > 0;

  std::vector<ImageGrid> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rs = rng.substream(static_cast<std::uint64_t>(i));
    Tensor3 z = state.z_bar;
    Rng ru = rs.substream(0);
    for (std::size_t k = 0; k < z.size(); ++k) {
      z.v[k] += std::exp(state.log_a.v[k]) * (ru.uniform() - 0.5);
    }
    const DecodeOut dec = model.decode(z);
    Tensor3 x = dec.mean;
    if (use_b) {
      Rng re = rs.substream(2);
      for (std::size_t k = 0; k < x.size(); ++k) {
        x.v[k] += std::exp(state.log_b.v[k]) * dec.sigma.v[k] * re.gaussian();
      }
    }
    out.push_back(to_image(x));
  }
  return out;
}

std::pair<ImageGrid, ImageGrid> mmse_and_quantiles(const std::vector<ImageGrid>& samples,
                                                   double alpha) {
  if (samples.size() < 2) throw ConfigError("mmse_and_quantiles: need at least 2 samples");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("mmse_and_quantiles: alpha must lie in (0, 1)");
  }
  for (const ImageGrid& s : samples) require_same_shape(samples[0], s, "mmse_and_quantiles");

  ImageGrid mmse(samples[0].height, samples[0].width);
  for (const ImageGrid& s : samples) {
    for (std::size_t i = 0; i < mmse.size(); ++i) mmse.data[i] += s.data[i];
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (double& v : mmse.data) v *= inv;

  ImageGrid q(mmse.height, mmse.width);
  std::vector<double> dev(samples.size());
  for (std::size_t i = 0; i < mmse.size(); ++i) {
    for (std::size_t s = 0; s < samples.size(); ++s) {
      dev[s] = std::abs(samples[s].data[i] - mmse.data[i]);
    }
    q.data[i] = empirical_quantile(dev, alpha);
  }
  return {std::move(mmse), std::move(q)};
}

}  // namespace satrestore
