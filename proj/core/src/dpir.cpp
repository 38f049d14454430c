#include "satrestore/dpir.hpp"

#include <chrono>
#include <cmath>
#include <complex>

#include "satrestore/fft.hpp"
#include "satrestore/ops.hpp"

namespace satrestore {
namespace {

double max_kernel_power(const ForwardModel& fm, int h, int w) {
  const ComplexGrid H = kernel_spectrum(fm.kernel, h, w);
  double m = 0.0;
  for (const auto& v : H.data) m = std::max(m, std::norm(v));
  return m;
}

double coupled_objective(const ImageGrid& x, const ImageGrid& y, const ImageGrid& u, double mu,
                         const ForwardModel& fm) {
  const ImageGrid d = add_scaled(x, -1.0, u);
  return neg_log_likelihood(x, y, fm) + 0.5 * mu * dot(d, d);
}

}  // namespace

std::vector<double> noise_schedule(double sigma1, double sigma2, int n) {
  if (n < 1) throw ConfigError("noise_schedule: n must be >= 1");
  if (!(sigma2 > 0.0) || !(sigma1 > sigma2)) {
    throw ConfigError("noise_schedule: need sigma1 > sigma2 > 0");
  }
  std::vector<double> s(static_cast<std::size_t>(n));
  if (n == 1) {
    s[0] = sigma2;
    return s;
  }
  const double l1 = std::log(sigma1), l2 = std::log(sigma2);
  for (int i = 0; i < n; ++i) {
    s[static_cast<std::size_t>(i)] = std::exp(l1 + (l2 - l1) * i / (n - 1.0));
  }
  s.front() = sigma1;  // exact endpoints, no exp/log round-trip error
  s.back() = sigma2;
  return s;
}

ImageGrid prox_datafit_fixed_sigma(const ImageGrid& y, const ImageGrid& u, double mu,
                                   double sigma_bar, const ForwardModel& fm) {
  validate(fm);
  if (!(mu > 0.0)) throw ConfigError("prox_datafit_fixed_sigma: mu must be positive");
  if (!(sigma_bar > 0.0)) throw ConfigError("prox_datafit_fixed_sigma: sigma_bar must be positive");
  const int s = fm.scale;
  if (u.height != y.height * s || u.width != y.width * s) {
    throw DimensionError("prox_datafit_fixed_sigma: u must be the high-res counterpart of y");
  }
  const double s2 = sigma_bar * sigma_bar;

  // b = A^T y / sigma^2 + mu u, in Fourier space.
  ImageGrid b = apply_forward_adjoint(y, fm);
  for (std::size_t i = 0; i < b.data.size(); ++i) {
    b.data[i] = b.data[i] / s2 + mu * u.data[i];
  }
  ComplexGrid B = fft2_real(b);
  const ComplexGrid H = kernel_spectrum(fm.kernel, u.height, u.width);

  // Per alias class c: x(k) = (b(k) - conj(H(k)) * psi_c) / mu with
  // psi_c = sum_c H b / (mu sigma^2 s^2 + sum_c |H|^2).
  ComplexGrid X(u.height, u.width);
  const int m1 = u.height / s, m2 = u.width / s;
  const double reg = mu * s2 * s * s;
  for (int q1 = 0; q1 < m1; ++q1) {
    for (int q2 = 0; q2 < m2; ++q2) {
      std::complex<double> num(0.0, 0.0);
      double den = reg;
      for (int t1 = 0; t1 < s; ++t1) {
        for (int t2 = 0; t2 < s; ++t2) {
          const auto h = H.at(q1 + t1 * m1, q2 + t2 * m2);
          num += h * B.at(q1 + t1 * m1, q2 + t2 * m2);
          den += std::norm(h);
        }
      }
      const std::complex<double> psi = num / den;
      for (int t1 = 0; t1 < s; ++t1) {
        for (int t2 = 0; t2 < s; ++t2) {
          const int k1 = q1 + t1 * m1, k2 = q2 + t2 * m2;
          X.at(k1, k2) = (B.at(k1, k2) - std::conj(H.at(k1, k2)) * psi) / mu;
        }
      }
    }
  }
  return ifft2_real(X);
}

ProxExactResult prox_datafit_exact(const ImageGrid& y, const ImageGrid& u, double mu,
                                   const ForwardModel& fm, const ImageGrid& x_init, int n_gd,
                                   double step) {
  validate(fm);
  if (!(mu > 0.0)) throw ConfigError("prox_datafit_exact: mu must be positive");
  if (n_gd < 0) throw ConfigError("prox_datafit_exact: n_gd must be >= 0");
  require_same_shape(u, x_init, "prox_datafit_exact");

  ProxExactResult res;
  res.x = x_init;
  if (n_gd == 0) return res;

  if (step <= 0.0) {
    // 1/L for the dominant quadratic part; backtracking covers the rest.
    const double l = max_kernel_power(fm, u.height, u.width) / (fm.sigma0 * fm.sigma0) + mu;
    step = 1.0 / l;
  }

  double f = coupled_objective(res.x, y, u, mu, fm);
  for (int it = 0; it < n_gd; ++it) {
    ImageGrid g = grad_neg_log_likelihood(res.x, y, fm);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      g.data[i] += mu * (res.x.data[i] - u.data[i]);
    }
    double t = step;
    for (;;) {
      const ImageGrid cand = add_scaled(res.x, -t, g);
      const double fc = coupled_objective(cand, y, u, mu, fm);
      if (std::isfinite(fc) && fc <= f) {
        res.x = cand;
        f = fc;
        break;
      }
      t *= 0.5;
      if (t < 1e-12) {
        res.stalled = true;
        return res;
      }
    }
    ++res.steps;
  }
  return res;
}

ImageGrid dpir_restore(const ImageGrid& y, const ForwardModel& fm, const Denoiser& denoiser,
                       const DpirConfig& cfg, DpirReport* report) {
  validate(fm);
  if (cfg.n_iters < 1) throw ConfigError("dpir_restore: n_iters must be >= 1");
  if (!(cfg.lambda > 0.0)) throw ConfigError("dpir_restore: lambda must be positive");
  const auto t0 = std::chrono::steady_clock::now();

  // sigma2 is the measurement noise floor; keep sigma1 above it so the
  // schedule stays decreasing even for very noisy inputs.
  const double sigma2 = fm.sigma0;
  if (sigma2 > 1.0) throw ConfigError("dpir_restore: sigma0 above the normalized range");
  const double sigma1 = std::max(cfg.sigma1, sigma2);
  const std::vector<double> schedule = noise_schedule(sigma1, sigma2, cfg.n_iters);
  if (report) {
    report->iters.clear();
    report->schedule = schedule;
  }

  ImageGrid u = fm.scale == 2 ? bicubic_upsample2x(y) : y;
  const int phase1_end = (cfg.n_iters + 1) / 2;
  const double floor = fm.sigma0 * fm.sigma0 * 1e-3;

  for (int k = 0; k < cfg.n_iters; ++k) {
    const double sigma_d = schedule[static_cast<std::size_t>(k)];
    const double mu = cfg.lambda / (sigma_d * sigma_d);

    // Frozen variance for the Fourier prox: evaluate the signal-dependent
    // term at the mean of the current estimate (unit-mass kernel).
    double sigma_bar2 = fm.sigma0 * fm.sigma0 + fm.k_gain * mean_of(u);
    if (sigma_bar2 < floor) sigma_bar2 = floor;

    ImageGrid x = prox_datafit_fixed_sigma(y, u, mu, std::sqrt(sigma_bar2), fm);

    DpirIterStats st;
    st.sigma_d = sigma_d;
    st.mu = mu;
    st.sigma_bar2 = sigma_bar2;

    const bool refine =
        cfg.mode == DpirConfig::Mode::DpirFullGd
            ? !(cfg.skip_gd_when_quadratic && fm.k_gain == 0.0)
            : k >= phase1_end;
    if (refine) {
      const int n_gd = cfg.mode == DpirConfig::Mode::DpirFullGd ? cfg.full_gd_iters
                                                                : cfg.phase2_gd_iters;
      ProxExactResult r = prox_datafit_exact(y, u, mu, fm, x, n_gd, cfg.gd_step);
      x = std::move(r.x);
      st.gd_steps = r.steps;
      st.stalled = r.stalled;
    }

    st.objective = coupled_objective(x, y, u, mu, fm);
    u = denoise(x, sigma_d, denoiser);
    if (report) report->iters.push_back(st);
  }

  if (!all_finite(u)) throw NumericalError("dpir_restore: non-finite result");
  if (report) {
    report->seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return u;
}

}  // namespace satrestore
