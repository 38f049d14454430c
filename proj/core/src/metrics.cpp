#include "satrestore/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace satrestore {

double psnr(const ImageGrid& a, const ImageGrid& b, double peak) {
  const double m = mse(a, b);
  if (m < 1e-12) return 99.0;
  return std::min(99.0, 10.0 * std::log10(peak * peak / m));
}

double ssim(const ImageGrid& a, const ImageGrid& b, double peak) {
  require_same_shape(a, b, "ssim");
  constexpr int kHalf = 5;  // 11x11 window
  constexpr double kSigma = 1.5;
  double w[2 * kHalf + 1][2 * kHalf + 1];
  double wsum = 0.0;
  for (int i = -kHalf; i <= kHalf; ++i) {
    for (int j = -kHalf; j <= kHalf; ++j) {
      w[i + kHalf][j + kHalf] = std::exp(-0.5 * (i * i + j * j) / (kSigma * kSigma));
      wsum += w[i + kHalf][j + kHalf];
    }
  }
  for (auto& row : w) {
    for (double& v : row) v /= wsum;
  }

  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const int h = a.height, wd = a.width;
  double acc = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < wd; ++c) {
      double ma = 0.0, mb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
      for (int i = -kHalf; i <= kHalf; ++i) {
        const int rr = ((r + i) % h + h) % h;
        for (int j = -kHalf; j <= kHalf; ++j) {
          const int cc = ((c + j) % wd + wd) % wd;
          const double wi = w[i + kHalf][j + kHalf];
          const double va = a.at(rr, cc), vb = b.at(rr, cc);
          ma += wi * va;
          mb += wi * vb;
          saa += wi * va * va;
          sbb += wi * vb * vb;
          sab += wi * va * vb;
        }
      }
      const double va = saa - ma * ma;
      const double vb = sbb - mb * mb;
      const double cov = sab - ma * mb;
      acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  }
  return acc / (static_cast<double>(h) * wd);
}

double icp(const ImageGrid& truth, const ImageGrid& estimate, const ImageGrid& bound) {
  require_same_shape(truth, estimate, "icp");
  require_same_shape(truth, bound, "icp");
  if (truth.data.empty()) return 0.0;
  std::size_t inside = 0;
  for (std::size_t i = 0; i < truth.data.size(); ++i) {
    if (std::abs(truth.data[i] - estimate.data[i]) <= bound.data[i]) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(truth.data.size());
}

double empirical_quantile(std::vector<double>& values, double alpha) {
  if (values.empty()) throw ConfigError("empirical_quantile: no samples");
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("empirical_quantile: alpha outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = alpha * (static_cast<double>(values.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

std::vector<CoveragePoint> coverage_curve(const ImageGrid& truth, const ImageGrid& mmse,
                                          const std::vector<ImageGrid>& samples,
                                          const std::vector<double>& alphas) {
  require_same_shape(truth, mmse, "coverage_curve");
  if (samples.empty()) throw ConfigError("coverage_curve: no samples");
  for (const auto& s : samples) require_same_shape(truth, s, "coverage_curve");

  const std::size_t n = truth.data.size();
  std::vector<CoveragePoint> out;
  out.reserve(alphas.size());
  std::vector<double> devs(samples.size());
  // Per-pixel sorted deviations, reused across alphas.
  std::vector<std::vector<double>> sorted(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < samples.size(); ++s) {
      devs[s] = std::abs(samples[s].data[i] - mmse.data[i]);
    }
    std::sort(devs.begin(), devs.end());
    sorted[i] = devs;
  }
  for (double alpha : alphas) {
    std::size_t inside = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> copy = sorted[i];
      const double bound = empirical_quantile(copy, alpha);
      if (std::abs(truth.data[i] - mmse.data[i]) <= bound) ++inside;
    }
    CoveragePoint p;
    p.alpha = alpha;
    p.coverage = static_cast<double>(inside) / static_cast<double>(n);
    p.stderr_est = std::sqrt(std::max(p.coverage * (1.0 - p.coverage), 1e-12) /
                             static_cast<double>(n));
    out.push_back(p);
  }
  return out;
}

}  // namespace satrestore
