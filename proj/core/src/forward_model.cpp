#include "satrestore/forward_model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "satrestore/io.hpp"
#include "satrestore/ops.hpp"

namespace satrestore {
namespace {

double variance_floor(const ForwardModel& fm) { return fm.sigma0 * fm.sigma0 * 1e-3; }

}  // namespace

void validate(const ForwardModel& fm) {
  if (fm.scale != 1 && fm.scale != 2) throw ConfigError("ForwardModel: scale must be 1 or 2");
  if (!(fm.sigma0 > 0.0)) throw ConfigError("ForwardModel: sigma0 must be positive");
  if (fm.k_gain < 0.0) throw ConfigError("ForwardModel: k_gain must be non-negative");
  if (fm.kernel.taps.empty()) throw ConfigError("ForwardModel: kernel is empty");
  if (!fm.kernel.is_normalized(1e-6)) {
    throw ConfigError("ForwardModel: kernel mass must be 1 (PSF)");
  }
}

ImageGrid apply_forward(const ImageGrid& x, const ForwardModel& fm) {
  return downsample(convolve_circular(x, fm.kernel), fm.scale);
}

ImageGrid apply_forward_adjoint(const ImageGrid& r, const ForwardModel& fm) {
  return correlate_circular(upsample_zero(r, fm.scale), fm.kernel);
}

void quantize_12bit(ImageGrid& x) {
  for (double& v : x.data) {
    v = std::clamp(std::round(v * 4095.0), 0.0, 4095.0) / 4095.0;
  }
}

ImageGrid degrade(const ImageGrid& x, const ForwardModel& fm, Rng& rng) {
  validate(fm);
  ImageGrid m = apply_forward(x, fm);
  ImageGrid out = m;
  const double s02 = fm.sigma0 * fm.sigma0;
  for (double& v : out.data) {
    const double var = s02 + fm.k_gain * std::max(v, 0.0);
    v += std::sqrt(var) * rng.gaussian();
  }
  if (fm.quantize) quantize_12bit(out);
  return out;
}

double neg_log_likelihood(const ImageGrid& x, const ImageGrid& y, const ForwardModel& fm,
                          NllDiagnostics* diag) {
  const ImageGrid m = apply_forward(x, fm);
  require_same_shape(m, y, "neg_log_likelihood");
  const double s02 = fm.sigma0 * fm.sigma0;
  const double floor = variance_floor(fm);
  double acc = 0.0;
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    double v = s02 + fm.k_gain * m.data[i];
    if (v < floor) {
      v = floor;
      if (diag) ++diag->clamped_variances;
    }
    const double r = y.data[i] - m.data[i];
    acc += r * r / v + std::log(v);
  }
  return 0.5 * acc;
}

ImageGrid grad_neg_log_likelihood(const ImageGrid& x, const ImageGrid& y,
                                  const ForwardModel& fm, NllDiagnostics* diag) {
  const ImageGrid m = apply_forward(x, fm);
  require_same_shape(m, y, "grad_neg_log_likelihood");
  const double s02 = fm.sigma0 * fm.sigma0;
  const double floor = variance_floor(fm);
  ImageGrid cot(m.height, m.width);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    double v = s02 + fm.k_gain * m.data[i];
    bool clamped = false;
    if (v < floor) {
      v = floor;
      clamped = true;
      if (diag) ++diag->clamped_variances;
    }
    const double r = y.data[i] - m.data[i];
    double d = -r / v;
    if (fm.full_gradient && !clamped) {
      // d/dm of 0.5 * (r^2 / v + log v) with v = s02 + k * m.
      d += 0.5 * fm.k_gain * (1.0 / v - r * r / (v * v));
    }
    cot.data[i] = d;
  }
  return apply_forward_adjoint(cot, fm);
}

double measure_mtf_nyquist(const Kernel& k, int axis) {
  double acc = 0.0;
  for (int r = 0; r < k.height; ++r) {
    for (int c = 0; c < k.width; ++c) {
      const int idx = axis == 0 ? r : c;
      acc += (idx % 2 == 0 ? 1.0 : -1.0) * k.at(r, c);
    }
  }
  return std::abs(acc);
}

Kernel psf_from_mtf(const MtfSpec& spec) {
  const double target = spec.mtf_at_nyquist;
  const int n = spec.kernel_size;
  if (!(target > 0.0 && target < 1.0)) {
    throw ConfigError("psf_from_mtf: target must lie strictly inside (0, 1)");
  }
  if (n < 3 || n % 2 == 0) throw ConfigError("psf_from_mtf: kernel_size must be odd and >= 3");

  const int half = n / 2;
  // Separable profile: the 2-D kernel is the outer product of g with itself,
  // so the Nyquist response along an axis equals the 1-D alternating sum.
  auto nyquist_of = [&](double rho) {
    double num = 0.0, den = 0.0;
    for (int i = -half; i <= half; ++i) {
      const double g = std::exp(-0.5 * i * i / (rho * rho));
      num += (i % 2 == 0 ? g : -g);
      den += g;
    }
    return std::abs(num) / den;
  };

  // The response decreases monotonically in rho, from 1 (delta) toward the
  // truncated-box limit. The continuous closed form underestimates the width
  // because sampling folds the spectrum at Nyquist, so bracket and bisect on
  // the measured value of the actual discrete kernel.
  double lo = 1e-3;  // ~delta: response ~1
  double hi = 1.0;
  while (nyquist_of(hi) > target) {
    hi *= 2.0;
    if (hi > 64.0 * n) {
      throw ConfigError(
          "psf_from_mtf: target " + std::to_string(target) + " unattainable at kernel_size " +
          std::to_string(n) + "; achievable range is about (" +
          std::to_string(nyquist_of(hi)) + ", 1)");
    }
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (nyquist_of(mid) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double rho = 0.5 * (lo + hi);

  Kernel k(n, n);
  double sum = 0.0;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double dr = r - half, dc = c - half;
      const double v = std::exp(-0.5 * (dr * dr + dc * dc) / (rho * rho));
      k.at(r, c) = v;
      sum += v;
    }
  }
  for (double& t : k.taps) t /= sum;

  if (std::abs(measure_mtf_nyquist(k, 0) - target) > 1e-3) {
    throw ConfigError("psf_from_mtf: could not reach target " + std::to_string(target) +
                      " at kernel_size " + std::to_string(n));
  }
  return k;
}

SimulatedPair simulate_pair(const ImageGrid& clean, const ForwardModel& fm, int target_scale,
                            Rng& rng) {
  if (target_scale < 1) throw ConfigError("simulate_pair: target_scale must be >= 1");
  SimulatedPair pair;
  pair.target = aa_decimate(clean, target_scale);
  pair.degraded = degrade(pair.target, fm, rng);
  return pair;
}

void save_forward_model(const ForwardModel& fm, const std::string& json_path) {
  validate(fm);
  const std::filesystem::path jp(json_path);
  std::filesystem::path kernel_path = jp;
  kernel_path.replace_extension(".kernel.f32r");

  ImageGrid taps(fm.kernel.height, fm.kernel.width);
  taps.data = fm.kernel.taps;
  save_f32r(taps, kernel_path.string());

  nlohmann::json j;
  j["kernel_file"] = kernel_path.filename().string();
  j["scale"] = fm.scale;
  j["sigma0"] = fm.sigma0;
  j["k_gain"] = fm.k_gain;
  j["quantize"] = fm.quantize;
  std::ofstream os(json_path);
  if (!os) throw DataError(json_path + ": cannot open for writing");
  os << j.dump(2) << "\n";
}

ForwardModel load_forward_model(const std::string& json_path) {
  std::ifstream is(json_path);
  if (!is) throw DataError(json_path + ": cannot open");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(json_path + ": invalid JSON (" + e.what() + ")");
  }
  ForwardModel fm;
  try {
    const std::string kernel_file = j.at("kernel_file").get<std::string>();
    fm.scale = j.at("scale").get<int>();
    fm.sigma0 = j.at("sigma0").get<double>();
    fm.k_gain = j.at("k_gain").get<double>();
    fm.quantize = j.at("quantize").get<bool>();
    const auto kp = std::filesystem::path(json_path).parent_path() / kernel_file;
    const ImageGrid taps = load_f32r(kp.string());
    fm.kernel = Kernel(taps.height, taps.width);
    fm.kernel.taps = taps.data;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(json_path + ": missing or mistyped field (" + std::string(e.what()) + ")");
  }
  // The F32R round-trip costs f32 precision; restore exact unit mass.
  const double m = fm.kernel.mass();
  if (std::abs(m - 1.0) > 1e-3) {
    throw DataError(json_path + ": kernel mass " + std::to_string(m) + " is not a unit-mass PSF");
  }
  fm.kernel = normalized(fm.kernel);
  validate(fm);
  return fm;
}

}  // namespace satrestore
