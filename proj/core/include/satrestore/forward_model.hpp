#pragma once

#include <string>
#include <utility>

#include "satrestore/image.hpp"
#include "satrestore/kernel.hpp"
#include "satrestore/rng.hpp"

namespace satrestore {

// Measurement model: y = downsample(kernel * x, scale) + w, where w has
// per-pixel variance sigma0^2 + k_gain * downsample(kernel * x, scale).
// All values in normalized units (digital counts / 4095).
struct ForwardModel {
  Kernel kernel;
  int scale = 1;              // decimation factor, 1 or 2
  double sigma0 = 0.0;        // signal-independent noise std
  double k_gain = 0.0;        // signal-dependent variance slope
  bool quantize = false;      // snap measurements to the 12-bit grid
  bool full_gradient = true;  // false: freeze variances (weighted least squares)
};

void validate(const ForwardModel& fm);

// Counters for numerical guards hit during likelihood evaluations.
struct NllDiagnostics {
  long clamped_variances = 0;
};

// downsample(kernel * x, scale); the noiseless mean of the measurements.
ImageGrid apply_forward(const ImageGrid& x, const ForwardModel& fm);

// Adjoint of apply_forward.
ImageGrid apply_forward_adjoint(const ImageGrid& r, const ForwardModel& fm);

// Round to the 12-bit grid: clamp(round(v * 4095), 0, 4095) / 4095.
void quantize_12bit(ImageGrid& x);

// Draw a measurement: mean plus heteroscedastic Gaussian noise (variance slope
// evaluated at max(mean, 0)), then optional quantization.
ImageGrid degrade(const ImageGrid& x, const ForwardModel& fm, Rng& rng);

// 0.5 * sum_i [ (y_i - m_i)^2 / v_i + log v_i ] with m = apply_forward(x) and
// v_i = sigma0^2 + k_gain * m_i clamped below at sigma0^2 * 1e-3. Omits the
// N/2 * log(2*pi) constant.
double neg_log_likelihood(const ImageGrid& x, const ImageGrid& y, const ForwardModel& fm,
                          NllDiagnostics* diag = nullptr);

// Exact gradient of neg_log_likelihood in x, including the terms from the
// dependence of v on x (dropped when fm.full_gradient is false or where the
// clamp is active).
ImageGrid grad_neg_log_likelihood(const ImageGrid& x, const ImageGrid& y,
                                  const ForwardModel& fm, NllDiagnostics* diag = nullptr);

// Gaussian PSF specified by its transfer-function magnitude at the sampling
// Nyquist frequency.
struct MtfSpec {
  double mtf_at_nyquist = 0.15;
  int kernel_size = 21;
};

// Solve for the Gaussian width whose discretized, truncated, renormalized
// kernel measures mtf_at_nyquist at (f_nyquist, 0); throws ConfigError with
// the achievable range when kernel_size cannot reach the target.
Kernel psf_from_mtf(const MtfSpec& spec);

// |DFT of the kernel| at the Nyquist frequency along one axis (0 = vertical).
double measure_mtf_nyquist(const Kernel& k, int axis);

// Reference pair for evaluation: target is the anti-aliased decimation of the
// clean scene to the restoration grid; degraded applies the forward model to
// the target (including noise and optional quantization).
struct SimulatedPair {
  ImageGrid target;
  ImageGrid degraded;
};
SimulatedPair simulate_pair(const ImageGrid& clean, const ForwardModel& fm, int target_scale,
                            Rng& rng);

// JSON serialization; the kernel lives in an F32R file referenced by the JSON
// (paths resolve relative to the JSON's directory).
void save_forward_model(const ForwardModel& fm, const std::string& json_path);
ForwardModel load_forward_model(const std::string& json_path);

}  // namespace satrestore
