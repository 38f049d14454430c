#pragma once

#include <vector>

#include "satrestore/image.hpp"

namespace satrestore {

// 10 * log10(peak^2 / MSE), capped at 99 dB (the cap also reports for exact
// matches, where the ratio is infinite).
double psnr(const ImageGrid& a, const ImageGrid& b, double peak = 1.0);

// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
// K1 = 0.01, K2 = 0.03, circular boundary handling.
double ssim(const ImageGrid& a, const ImageGrid& b, double peak = 1.0);

// Fraction of pixels whose |truth - estimate| lies within the given bound.
double icp(const ImageGrid& truth, const ImageGrid& estimate, const ImageGrid& bound);

// Quantile by linear interpolation of the order statistics (sorts in place).
double empirical_quantile(std::vector<double>& values, double alpha);

// For each confidence level: the interval coverage of per-pixel empirical
// quantile bounds derived from the posterior samples, plus its binomial
// standard error.
struct CoveragePoint {
  double alpha = 0.0;
  double coverage = 0.0;
  double stderr_est = 0.0;
};
std::vector<CoveragePoint> coverage_curve(const ImageGrid& truth, const ImageGrid& mmse,
                                          const std::vector<ImageGrid>& samples,
                                          const std::vector<double>& alphas);

}  // namespace satrestore
