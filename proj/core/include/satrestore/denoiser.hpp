#pragma once

#include <memory>
#include <string>

#include "satrestore/image.hpp"
#include "satrestore/net.hpp"

namespace satrestore {

enum class DenoiserKind { TvChambolle, DctShrinkage, Cnn };

// Gaussian denoiser family: denoise(x, sigma_d) treats x as signal plus
// white noise of standard deviation sigma_d in [0, 1]-normalized units.
struct Denoiser {
  DenoiserKind kind = DenoiserKind::TvChambolle;

  // Total-variation proximal solver (dual projection): regularization weight
  // tv_weight * sigma_d (the weight that tracks a Gaussian denoiser of
  // strength sigma_d across levels), fixed inner iteration count and dual step.
  int tv_iters = 30;
  double tv_step = 0.248;
  double tv_weight = 1.0;

  // Overlapping block DCT soft-thresholding at dct_thresh * sigma_d.
  int dct_block = 8;
  int dct_stride = 4;
  double dct_thresh = 2.0;

  // Loaded network: channels (image, constant sigma_d plane) -> residual-free
  // estimate, same spatial size.
  std::shared_ptr<const Network> net;
};

Denoiser make_tv_denoiser(int iters = 30, double step = 0.248, double weight = 1.0);
Denoiser make_dct_denoiser(int block = 8, int stride = 4, double thresh = 2.0);
Denoiser load_cnn_denoiser(const std::string& manifest_path);

// Parse a command-line spec: "tv", "tv:weight=0.5,iters=40", "dct",
// "dct:thresh=1.5", "cnn:<manifest.json>".
Denoiser parse_denoiser_spec(const std::string& spec);

ImageGrid denoise(const ImageGrid& x, double sigma_d, const Denoiser& d);

// Exposed for reference solvers: proximal operator of weight * TV at x.
// Uses circular boundaries, matching the library-wide convolution convention.
ImageGrid tv_prox(const ImageGrid& x, double weight, int iters, double step);

// Isotropic discrete total variation (circular forward differences,
// Euclidean norm).
double total_variation(const ImageGrid& x);

}  // namespace satrestore
