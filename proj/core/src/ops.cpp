#include "satrestore/ops.hpp"

#include <cmath>
#include <string>

namespace satrestore {
namespace {

ImageGrid convolve_direct(const ImageGrid& x, const Kernel& k) {
  ImageGrid out(x.height, x.width);
  const int cr = k.center_row();
  const int cc = k.center_col();
  for (int r = 0; r < x.height; ++r) {
    for (int c = 0; c < x.width; ++c) {
      double acc = 0.0;
      for (int i = 0; i < k.height; ++i) {
        int sr = r - (i - cr);
        sr -= x.height * static_cast<int>(std::floor(double(sr) / x.height));
        for (int j = 0; j < k.width; ++j) {
          int sc = c - (j - cc);
          sc -= x.width * static_cast<int>(std::floor(double(sc) / x.width));
          acc += k.at(i, j) * x.at(sr, sc);
        }
      }
      out.at(r, c) = acc;
    }
  }
  return out;
}

ImageGrid convolve_fft(const ImageGrid& x, const Kernel& k) {
  ComplexGrid spec = fft2_real(x);
  const ComplexGrid kspec = kernel_spectrum(k, x.height, x.width);
  for (std::size_t i = 0; i < spec.data.size(); ++i) spec.data[i] *= kspec.data[i];
  return ifft2_real(spec);
}

// Half-width 4*factor windowed sinc, cutoff at the target Nyquist.
std::vector<double> lowpass_taps(int factor) {
  const int half = 4 * factor;
  std::vector<double> taps(2 * half + 1);
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) {
    double v;
    if (i == 0) {
      v = 1.0 / factor;
    } else {
      v = std::sin(M_PI * i / factor) / (M_PI * i);
    }
    v *= 0.5 * (1.0 + std::cos(M_PI * i / (half + 1)));  // Hann window
    taps[i + half] = v;
    sum += v;
  }
  for (double& t : taps) t /= sum;
  return taps;
}

ImageGrid filter_rows_circular(const ImageGrid& x, const std::vector<double>& taps) {
  const int half = (static_cast<int>(taps.size()) - 1) / 2;
  ImageGrid out(x.height, x.width);
  for (int r = 0; r < x.height; ++r) {
    for (int c = 0; c < x.width; ++c) {
      double acc = 0.0;
      for (int j = -half; j <= half; ++j) {
        int sc = (c - j) % x.width;
        if (sc < 0) sc += x.width;
        acc += taps[j + half] * x.at(r, sc);
      }
      out.at(r, c) = acc;
    }
  }
  return out;
}

ImageGrid transpose(const ImageGrid& x) {
  ImageGrid out(x.width, x.height);
  for (int r = 0; r < x.height; ++r) {
    for (int c = 0; c < x.width; ++c) out.at(c, r) = x.at(r, c);
  }
  return out;
}

}  // namespace

ImageGrid convolve_circular(const ImageGrid& x, const Kernel& k) {
  if (x.height == 0 || x.width == 0) throw DimensionError("convolve_circular: empty image");
  if (k.height > x.height || k.width > x.width) {
    throw DimensionError("convolve_circular: kernel larger than image");
  }
  const double direct_cost =
      double(x.height) * x.width * double(k.height) * k.width;
  if (direct_cost > 2e7) return convolve_fft(x, k);
  return convolve_direct(x, k);
}

ImageGrid correlate_circular(const ImageGrid& y, const Kernel& k) {
  return convolve_circular(y, flipped(k));
}

ImageGrid downsample(const ImageGrid& x, int s) {
  if (s < 1) throw ConfigError("downsample: factor must be >= 1");
  if (s == 1) return x;
  if (x.height % s != 0 || x.width % s != 0) {
    throw DimensionError("downsample: dimensions must divide by " + std::to_string(s));
  }
  ImageGrid out(x.height / s, x.width / s);
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) out.at(r, c) = x.at(r * s, c * s);
  }
  return out;
}

ImageGrid upsample_zero(const ImageGrid& y, int s) {
  if (s < 1) throw ConfigError("upsample_zero: factor must be >= 1");
  if (s == 1) return y;
  ImageGrid out(y.height * s, y.width * s);
  for (int r = 0; r < y.height; ++r) {
    for (int c = 0; c < y.width; ++c) out.at(r * s, c * s) = y.at(r, c);
  }
  return out;
}

ImageGrid bicubic_upsample2x(const ImageGrid& x) {
  if (x.height == 0 || x.width == 0) throw DimensionError("bicubic_upsample2x: empty image");
  // Catmull-Rom weights at t = 1/2 for samples at offsets -1, 0, 1, 2.
  static const double w[4] = {-1.0 / 16.0, 9.0 / 16.0, 9.0 / 16.0, -1.0 / 16.0};
  auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };

  // Pass 1: widen columns.
  ImageGrid cols(x.height, 2 * x.width);
  for (int r = 0; r < x.height; ++r) {
    for (int c = 0; c < x.width; ++c) {
      cols.at(r, 2 * c) = x.at(r, c);
      double acc = 0.0;
      for (int t = 0; t < 4; ++t) acc += w[t] * x.at(r, clampi(c + t - 1, 0, x.width - 1));
      cols.at(r, 2 * c + 1) = acc;
    }
  }
  // Pass 2: widen rows.
  ImageGrid out(2 * x.height, 2 * x.width);
  for (int c = 0; c < cols.width; ++c) {
    for (int r = 0; r < x.height; ++r) {
      out.at(2 * r, c) = cols.at(r, c);
      double acc = 0.0;
      for (int t = 0; t < 4; ++t) acc += w[t] * cols.at(clampi(r + t - 1, 0, x.height - 1), c);
      out.at(2 * r + 1, c) = acc;
    }
  }
  return out;
}

ImageGrid aa_decimate(const ImageGrid& x, int factor) {
  if (factor < 1) throw ConfigError("aa_decimate: factor must be >= 1");
  if (factor == 1) return x;
  if (x.height % factor != 0 || x.width % factor != 0) {
    throw DimensionError("aa_decimate: dimensions must divide by " + std::to_string(factor));
  }
  const std::vector<double> taps = lowpass_taps(factor);
  ImageGrid filtered = filter_rows_circular(x, taps);
  filtered = transpose(filter_rows_circular(transpose(filtered), taps));
  return downsample(filtered, factor);
}

}  // namespace satrestore
