#pragma once

#include <complex>
#include <vector>

#include "satrestore/image.hpp"
#include "satrestore/kernel.hpp"

namespace satrestore {

// Full (not half-plane) 2-D spectrum. Unnormalized forward transform; the
// inverse applies the 1/(h*w) factor, so ifft2_real(fft2_real(x)) == x.
struct ComplexGrid {
  int height = 0;
  int width = 0;
  std::vector<std::complex<double>> data;

  ComplexGrid() = default;
  ComplexGrid(int h, int w) : height(h), width(w) {
    data.assign(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), {0.0, 0.0});
  }
  std::complex<double>& at(int r, int c) {
    return data[static_cast<std::size_t>(r) * width + c];
  }
  std::complex<double> at(int r, int c) const {
    return data[static_cast<std::size_t>(r) * width + c];
  }
};

ComplexGrid fft2_real(const ImageGrid& x);
ImageGrid ifft2_real(const ComplexGrid& f);
ComplexGrid fft2(const ComplexGrid& x);
ComplexGrid ifft2(const ComplexGrid& f);

// Spectrum of a centered kernel embedded in an h-by-w grid: tap (i, j) lands at
// ((i - center) mod h, (j - center) mod w), so multiplying spectra implements
// centered circular convolution.
ComplexGrid kernel_spectrum(const Kernel& k, int height, int width);

}  // namespace satrestore
