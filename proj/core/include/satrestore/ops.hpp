#pragma once

#include "satrestore/fft.hpp"
#include "satrestore/image.hpp"
#include "satrestore/kernel.hpp"

namespace satrestore {

// Circular (wrap-around) convolution with the kernel centered on its middle
// tap. Small problems run the direct sum; large ones go through the FFT.
ImageGrid convolve_circular(const ImageGrid& x, const Kernel& k);

// Adjoint of convolve_circular: <k*x, y> == <x, correlate_circular(y, k)>.
ImageGrid correlate_circular(const ImageGrid& y, const Kernel& k);

// Keep every s-th sample starting at (0, 0). Dimensions must divide by s.
ImageGrid downsample(const ImageGrid& x, int s);

// Adjoint of downsample: place samples on the fine grid, zeros elsewhere.
ImageGrid upsample_zero(const ImageGrid& y, int s);

// Catmull-Rom 2x upsampling with replicated edges; sample (i, j) of the input
// lands exactly at output (2i, 2j).
ImageGrid bicubic_upsample2x(const ImageGrid& x);

// Anti-aliased decimation by an integer factor: separable windowed-sinc
// low-pass at the target Nyquist (circular boundary), then downsample.
ImageGrid aa_decimate(const ImageGrid& x, int factor);

}  // namespace satrestore
