#pragma once

#include <vector>

#include "satrestore/image.hpp"

namespace satrestore {

// Orthonormal DCT-II basis matrix for size n: row k holds the k-th basis
// vector, so coefficients = B * samples and samples = B^T * coefficients.
std::vector<double> dct_basis(int n);

// Non-overlapping blockwise 2-D orthonormal DCT (and inverse). Image
// dimensions must divide by the block size. These form an orthogonal pair:
// idct2_blocks(dct2_blocks(x)) == x and inner products are preserved.
ImageGrid dct2_blocks(const ImageGrid& x, int block);
ImageGrid idct2_blocks(const ImageGrid& coeffs, int block);

}  // namespace satrestore
