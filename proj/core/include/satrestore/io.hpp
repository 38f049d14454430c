#pragma once

#include <string>

#include "satrestore/image.hpp"

namespace satrestore {

// Raw float raster: magic "F32R", little-endian u32 height, u32 width, then
// row-major little-endian f32 samples. The only format that holds values
// outside [0, 1] losslessly (up to f32 precision).
void save_f32r(const ImageGrid& x, const std::string& path);
ImageGrid load_f32r(const std::string& path);

// 12-bit imagery in 16-bit containers. On read, digital count d maps to
// d / 4095 (counts above 4095 clamp to 1). On write, values quantize to
// round(x * 4095) clamped to [0, 4095].
void save_pgm(const ImageGrid& x, const std::string& path);
ImageGrid load_pgm(const std::string& path);
void save_png16(const ImageGrid& x, const std::string& path);
ImageGrid load_png16(const std::string& path);

// Dispatch on extension: .f32r, .pgm, .png (case-insensitive).
void save_image(const ImageGrid& x, const std::string& path);
ImageGrid load_image(const std::string& path);

}  // namespace satrestore
