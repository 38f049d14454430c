#include "satrestore/io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

namespace satrestore {
namespace {

void put_u32le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32le(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError(path + ": truncated header");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

int to_count12(double v) {
  const long c = std::lround(v * 4095.0);
  return static_cast<int>(std::clamp(c, 0L, 4095L));
}

std::string lower_ext(const std::string& path) {
  const auto pos = path.find_last_of('.');
  if (pos == std::string::npos) return "";
  std::string ext = path.substr(pos + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

void save_f32r(const ImageGrid& x, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(path + ": cannot open for writing");
  os.write("F32R", 4);
  put_u32le(os, static_cast<std::uint32_t>(x.height));
  put_u32le(os, static_cast<std::uint32_t>(x.width));
  std::vector<float> row(x.width);
  for (int r = 0; r < x.height; ++r) {
    for (int c = 0; c < x.width; ++c) row[c] = static_cast<float>(x.at(r, c));
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!os) throw DataError(path + ": write failed");
}

ImageGrid load_f32r(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(path + ": cannot open");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "F32R", 4) != 0) {
    throw DataError(path + ": not an F32R file");
  }
  const std::uint32_t h = get_u32le(is, path);
  const std::uint32_t w = get_u32le(is, path);
  if (h == 0 || w == 0 || double(h) * double(w) > 1e9) {
    throw DataError(path + ": implausible dimensions");
  }
  ImageGrid x(static_cast<int>(h), static_cast<int>(w));
  std::vector<float> row(w);
  for (std::uint32_t r = 0; r < h; ++r) {
    if (!is.read(reinterpret_cast<char*>(row.data()),
                 static_cast<std::streamsize>(row.size() * sizeof(float)))) {
      throw DataError(path + ": truncated pixel data");
    }
    for (std::uint32_t c = 0; c < w; ++c) x.at(static_cast<int>(r), static_cast<int>(c)) = row[c];
  }
  return x;
}

void save_pgm(const ImageGrid& x, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(path + ": cannot open for writing");
  os << "P5\n" << x.width << " " << x.height << "\n4095\n";
  for (int r = 0; r < x.height; ++r) {
    for (int c = 0; c < x.width; ++c) {
      const int v = to_count12(x.at(r, c));
      const unsigned char b[2] = {static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v & 0xFF)};
      os.write(reinterpret_cast<const char*>(b), 2);
    }
  }
  if (!os) throw DataError(path + ": write failed");
}

ImageGrid load_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(path + ": cannot open");
  auto next_token = [&]() -> long {
    // Skip whitespace and '#' comments, then parse a decimal token.
    int ch = is.get();
    while (ch != EOF && (std::isspace(ch) || ch == '#')) {
      if (ch == '#') {
        while (ch != EOF && ch != '\n') ch = is.get();
      }
      ch = is.get();
    }
    long v = -1;
    while (ch != EOF && std::isdigit(ch)) {
      if (v < 0) v = 0;
      v = v * 10 + (ch - '0');
      ch = is.get();
    }
    if (v < 0) throw DataError(path + ": malformed PGM header");
    return v;
  };
  char m0 = 0, m1 = 0;
  is.get(m0);
  is.get(m1);
  if (m0 != 'P' || m1 != '5') throw DataError(path + ": not a binary PGM (P5) file");
  const long w = next_token();
  const long h = next_token();
  const long maxval = next_token();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw DataError(path + ": invalid PGM header");
  }
  ImageGrid x(static_cast<int>(h), static_cast<int>(w));
  const bool two_byte = maxval > 255;
  for (int r = 0; r < x.height; ++r) {
    for (int c = 0; c < x.width; ++c) {
      int v;
      if (two_byte) {
        const int hi = is.get();
        const int lo = is.get();
        if (lo == EOF) throw DataError(path + ": truncated pixel data");
        v = (hi << 8) | lo;
      } else {
        v = is.get();
        if (v == EOF) throw DataError(path + ": truncated pixel data");
      }
      x.at(r, c) = std::min(v, 4095) / 4095.0;
    }
  }
  return x;
}

void save_png16(const ImageGrid& x, const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw DataError(path + ": cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw DataError(path + ": PNG write failed");
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(x.width),
               static_cast<png_uint_32>(x.height), 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<unsigned char> row(static_cast<std::size_t>(x.width) * 2);
  for (int r = 0; r < x.height; ++r) {
    for (int c = 0; c < x.width; ++c) {
      const int v = to_count12(x.at(r, c));
      row[2 * c] = static_cast<unsigned char>(v >> 8);  // network byte order
      row[2 * c + 1] = static_cast<unsigned char>(v & 0xFF);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

ImageGrid load_png16(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw DataError(path + ": cannot open");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw DataError(path + ": PNG read failed");
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY || (depth != 8 && depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw DataError(path + ": expected single-band 8- or 16-bit grayscale PNG");
  }
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  ImageGrid x(h, w);
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * (depth == 16 ? 2 : 1));
  for (int r = 0; r < h; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (int c = 0; c < w; ++c) {
      const int v = depth == 16 ? (row[2 * c] << 8) | row[2 * c + 1] : row[c];
      x.at(r, c) = std::min(v, 4095) / 4095.0;
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return x;
}

void save_image(const ImageGrid& x, const std::string& path) {
  const std::string ext = lower_ext(path);
  if (ext == "f32r") return save_f32r(x, path);
  if (ext == "pgm") return save_pgm(x, path);
  if (ext == "png") return save_png16(x, path);
  throw ConfigError(path + ": unsupported image extension ." + ext);
}

ImageGrid load_image(const std::string& path) {
  const std::string ext = lower_ext(path);
  if (ext == "f32r") return load_f32r(path);
  if (ext == "pgm") return load_pgm(path);
  if (ext == "png") return load_png16(path);
  throw ConfigError(path + ": unsupported image extension ." + ext);
}

}  // namespace satrestore
