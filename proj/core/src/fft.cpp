#include "satrestore/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

namespace satrestore {
namespace {

// FFTW plan creation is not thread-safe; execution via the new-array interface
// is. Plans are created with FFTW_UNALIGNED so they accept any buffer.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(int h, int w, int sign) {
    std::lock_guard<std::mutex> lock(mu_);
    const auto key = std::make_tuple(h, w, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    std::vector<std::complex<double>> scratch(static_cast<std::size_t>(h) * w);
    fftw_plan p = fftw_plan_dft_2d(
        h, w, reinterpret_cast<fftw_complex*>(scratch.data()),
        reinterpret_cast<fftw_complex*>(scratch.data()), sign,
        FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(key, p);
    return p;
  }

 private:
  PlanCache() = default;
  std::mutex mu_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

ComplexGrid run(const ComplexGrid& in, int sign) {
  if (in.height <= 0 || in.width <= 0) throw DimensionError("fft2: empty grid");
  ComplexGrid out(in.height, in.width);
  ComplexGrid tmp = in;  // new-array execute may clobber input
  fftw_plan p = PlanCache::instance().get(in.height, in.width, sign);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(tmp.data.data()),
                   reinterpret_cast<fftw_complex*>(out.data.data()));
  return out;
}

}  // namespace

ComplexGrid fft2(const ComplexGrid& x) { return run(x, FFTW_FORWARD); }

ComplexGrid ifft2(const ComplexGrid& f) {
  ComplexGrid out = run(f, FFTW_BACKWARD);
  const double scale = 1.0 / (static_cast<double>(f.height) * f.width);
  for (auto& v : out.data) v *= scale;
  return out;
}

ComplexGrid fft2_real(const ImageGrid& x) {
  ComplexGrid in(x.height, x.width);
  for (std::size_t i = 0; i < x.data.size(); ++i) in.data[i] = {x.data[i], 0.0};
  return run(in, FFTW_FORWARD);
}

ImageGrid ifft2_real(const ComplexGrid& f) {
  ComplexGrid c = ifft2(f);
  ImageGrid out(f.height, f.width);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = c.data[i].real();
  return out;
}

ComplexGrid kernel_spectrum(const Kernel& k, int height, int width) {
  if (k.height > height || k.width > width) {
    throw DimensionError("kernel_spectrum: kernel larger than grid");
  }
  ComplexGrid padded(height, width);
  const int cr = k.center_row();
  const int cc = k.center_col();
  for (int r = 0; r < k.height; ++r) {
    for (int c = 0; c < k.width; ++c) {
      const int pr = ((r - cr) % height + height) % height;
      const int pc = ((c - cc) % width + width) % width;
      padded.at(pr, pc) += k.at(r, c);
    }
  }
  return fft2(padded);
}

}  // namespace satrestore
