#include "satrestore/kernel.hpp"

namespace satrestore {

Kernel flipped(const Kernel& k) {
  Kernel out(k.height, k.width);
  for (int r = 0; r < k.height; ++r) {
    for (int c = 0; c < k.width; ++c) {
      out.at(r, c) = k.at(k.height - 1 - r, k.width - 1 - c);
    }
  }
  return out;
}

Kernel normalized(const Kernel& k) {
  const double m = k.mass();
  if (!(m > 0.0)) throw NumericalError("normalized: kernel mass must be positive");
  Kernel out = k;
  for (double& t : out.taps) t /= m;
  return out;
}

}  // namespace satrestore
