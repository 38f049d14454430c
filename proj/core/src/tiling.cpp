#include "satrestore/tiling.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "satrestore/errors.hpp"

namespace satrestore {
namespace {

std::vector<int> axis_starts(int n, int tile, int step) {
  std::vector<int> starts;
  int s = 0;
  while (true) {
    starts.push_back(s);
    if (s + tile >= n) break;
    s = std::min(s + step, n - tile);
  }
  return starts;
}

// Separable blending window for one axis of a scaled output patch. The ramp
// spans the scaled overlap with sin^2 weights, which pair to one across two
// nominally overlapping tiles; sides on the image border stay flat.
std::vector<double> axis_window(int len, int ramp, bool ramp_lo, bool ramp_hi) {
  std::vector<double> w(static_cast<std::size_t>(len), 1.0);
  const int r = std::min(ramp, len);
  for (int i = 0; i < r; ++i) {
    const double t = std::sin(M_PI * (i + 0.5) / (2.0 * r));
    const double v = t * t;
    if (ramp_lo) w[static_cast<std::size_t>(i)] *= v;
    if (ramp_hi) w[static_cast<std::size_t>(len - 1 - i)] *= v;
  }
  return w;
}

}  // namespace

std::vector<TileRect> plan_tiles(int height, int width, int tile, int overlap) {
  if (height < 1 || width < 1) throw DimensionError("plan_tiles: empty grid");
  if (tile < 1) throw ConfigError("plan_tiles: tile size must be positive");
  if (overlap < 0 || overlap >= tile) {
    throw ConfigError("plan_tiles: overlap must lie in [0, tile)");
  }
  const int step = tile - overlap;
  const std::vector<int> rows = axis_starts(height, std::min(tile, height), step);
  const std::vector<int> cols = axis_starts(width, std::min(tile, width), step);
  std::vector<TileRect> out;
  out.reserve(rows.size() * cols.size());
  for (int r : rows) {
    for (int c : cols) {
      out.push_back({r, c, std::min(tile, height), std::min(tile, width)});
    }
  }
  return out;
}

ImageGrid restore_tiled(const ImageGrid& y, int scale, int tile, int overlap, int jobs,
                        const TileRestorer& restore, int context) {
  if (scale < 1) throw ConfigError("restore_tiled: scale must be positive");
  if (jobs < 1) throw ConfigError("restore_tiled: jobs must be positive");
  if (context < 0) throw ConfigError("restore_tiled: context must be non-negative");
  const std::vector<TileRect> tiles = plan_tiles(y.height, y.width, tile, overlap);

  std::vector<ImageGrid> patches(tiles.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tiles.size()) return;
      try {
        const TileRect& t = tiles[i];
        // Periodic extension matches the solvers' circular boundary
        // convention, so a border tile sees the same neighborhood a
        // full-image solve would.
        auto wrap = [](int v, int n) { return ((v % n) + n) % n; };
        ImageGrid patch(t.height + 2 * context, t.width + 2 * context);
        for (int r = 0; r < patch.height; ++r) {
          for (int c = 0; c < patch.width; ++c) {
            patch.at(r, c) = y.at(wrap(t.row0 - context + r, y.height),
                                  wrap(t.col0 - context + c, y.width));
          }
        }
        ImageGrid restored = restore(patch, i);
        if (restored.height != patch.height * scale || restored.width != patch.width * scale) {
          throw DimensionError("restore_tiled: restorer returned a mis-sized patch");
        }
        if (context == 0) {
          patches[i] = std::move(restored);
        } else {
          const int off = context * scale;
          ImageGrid kept(t.height * scale, t.width * scale);
          for (int r = 0; r < kept.height; ++r) {
            for (int c = 0; c < kept.width; ++c) {
              kept.at(r, c) = restored.at(off + r, off + c);
            }
          }
          patches[i] = std::move(kept);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const int n_threads = std::min<std::size_t>(static_cast<std::size_t>(jobs), tiles.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  if (tiles.size() == 1) return std::move(patches[0]);

  ImageGrid num(y.height * scale, y.width * scale);
  ImageGrid den(y.height * scale, y.width * scale);
  const int ramp = overlap * scale;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const TileRect& t = tiles[i];
    const int r0 = t.row0 * scale, c0 = t.col0 * scale;
    const int th = t.height * scale, tw = t.width * scale;
    const std::vector<double> wr =
        axis_window(th, ramp, t.row0 > 0, t.row0 + t.height < y.height);
    const std::vector<double> wc =
        axis_window(tw, ramp, t.col0 > 0, t.col0 + t.width < y.width);
    for (int r = 0; r < th; ++r) {
      for (int c = 0; c < tw; ++c) {
        const double w = wr[static_cast<std::size_t>(r)] * wc[static_cast<std::size_t>(c)];
        num.at(r0 + r, c0 + c) += w * patches[i].at(r, c);
        den.at(r0 + r, c0 + c) += w;
      }
    }
  }
  for (std::size_t i = 0; i < num.size(); ++i) num.data[i] /= den.data[i];
  return num;
}

}  // namespace satrestore
