#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "satrestore/image.hpp"

namespace satrestore {

// Tile footprint on the input (measurement) grid.
struct TileRect {
  int row0 = 0, col0 = 0;
  int height = 0, width = 0;
};

// Cover an height x width grid with tile x tile patches whose consecutive
// starts differ by tile - overlap; the last patch per axis is end-aligned, so
// its overlap may exceed the nominal one. Images no larger than the tile get
// a single full-image patch.
std::vector<TileRect> plan_tiles(int height, int width, int tile, int overlap);

// Restores the patch at plan_tiles(...)[tile_index]; must return a patch
// scaled by the solver's upsampling factor. Called concurrently from the
// worker pool, one call per tile.
using TileRestorer = std::function<ImageGrid(const ImageGrid& patch, std::size_t tile_index)>;

// Runs the restorer over every tile (jobs worker threads) and blends the
// scaled patches with a separable raised-cosine window over the overlaps
// (flat at image borders), normalizing by the accumulated window weight.
// Assembly is single-threaded in tile order, so the result is independent of
// scheduling; with a single tile the output is the restorer's, bit for bit.
//
// context > 0 hands the restorer each patch extended by that many pixels of
// surrounding content on every side (wrapping at image borders, matching the
// solvers' circular boundary convention) and crops the restored result back
// to the nominal tile before blending. The apron keeps each crop's own
// periodic-boundary fiction away from the pixels that are kept, so tiled and
// full-image solves see the same neighborhoods.
ImageGrid restore_tiled(const ImageGrid& y, int scale, int tile, int overlap, int jobs,
                        const TileRestorer& restore, int context = 0);

}  // namespace satrestore
