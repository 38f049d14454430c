#pragma once

#include <string>
#include <utility>
#include <vector>

#include "satrestore/image.hpp"

namespace satrestore {

// Mapping from predicted per-pixel posterior deviation to an empirical error
// bound of level alpha, learned on (prediction, true error) pairs. Lookup is
// piecewise constant over bins of predicted deviation; values below the first
// edge use the first bin, values beyond the last edge the last bin.
struct CalibrationTable {
  double alpha = 0.0;
  std::vector<double> bin_edges;  // strictly increasing, bins.size() + 1
  std::vector<double> quantiles;  // nondecreasing after the isotonic pass
  std::vector<long> counts;       // calibration pixels per bin
};

// Bins the pooled predicted deviations into n_bins equal-population bins,
// stores each bin's empirical alpha-quantile of |true_error|, then makes the
// quantiles nondecreasing by merging violating adjacent bins and recomputing
// the quantile on their pooled samples (which keeps each merged group's
// in-sample coverage at alpha). Bins with fewer than min_count pixels inherit
// the nearest populated bin's quantile; if no bin reaches min_count, every
// bin gets the global quantile.
CalibrationTable calibrate(
    const std::vector<std::pair<ImageGrid, ImageGrid>>& prediction_error_pairs, double alpha,
    int n_bins = 16, long min_count = 50);

ImageGrid apply_calibration(const CalibrationTable& table, const ImageGrid& predicted_deviation);

void save_calibration_table(const CalibrationTable& table, const std::string& path);
CalibrationTable load_calibration_table(const std::string& path);

}  // namespace satrestore
