#include "satrestore/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "satrestore/errors.hpp"
#include "satrestore/metrics.hpp"

namespace satrestore {
namespace {

int bin_index(const std::vector<double>& edges, double v) {
  const auto it = std::upper_bound(edges.begin(), edges.end(), v);
  const long j = (it - edges.begin()) - 1;
  const long last = static_cast<long>(edges.size()) - 2;
  return static_cast<int>(std::clamp(j, 0L, last));
}

}  // namespace

CalibrationTable calibrate(
    const std::vector<std::pair<ImageGrid, ImageGrid>>& prediction_error_pairs, double alpha,
    int n_bins, long min_count) {
  if (prediction_error_pairs.empty()) throw ConfigError("calibrate: no calibration pairs");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("calibrate: alpha must lie in (0, 1)");
  if (n_bins < 1) throw ConfigError("calibrate: n_bins must be at least 1");

  std::vector<double> pred, err;
  for (const auto& [p, e] : prediction_error_pairs) {
    require_same_shape(p, e, "calibrate");
    pred.insert(pred.end(), p.data.begin(), p.data.end());
    for (double v : e.data) err.push_back(std::abs(v));
  }
  const std::size_t n = pred.size();
  if (n == 0) throw ConfigError("calibrate: calibration pairs are empty images");

  // Equal-population edges from the order statistics of the predictions.
  std::vector<double> sorted = pred;
  std::sort(sorted.begin(), sorted.end());
  CalibrationTable table;
  table.alpha = alpha;
  for (int j = 0; j <= n_bins; ++j) {
    const std::size_t idx = (static_cast<std::size_t>(j) * (n - 1)) / n_bins;
    const double e = sorted[idx];
    if (table.bin_edges.empty() || e > table.bin_edges.back()) table.bin_edges.push_back(e);
  }
  if (table.bin_edges.size() < 2) {
    // Constant predictions: one bin, any positive width.
    table.bin_edges.push_back(table.bin_edges.back() + 1.0);
  }
  const int b = static_cast<int>(table.bin_edges.size()) - 1;

  std::vector<std::vector<double>> bin_samples(b);
  for (std::size_t i = 0; i < n; ++i) {
    bin_samples[bin_index(table.bin_edges, pred[i])].push_back(err[i]);
  }
  table.counts.resize(b);
  for (int j = 0; j < b; ++j) table.counts[j] = static_cast<long>(bin_samples[j].size());

  // Pool-adjacent-violators on the per-bin quantiles, recomputing each merged
  // group's quantile from its pooled samples so the group still covers alpha
  // of its own pixels.
  struct Block {
    int lo, hi;
    std::vector<double> samples;
    double q;
  };
  std::vector<Block> blocks;
  for (int j = 0; j < b; ++j) {
    Block blk{j, j, std::move(bin_samples[j]), 0.0};
    blk.q = empirical_quantile(blk.samples, alpha);
    blocks.push_back(std::move(blk));
    while (blocks.size() >= 2 && blocks[blocks.size() - 2].q > blocks.back().q) {
      Block top = std::move(blocks.back());
      blocks.pop_back();
      Block& prev = blocks.back();
      prev.hi = top.hi;
      prev.samples.insert(prev.samples.end(), top.samples.begin(), top.samples.end());
      prev.q = empirical_quantile(prev.samples, alpha);
    }
  }
  table.quantiles.assign(b, 0.0);
  for (const Block& blk : blocks) {
    for (int j = blk.lo; j <= blk.hi; ++j) table.quantiles[j] = blk.q;
  }

  // Sparse bins borrow from the nearest bin that meets the occupancy floor.
  std::vector<int> populated;
  for (int j = 0; j < b; ++j) {
    if (table.counts[j] >= min_count) populated.push_back(j);
  }
  if (populated.empty()) {
    const double q = empirical_quantile(err, alpha);
    std::fill(table.quantiles.begin(), table.quantiles.end(), q);
  } else if (static_cast<int>(populated.size()) < b) {
    const std::vector<double> fitted = table.quantiles;
    for (int j = 0; j < b; ++j) {
      if (table.counts[j] >= min_count) continue;
      int best = populated.front();
      for (int p : populated) {
        if (std::abs(p - j) < std::abs(best - j)) best = p;
      }
      table.quantiles[j] = fitted[best];
    }
  }
  return table;
}

ImageGrid apply_calibration(const CalibrationTable& table, const ImageGrid& predicted_deviation) {
  if (table.bin_edges.size() != table.quantiles.size() + 1 || table.quantiles.empty()) {
    throw ConfigError("apply_calibration: table is not fitted");
  }
  ImageGrid out(predicted_deviation.height, predicted_deviation.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data[i] = table.quantiles[bin_index(table.bin_edges, predicted_deviation.data[i])];
  }
  return out;
}

void save_calibration_table(const CalibrationTable& table, const std::string& path) {
  nlohmann::json j;
  j["format"] = "satrestore-calibration-v1";
  j["alpha"] = table.alpha;
  j["bin_edges"] = table.bin_edges;
  j["quantiles"] = table.quantiles;
  j["counts"] = table.counts;
  std::ofstream os(path);
  if (!os) throw DataError(path + ": cannot open for writing");
  os << j.dump(2) << "\n";
}

CalibrationTable load_calibration_table(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError(path + ": cannot open");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  CalibrationTable table;
  try {
    if (j.at("format").get<std::string>() != "satrestore-calibration-v1") {
      throw DataError(path + ": unknown calibration format");
    }
    table.alpha = j.at("alpha").get<double>();
    table.bin_edges = j.at("bin_edges").get<std::vector<double>>();
    table.quantiles = j.at("quantiles").get<std::vector<double>>();
    table.counts = j.at("counts").get<std::vector<long>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  if (!(table.alpha > 0.0 && table.alpha < 1.0)) throw DataError(path + ": alpha out of range");
  if (table.bin_edges.size() != table.quantiles.size() + 1 ||
      table.counts.size() != table.quantiles.size() || table.quantiles.empty()) {
    throw DataError(path + ": inconsistent table sizes");
  }
  for (std::size_t i = 1; i < table.bin_edges.size(); ++i) {
    if (!(table.bin_edges[i] > table.bin_edges[i - 1])) {
      throw DataError(path + ": bin edges must increase strictly");
    }
  }
  for (std::size_t i = 1; i < table.quantiles.size(); ++i) {
    if (table.quantiles[i] < table.quantiles[i - 1]) {
      throw DataError(path + ": quantiles must be nondecreasing");
    }
  }
  return table;
}

}  // namespace satrestore
