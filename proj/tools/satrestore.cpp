// Command-line pipeline: simulate degraded images, restore them with the
// splitting or variational solvers, calibrate uncertainty bounds, and score
// results. Exit codes: 0 ok, 1 bad configuration, 2 bad/missing data,
// 3 numerical failure.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "satrestore/cae.hpp"
#include "satrestore/calibration.hpp"
#include "satrestore/denoiser.hpp"
#include "satrestore/dpir.hpp"
#include "satrestore/errors.hpp"
#include "satrestore/forward_model.hpp"
#include "satrestore/image.hpp"
#include "satrestore/io.hpp"
#include "satrestore/metrics.hpp"
#include "satrestore/rng.hpp"
#include "satrestore/tiling.hpp"
#include "satrestore/vble.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace satrestore;

namespace {

// ---------------------------------------------------------------------------
// Config layering: built-in defaults < --config JSON < --set overrides <
// explicitly passed flags.

json load_job_config(const std::string& path, const std::vector<std::string>& sets) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw ConfigError(path + ": cannot open config");
    try {
      is >> j;
    } catch (const json::exception& e) {
      throw ConfigError(path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(path + ": config must be a JSON object");
  }
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--set expects key=value, got: " + kv);
    }
    std::string ptr = "/" + kv.substr(0, eq);
    std::replace(ptr.begin(), ptr.end(), '.', '/');
    const std::string val = kv.substr(eq + 1);
    json parsed;
    try {
      parsed = json::parse(val);
    } catch (const json::exception&) {
      parsed = val;  // bare strings need no quoting
    }
    try {
      j[json::json_pointer(ptr)] = parsed;
    } catch (const json::exception& e) {
      throw ConfigError("--set " + kv + ": " + e.what());
    }
  }
  return j;
}

template <typename T>
void fold(const CLI::App& cmd, const std::string& flag, const json& j, const std::string& key,
          T& var) {
  if (cmd.count(flag) > 0 || !j.contains(key)) return;
  try {
    var = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

int effective_jobs(int jobs) {
  if (jobs < 1) throw ConfigError("--jobs must be at least 1");
  if (const char* env = std::getenv("SATRESTORE_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || cap < 1) {
      throw ConfigError("SATRESTORE_THREADS must be a positive integer");
    }
    jobs = static_cast<int>(std::min<long>(jobs, cap));
  }
  return jobs;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw DataError(path + ": cannot open for writing");
  os << text;
  if (!os) throw DataError(path + ": write failed");
}

// Kernel taps inlined so a manifest replays without external files.
json fm_to_json(const ForwardModel& fm) {
  return json{{"kernel", json{{"height", fm.kernel.height},
                              {"width", fm.kernel.width},
                              {"taps", fm.kernel.taps}}},
              {"scale", fm.scale},
              {"sigma0", fm.sigma0},
              {"k_gain", fm.k_gain},
              {"quantize", fm.quantize}};
}

ForwardModel fm_from_json(const json& j) {
  ForwardModel fm;
  try {
    const json& k = j.at("kernel");
    Kernel kernel(k.at("height").get<int>(), k.at("width").get<int>());
    kernel.taps = k.at("taps").get<std::vector<double>>();
    if (kernel.taps.size() !=
        static_cast<std::size_t>(kernel.height) * static_cast<std::size_t>(kernel.width)) {
      throw DataError("manifest kernel taps do not match its dimensions");
    }
    fm.kernel = std::move(kernel);
    fm.scale = j.at("scale").get<int>();
    fm.sigma0 = j.at("sigma0").get<double>();
    fm.k_gain = j.at("k_gain").get<double>();
    fm.quantize = j.at("quantize").get<bool>();
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest model: ") + e.what());
  }
  validate(fm);
  return fm;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOpts {
  std::string config, model, out_dir, format = "f32r", replay;
  std::vector<std::string> sets, inputs;
  std::uint64_t seed = 0;
  int target_scale = 1;
};

void run_simulate(const CLI::App& cmd, SimulateOpts o) {
  const json j = load_job_config(o.config, o.sets);
  fold(cmd, "--model", j, "model", o.model);
  fold(cmd, "--out-dir", j, "out_dir", o.out_dir);
  fold(cmd, "--seed", j, "seed", o.seed);
  fold(cmd, "--target-scale", j, "target_scale", o.target_scale);
  fold(cmd, "--format", j, "format", o.format);
  if (o.inputs.empty() && j.contains("inputs")) {
    o.inputs = j.at("inputs").get<std::vector<std::string>>();
  }

  ForwardModel fm;
  if (!o.replay.empty()) {
    std::ifstream is(o.replay);
    if (!is) throw DataError(o.replay + ": cannot open manifest");
    json m;
    try {
      is >> m;
    } catch (const json::exception& e) {
      throw DataError(o.replay + ": " + e.what());
    }
    try {
      fm = fm_from_json(m.at("model"));
      o.seed = m.at("seed").get<std::uint64_t>();
      o.target_scale = m.at("target_scale").get<int>();
      o.format = m.at("format").get<std::string>();
      o.inputs.clear();
      for (const json& p : m.at("pairs")) o.inputs.push_back(p.at("input").get<std::string>());
    } catch (const json::exception& e) {
      throw DataError(o.replay + ": " + e.what());
    }
  } else {
    if (o.model.empty()) throw ConfigError("simulate: --model is required");
    fm = load_forward_model(o.model);
  }
  if (o.out_dir.empty()) throw ConfigError("simulate: --out-dir is required");
  if (o.inputs.empty()) throw ConfigError("simulate: no input images given");
  if (o.format != "f32r" && o.format != "png" && o.format != "pgm") {
    throw ConfigError("simulate: --format must be f32r, png, or pgm");
  }
  fs::create_directories(o.out_dir);

  Rng root(o.seed);
  json pairs = json::array();
  for (std::size_t i = 0; i < o.inputs.size(); ++i) {
    const ImageGrid clean = load_image(o.inputs[i]);
    Rng r = root.substream(i);
    const SimulatedPair p = simulate_pair(clean, fm, o.target_scale, r);
    const std::string stem = fs::path(o.inputs[i]).stem().string();
    const std::string tname = stem + "_target." + o.format;
    const std::string dname = stem + "_degraded." + o.format;
    save_image(p.target, (fs::path(o.out_dir) / tname).string());
    save_image(p.degraded, (fs::path(o.out_dir) / dname).string());
    pairs.push_back(json{{"input", o.inputs[i]},
                         {"target", tname},
                         {"degraded", dname},
                         {"substream", i}});
  }
  const json manifest{{"command", "simulate"}, {"seed", o.seed},
                      {"target_scale", o.target_scale}, {"format", o.format},
                      {"model", fm_to_json(fm)}, {"pairs", pairs}};
  write_text_file((fs::path(o.out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  std::cout << "simulate: wrote " << o.inputs.size() << " pair(s) to " << o.out_dir << "\n";
}

// ---------------------------------------------------------------------------
// restore

// Generative model source for the variational methods: either a weights
// manifest path or "analytic:block=B,tau=T,gamma=G" (shape-bound, so analytic
// instances are built per tile shape).
class ModelFactory {
 public:
  static ModelFactory parse(const std::string& spec) {
    ModelFactory f;
    if (spec.rfind("analytic:", 0) == 0) {
      f.analytic_ = true;
      std::stringstream ss(spec.substr(9));
      std::string kv;
      while (std::getline(ss, kv, ',')) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
          throw ConfigError("analytic model spec expects k=v pairs, got: " + kv);
        }
        const std::string key = kv.substr(0, eq);
        const double val = std::stod(kv.substr(eq + 1));
        if (key == "block") {
          f.block_ = static_cast<int>(val);
        } else if (key == "tau") {
          f.tau_ = val;
        } else if (key == "gamma") {
          f.gamma_ = val;
        } else {
          throw ConfigError("analytic model spec: unknown key '" + key + "'");
        }
      }
    } else {
      f.cae_ = CaeModel::load(spec);
    }
    return f;
  }

  // Output dimensions must divide by this for the model to accept them.
  int divisor() const { return analytic_ ? block_ : cae_->downsample_factor(); }

  std::shared_ptr<const GenerativeModel> instance(int fine_h, int fine_w) {
    if (!analytic_) return cae_;
    std::lock_guard<std::mutex> lock(*mu_);
    auto& slot = shapes_[{fine_h, fine_w}];
    if (!slot) slot = std::make_shared<AnalyticCae>(fine_h, fine_w, block_, tau_, gamma_);
    return slot;
  }

 private:
  bool analytic_ = false;
  int block_ = 8;
  double tau_ = 0.5, gamma_ = 0.05;
  std::shared_ptr<const CaeModel> cae_;
  std::shared_ptr<std::mutex> mu_ = std::make_shared<std::mutex>();
  std::map<std::pair<int, int>, std::shared_ptr<const AnalyticCae>> shapes_;
};

struct RestoreOpts {
  std::string config, model, input, output, method = "satdpir";
  std::vector<std::string> sets;
  // splitting solver
  std::string denoiser = "tv";
  int iters = 8;
  double sigma1 = 20.0 / 255.0;
  int gd_iters = 5, full_gd_iters = 100;
  // variational solver
  std::string cae;
  int opt_iters = 1000, mc_samples = 1, samples = 100;
  double step = 1e-2, alpha = 0.9, init_b = 1.0;
  bool freeze_b = false, b_per_channel = false;
  // shared
  double lambda = std::nan("");  // per-method default when unset
  int tile = 0, overlap = 32, jobs = 1;
  std::uint64_t seed = 0;
  std::string trace, report, emit_samples, emit_quantiles, emit_deviation;
};

struct VbleTileRun {
  std::vector<ImageGrid> samples;
  FitResult fit;
};

VbleTileRun run_vble_tile(const ImageGrid& y, const ForwardModel& fm,
                          const GenerativeModel& model, VbleConfig vc, std::uint64_t job_seed,
                          std::size_t tile_index) {
  Rng base = Rng(job_seed).substream(tile_index);
  vc.seed = base.next_u64();
  VbleTileRun run;
  run.fit = vble_fit(y, fm, model, vc);
  run.samples = sample_posterior(run.fit.state, model, vc.n_posterior_samples, base, vc.mode);
  return run;
}

ImageGrid sample_stddev(const std::vector<ImageGrid>& samples, const ImageGrid& mean) {
  ImageGrid out(mean.height, mean.width);
  for (const ImageGrid& s : samples) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double d = s.data[i] - mean.data[i];
      out.data[i] += d * d;
    }
  }
  for (double& v : out.data) {
    v = std::sqrt(v / static_cast<double>(samples.size() - 1));
  }
  return out;
}

void run_restore(const CLI::App& cmd, RestoreOpts o) {
  const json j = load_job_config(o.config, o.sets);
  fold(cmd, "--model", j, "model", o.model);
  fold(cmd, "--input", j, "input", o.input);
  fold(cmd, "--output", j, "output", o.output);
  fold(cmd, "--method", j, "method", o.method);
  fold(cmd, "--denoiser", j, "denoiser", o.denoiser);
  fold(cmd, "--iters", j, "iters", o.iters);
  fold(cmd, "--sigma1", j, "sigma1", o.sigma1);
  fold(cmd, "--gd-iters", j, "gd_iters", o.gd_iters);
  fold(cmd, "--full-gd-iters", j, "full_gd_iters", o.full_gd_iters);
  fold(cmd, "--cae", j, "cae", o.cae);
  fold(cmd, "--opt-iters", j, "opt_iters", o.opt_iters);
  fold(cmd, "--mc-samples", j, "mc_samples", o.mc_samples);
  fold(cmd, "--samples", j, "samples", o.samples);
  fold(cmd, "--step", j, "step", o.step);
  fold(cmd, "--alpha", j, "alpha", o.alpha);
  fold(cmd, "--freeze-b", j, "freeze_b", o.freeze_b);
  fold(cmd, "--init-b", j, "init_b", o.init_b);
  fold(cmd, "--b-per-channel", j, "b_per_channel", o.b_per_channel);
  fold(cmd, "--lambda", j, "lambda", o.lambda);
  fold(cmd, "--tile", j, "tile", o.tile);
  fold(cmd, "--overlap", j, "overlap", o.overlap);
  fold(cmd, "--jobs", j, "jobs", o.jobs);
  fold(cmd, "--seed", j, "seed", o.seed);
  fold(cmd, "--trace", j, "trace", o.trace);
  fold(cmd, "--report", j, "report", o.report);
  fold(cmd, "--emit-samples", j, "emit_samples", o.emit_samples);
  fold(cmd, "--emit-quantiles", j, "emit_quantiles", o.emit_quantiles);
  fold(cmd, "--emit-deviation", j, "emit_deviation", o.emit_deviation);
  if (j.contains("problem")) {
    // problem names pin the expected upsampling factor; cross-checked below
    const std::string problem = j.at("problem").get<std::string>();
    if (problem != "ir" && problem != "ir_sisr") {
      throw ConfigError("config key 'problem' must be ir or ir_sisr");
    }
  }

  if (o.model.empty()) throw ConfigError("restore: --model is required");
  if (o.input.empty()) throw ConfigError("restore: --input is required");
  if (o.output.empty()) throw ConfigError("restore: --output is required");
  const bool is_vble = o.method == "vble" || o.method == "vble-xz" || o.method == "vble_xz";
  const bool is_dpir = o.method == "satdpir" || o.method == "dpir";
  if (!is_vble && !is_dpir) {
    throw ConfigError("restore: --method must be satdpir, dpir, vble, or vble-xz");
  }
  if (!is_vble && (!o.emit_samples.empty() || !o.emit_quantiles.empty() ||
                   !o.emit_deviation.empty())) {
    throw ConfigError("restore: posterior outputs require a vble method");
  }

  const ForwardModel fm = load_forward_model(o.model);
  const ImageGrid y = load_image(o.input);
  if (j.contains("problem")) {
    const std::string problem = j.at("problem").get<std::string>();
    const int want = problem == "ir" ? 1 : 2;
    if (fm.scale != want) {
      throw ConfigError("restore: problem '" + problem + "' expects a scale-" +
                        std::to_string(want) + " forward model");
    }
  }
  o.jobs = effective_jobs(o.jobs);
  if (o.tile > 0) {
    if (o.overlap < 0 || o.overlap >= o.tile) {
      throw ConfigError("restore: --overlap must lie in [0, tile)");
    }
    if (o.tile % fm.scale != 0) {
      throw ConfigError("restore: tile size must divide by the model scale");
    }
  }

  const int fine_h = y.height * fm.scale, fine_w = y.width * fm.scale;
  const bool tiled = o.tile > 0 && (o.tile < y.height || o.tile < y.width);

  if (is_dpir) {
    const Denoiser den = parse_denoiser_spec(o.denoiser);
    DpirConfig dc;
    dc.n_iters = o.iters;
    dc.sigma1 = o.sigma1;
    dc.lambda = std::isnan(o.lambda) ? 0.23 : o.lambda;
    dc.mode = o.method == "dpir" ? DpirConfig::Mode::DpirFullGd
                                 : DpirConfig::Mode::SatDpirTwoPhase;
    dc.phase2_gd_iters = o.gd_iters;
    dc.full_gd_iters = o.full_gd_iters;

    DpirReport report;
    ImageGrid xhat =
        tiled ? restore_tiled(
                    y, fm.scale, o.tile, o.overlap, o.jobs,
                    [&](const ImageGrid& patch, std::size_t idx) {
                      DpirReport local;
                      ImageGrid r = dpir_restore(patch, fm, den, dc, &local);
                      if (idx == 0) report = std::move(local);
                      return r;
                    },
                    // Real-content apron: keeps the per-tile deconvolution's
                    // periodic-boundary fiction out of the retained pixels.
                    o.overlap)
              : dpir_restore(y, fm, den, dc, &report);
    save_image(xhat, o.output);
    if (!o.trace.empty()) {
      std::ostringstream csv;
      csv << "iteration,sigma_d,mu,sigma_bar2,objective,gd_steps,stalled\n";
      for (std::size_t i = 0; i < report.iters.size(); ++i) {
        const DpirIterStats& st = report.iters[i];
        csv << i << "," << st.sigma_d << "," << st.mu << "," << st.sigma_bar2 << ","
            << st.objective << "," << st.gd_steps << "," << (st.stalled ? 1 : 0) << "\n";
      }
      write_text_file(o.trace, csv.str());
    }
    if (!o.report.empty()) {
      json rj{{"method", o.method}, {"seconds", report.seconds},
              {"schedule", report.schedule}, {"iterations", json::array()}};
      for (std::size_t i = 0; i < report.iters.size(); ++i) {
        const DpirIterStats& st = report.iters[i];
        rj["iterations"].push_back(json{{"iteration", i}, {"sigma_d", st.sigma_d},
                                        {"mu", st.mu}, {"sigma_bar2", st.sigma_bar2},
                                        {"objective", st.objective}, {"gd_steps", st.gd_steps},
                                        {"stalled", st.stalled}});
      }
      write_text_file(o.report, rj.dump(2) + "\n");
    }
    std::cout << "restore: " << o.method << " " << y.height << "x" << y.width << " -> "
              << fine_h << "x" << fine_w << " in " << report.seconds << "s\n";
    return;
  }

  // Variational methods.
  if (o.cae.empty()) throw ConfigError("restore: vble methods require --cae");
  ModelFactory factory = ModelFactory::parse(o.cae);
  const int div = factory.divisor();
  const int tile_fine = tiled ? o.tile * fm.scale : 0;
  if (tiled && tile_fine % div != 0) {
    throw ConfigError("restore: scaled tile size " + std::to_string(tile_fine) +
                      " must divide by the model's factor " + std::to_string(div));
  }
  if (!tiled && (fine_h % div != 0 || fine_w % div != 0)) {
    throw ConfigError("restore: scaled image " + std::to_string(fine_h) + "x" +
                      std::to_string(fine_w) + " must divide by the model's factor " +
                      std::to_string(div) + " (or use a compatible --tile)");
  }

  VbleConfig vc;
  vc.mode = o.method == "vble" ? VbleMode::Vble : VbleMode::VbleXz;
  vc.lambda = std::isnan(o.lambda) ? 0.6 : o.lambda;
  vc.n_opt_iters = o.opt_iters;
  vc.mc_samples_per_step = o.mc_samples;
  vc.optimizer.step = o.step;
  vc.n_posterior_samples = o.samples;
  vc.freeze_b = o.freeze_b;
  vc.init_b = o.init_b;
  vc.b_per_channel = o.b_per_channel;
  validate(vc);

  std::vector<ImageGrid> samples;
  std::vector<FitResult> fits;
  double wall = 0.0;
  if (!tiled) {
    auto model = factory.instance(fine_h, fine_w);
    VbleTileRun run = run_vble_tile(y, fm, *model, vc, o.seed, 0);
    samples = std::move(run.samples);
    fits.push_back(std::move(run.fit));
    wall = fits[0].seconds;
  } else {
    const std::size_t n_tiles = plan_tiles(y.height, y.width, o.tile, o.overlap).size();
    std::vector<VbleTileRun> runs(n_tiles);
    for (int p = 0; p < vc.n_posterior_samples; ++p) {
      ImageGrid blended = restore_tiled(
          y, fm.scale, o.tile, o.overlap, o.jobs,
          [&](const ImageGrid& patch, std::size_t idx) {
            if (p == 0) {
              auto model = factory.instance(patch.height * fm.scale, patch.width * fm.scale);
              runs[idx] = run_vble_tile(patch, fm, *model, vc, o.seed, idx);
            }
            return runs[idx].samples[static_cast<std::size_t>(p)];
          });
      samples.push_back(std::move(blended));
    }
    for (VbleTileRun& r : runs) {
      wall += r.fit.seconds;
      fits.push_back(std::move(r.fit));
    }
  }

  ImageGrid mmse, q_alpha;
  if (samples.size() >= 2) {
    std::tie(mmse, q_alpha) = mmse_and_quantiles(samples, o.alpha);
  } else {
    mmse = samples[0];
    q_alpha = ImageGrid(mmse.height, mmse.width, 0.0);
  }
  save_image(mmse, o.output);
  if (!o.emit_quantiles.empty()) save_image(q_alpha, o.emit_quantiles);
  if (!o.emit_deviation.empty()) {
    if (samples.size() < 2) {
      throw ConfigError("restore: --emit-deviation needs at least 2 samples");
    }
    save_image(sample_stddev(samples, mmse), o.emit_deviation);
  }
  if (!o.emit_samples.empty()) {
    fs::create_directories(o.emit_samples);
    const std::string ext = fs::path(o.output).extension().string();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      std::ostringstream name;
      name << "sample_" << std::setw(3) << std::setfill('0') << i << ext;
      save_image(samples[i], (fs::path(o.emit_samples) / name.str()).string());
    }
  }
  if (!o.trace.empty()) {
    std::ostringstream csv;
    csv << "tile,iteration,elbo\n";
    for (std::size_t t = 0; t < fits.size(); ++t) {
      for (std::size_t i = 0; i < fits[t].elbo_trace.size(); ++i) {
        csv << t << "," << i << "," << fits[t].elbo_trace[i] << "\n";
      }
    }
    write_text_file(o.trace, csv.str());
  }
  int rejected = 0;
  bool warn = false;
  for (const FitResult& f : fits) {
    rejected += f.rejected_steps;
    warn = warn || f.quality_warning;
  }
  if (!o.report.empty()) {
    json rj{{"method", o.method}, {"seconds", wall}, {"samples", samples.size()},
            {"rejected_steps", rejected}, {"quality_warning", warn},
            {"tiles", json::array()}};
    for (std::size_t t = 0; t < fits.size(); ++t) {
      rj["tiles"].push_back(json{{"tile", t}, {"iterations", fits[t].elbo_trace.size()},
                                 {"rejected_steps", fits[t].rejected_steps},
                                 {"clamped_variances", fits[t].clamped_variances},
                                 {"seconds", fits[t].seconds}});
    }
    write_text_file(o.report, rj.dump(2) + "\n");
  }
  if (warn) {
    std::cerr << "warning: " << rejected
              << " optimization step(s) rejected (>10% of a fit); results may be poor\n";
  }
  std::cout << "restore: " << o.method << " " << y.height << "x" << y.width << " -> " << fine_h
            << "x" << fine_w << ", " << samples.size() << " sample(s), fit " << wall << "s\n";
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateOpts {
  std::string config, dir, out;
  std::vector<std::string> sets;
  double alpha = 0.9;
  int bins = 16;
  long min_count = 50;
  std::string truth_suffix = "_truth", mmse_suffix = "_mmse", deviation_suffix = "_deviation";
};

void run_calibrate(const CLI::App& cmd, CalibrateOpts o) {
  const json j = load_job_config(o.config, o.sets);
  fold(cmd, "--dir", j, "dir", o.dir);
  fold(cmd, "--out", j, "out", o.out);
  fold(cmd, "--alpha", j, "alpha", o.alpha);
  fold(cmd, "--bins", j, "bins", o.bins);
  fold(cmd, "--min-count", j, "min_count", o.min_count);
  fold(cmd, "--truth-suffix", j, "truth_suffix", o.truth_suffix);
  fold(cmd, "--mmse-suffix", j, "mmse_suffix", o.mmse_suffix);
  fold(cmd, "--deviation-suffix", j, "deviation_suffix", o.deviation_suffix);
  if (o.dir.empty()) throw ConfigError("calibrate: --dir is required");
  if (o.out.empty()) throw ConfigError("calibrate: --out is required");
  if (!fs::is_directory(o.dir)) throw DataError(o.dir + ": not a directory");

  std::vector<std::pair<ImageGrid, ImageGrid>> pairs;
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(o.dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path p = entry.path();
    const std::string stem = p.stem().string();
    if (stem.size() <= o.deviation_suffix.size() ||
        stem.substr(stem.size() - o.deviation_suffix.size()) != o.deviation_suffix) {
      continue;
    }
    const std::string base = stem.substr(0, stem.size() - o.deviation_suffix.size());
    const std::string ext = p.extension().string();
    const fs::path truth = p.parent_path() / (base + o.truth_suffix + ext);
    const fs::path mmse = p.parent_path() / (base + o.mmse_suffix + ext);
    if (!fs::exists(truth)) throw DataError(truth.string() + ": missing calibration truth");
    if (!fs::exists(mmse)) throw DataError(mmse.string() + ": missing calibration mmse");
    const ImageGrid dev = load_image(p.string());
    const ImageGrid t = load_image(truth.string());
    const ImageGrid m = load_image(mmse.string());
    require_same_shape(t, m, "calibrate inputs");
    ImageGrid err(t.height, t.width);
    for (std::size_t i = 0; i < err.size(); ++i) err.data[i] = t.data[i] - m.data[i];
    pairs.emplace_back(dev, std::move(err));
    names.push_back(base);
  }
  if (pairs.empty()) {
    throw DataError(o.dir + ": no '*" + o.deviation_suffix + ".*' calibration triplets found");
  }
  std::sort(names.begin(), names.end());

  const CalibrationTable table = calibrate(pairs, o.alpha, o.bins, o.min_count);
  save_calibration_table(table, o.out);
  std::cout << "calibrate: " << pairs.size() << " triplet(s), alpha " << o.alpha << "\n";
  for (std::size_t b = 0; b < table.quantiles.size(); ++b) {
    std::cout << "  bin " << b << " [" << table.bin_edges[b] << ", " << table.bin_edges[b + 1]
              << "): count " << table.counts[b] << ", bound " << table.quantiles[b] << "\n";
  }
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOpts {
  std::string config, truth, restored, bound, out;
  std::string coverage_out, mmse, samples_dir;
  std::vector<std::string> sets;
};

std::vector<fs::path> image_files(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".f32r" || ext == ".png" || ext == ".pgm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

void run_evaluate(const CLI::App& cmd, EvaluateOpts o) {
  const json j = load_job_config(o.config, o.sets);
  fold(cmd, "--truth", j, "truth", o.truth);
  fold(cmd, "--restored", j, "restored", o.restored);
  fold(cmd, "--bound", j, "bound", o.bound);
  fold(cmd, "--out", j, "out", o.out);
  fold(cmd, "--coverage-out", j, "coverage_out", o.coverage_out);
  fold(cmd, "--mmse", j, "mmse", o.mmse);
  fold(cmd, "--samples-dir", j, "samples_dir", o.samples_dir);
  if (o.truth.empty()) throw ConfigError("evaluate: --truth is required");

  if (!o.coverage_out.empty()) {
    if (o.mmse.empty() || o.samples_dir.empty()) {
      throw ConfigError("evaluate: --coverage-out needs --mmse and --samples-dir");
    }
    const ImageGrid truth = load_image(o.truth);
    const ImageGrid mmse = load_image(o.mmse);
    std::vector<ImageGrid> samples;
    for (const fs::path& p : image_files(o.samples_dir)) samples.push_back(load_image(p.string()));
    if (samples.size() < 2) {
      throw DataError(o.samples_dir + ": need at least 2 sample images");
    }
    std::vector<double> alphas;
    for (int a = 5; a <= 95; a += 5) alphas.push_back(a / 100.0);
    alphas.push_back(0.99);
    std::ostringstream csv;
    csv << "alpha,coverage,stderr\n";
    for (const CoveragePoint& pt : coverage_curve(truth, mmse, samples, alphas)) {
      csv << pt.alpha << "," << pt.coverage << "," << pt.stderr_est << "\n";
    }
    write_text_file(o.coverage_out, csv.str());
    std::cout << "evaluate: coverage over " << samples.size() << " samples -> " << o.coverage_out
              << "\n";
    if (o.restored.empty()) return;
  }

  if (o.restored.empty()) throw ConfigError("evaluate: --restored is required");
  std::vector<std::pair<fs::path, fs::path>> pairs;  // (truth, restored)
  std::vector<fs::path> bounds;
  const bool with_bound = !o.bound.empty();
  if (fs::is_directory(o.truth)) {
    if (!fs::is_directory(o.restored)) {
      throw ConfigError("evaluate: --restored must be a directory when --truth is");
    }
    std::vector<std::string> missing;
    for (const fs::path& t : image_files(o.truth)) {
      const fs::path r = fs::path(o.restored) / t.filename();
      if (!fs::exists(r)) {
        missing.push_back(r.string());
        continue;
      }
      pairs.emplace_back(t, r);
      if (with_bound) {
        const fs::path b = fs::path(o.bound) / t.filename();
        if (!fs::exists(b)) {
          missing.push_back(b.string());
          continue;
        }
        bounds.push_back(b);
      }
    }
    if (!missing.empty()) {
      std::string list;
      for (const std::string& m : missing) list += (list.empty() ? "" : ", ") + m;
      throw DataError("evaluate: missing files: " + list);
    }
    if (pairs.empty()) throw DataError(o.truth + ": no image files to evaluate");
  } else {
    pairs.emplace_back(o.truth, o.restored);
    if (with_bound) bounds.emplace_back(o.bound);
  }

  std::ostringstream csv;
  csv << "name,psnr,ssim" << (with_bound ? ",icp\n" : "\n");
  double sum_psnr = 0, sum_ssim = 0, sum_icp = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const ImageGrid t = load_image(pairs[i].first.string());
    const ImageGrid r = load_image(pairs[i].second.string());
    const double p = psnr(t, r);
    const double s = ssim(t, r);
    sum_psnr += p;
    sum_ssim += s;
    csv << pairs[i].first.filename().string() << "," << p << "," << s;
    if (with_bound) {
      const double c = icp(t, r, load_image(bounds[i].string()));
      sum_icp += c;
      csv << "," << c;
    }
    csv << "\n";
  }
  const double n = static_cast<double>(pairs.size());
  csv << "aggregate," << sum_psnr / n << "," << sum_ssim / n;
  if (with_bound) csv << "," << sum_icp / n;
  csv << "\n";
  if (o.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text_file(o.out, csv.str());
    std::cout << "evaluate: " << pairs.size() << " image(s) -> " << o.out << "\n";
  }
}

// ---------------------------------------------------------------------------
// psf + cae inspect

struct PsfOpts {
  std::string config, out;
  std::vector<std::string> sets;
  double mtf = 0.15;
  int size = 21;
};

void run_psf(const CLI::App& cmd, PsfOpts o) {
  const json j = load_job_config(o.config, o.sets);
  fold(cmd, "--mtf", j, "mtf", o.mtf);
  fold(cmd, "--size", j, "size", o.size);
  fold(cmd, "--out", j, "out", o.out);
  if (o.out.empty()) throw ConfigError("psf: --out is required");
  const Kernel k = psf_from_mtf({o.mtf, o.size});
  ImageGrid img(k.height, k.width);
  img.data = k.taps;
  save_f32r(img, o.out);
  std::cout << "psf: " << k.height << "x" << k.width << " kernel, nyquist response "
            << measure_mtf_nyquist(k, 0) << " (v) / " << measure_mtf_nyquist(k, 1)
            << " (h) for target " << o.mtf << " -> " << o.out << "\n";
}

void run_cae_inspect(const std::string& manifest) {
  if (manifest.empty()) throw ConfigError("cae inspect: --model is required");
  std::cout << CaeModel::load(manifest)->describe();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"satellite image restoration: simulation, splitting and variational solvers, "
               "uncertainty calibration, evaluation"};
  app.require_subcommand(1);

  SimulateOpts so;
  CLI::App* sim = app.add_subcommand("simulate", "degrade clean images through a forward model");
  sim->add_option("inputs", so.inputs, "clean input images (f32r/png/pgm)");
  sim->add_option("--model", so.model, "forward model JSON");
  sim->add_option("--out-dir", so.out_dir, "output directory");
  sim->add_option("--seed", so.seed, "noise seed");
  sim->add_option("--target-scale", so.target_scale,
                  "decimation from the clean grid to the reference grid");
  sim->add_option("--format", so.format, "output format: f32r, png, pgm");
  sim->add_option("--replay", so.replay, "re-run a previous run's manifest.json");
  sim->add_option("--config", so.config, "JSON job config");
  sim->add_option("--set", so.sets, "override config key=value")->take_all();

  RestoreOpts ro;
  CLI::App* res = app.add_subcommand("restore", "restore a degraded image");
  res->add_option("--model", ro.model, "forward model JSON");
  res->add_option("--input", ro.input, "degraded image");
  res->add_option("--output", ro.output, "restored image path (mmse for vble methods)");
  res->add_option("--method", ro.method, "satdpir, dpir, vble, or vble-xz");
  res->add_option("--denoiser", ro.denoiser, "tv[:k=v,...], dct[:k=v,...], or cnn:PATH");
  res->add_option("--iters", ro.iters, "solver iterations");
  res->add_option("--sigma1", ro.sigma1, "denoiser schedule start");
  res->add_option("--gd-iters", ro.gd_iters, "refinement steps in the second phase");
  res->add_option("--full-gd-iters", ro.full_gd_iters, "refinement steps in dpir mode");
  res->add_option("--cae", ro.cae, "weights manifest or analytic:block=B,tau=T,gamma=G");
  res->add_option("--opt-iters", ro.opt_iters, "variational optimization steps");
  res->add_option("--mc-samples", ro.mc_samples, "Monte Carlo samples per step");
  res->add_option("--samples", ro.samples, "posterior samples to draw");
  res->add_option("--step", ro.step, "optimizer step size");
  res->add_option("--alpha", ro.alpha, "quantile level for --emit-quantiles");
  res->add_flag("--freeze-b", ro.freeze_b, "keep the image-space scale at --init-b");
  res->add_option("--init-b", ro.init_b, "initial image-space scale");
  res->add_flag("--b-per-channel", ro.b_per_channel, "tie the image-space scale per channel");
  res->add_option("--lambda", ro.lambda, "regularization weight (0.23 splitting, 0.6 vble)");
  res->add_option("--tile", ro.tile, "tile size on the measurement grid (0: whole image)");
  res->add_option("--overlap", ro.overlap, "tile overlap");
  res->add_option("--jobs", ro.jobs, "worker threads (capped by SATRESTORE_THREADS)");
  res->add_option("--seed", ro.seed, "sampling seed");
  res->add_option("--trace", ro.trace, "write per-iteration CSV");
  res->add_option("--report", ro.report, "write a solver report JSON (includes timings)");
  res->add_option("--emit-samples", ro.emit_samples, "directory for posterior samples");
  res->add_option("--emit-quantiles", ro.emit_quantiles, "per-pixel quantile map path");
  res->add_option("--emit-deviation", ro.emit_deviation, "per-pixel sample stddev path");
  res->add_option("--config", ro.config, "JSON job config");
  res->add_option("--set", ro.sets, "override config key=value")->take_all();

  CalibrateOpts co;
  CLI::App* cal = app.add_subcommand("calibrate", "fit an error-bound table from triplets");
  cal->add_option("--dir", co.dir, "directory of *_truth/*_mmse/*_deviation images");
  cal->add_option("--out", co.out, "output table JSON");
  cal->add_option("--alpha", co.alpha, "target coverage level");
  cal->add_option("--bins", co.bins, "equal-population bins");
  cal->add_option("--min-count", co.min_count, "minimum pixels per bin");
  cal->add_option("--truth-suffix", co.truth_suffix, "suffix of ground-truth images");
  cal->add_option("--mmse-suffix", co.mmse_suffix, "suffix of restored means");
  cal->add_option("--deviation-suffix", co.deviation_suffix, "suffix of predicted deviations");
  cal->add_option("--config", co.config, "JSON job config");
  cal->add_option("--set", co.sets, "override config key=value")->take_all();

  EvaluateOpts eo;
  CLI::App* ev = app.add_subcommand("evaluate", "score restored images against ground truth");
  ev->add_option("--truth", eo.truth, "ground-truth image or directory");
  ev->add_option("--restored", eo.restored, "restored image or directory");
  ev->add_option("--bound", eo.bound, "error-bound image or directory (adds icp)");
  ev->add_option("--out", eo.out, "metrics CSV (default: stdout)");
  ev->add_option("--coverage-out", eo.coverage_out, "coverage curve CSV");
  ev->add_option("--mmse", eo.mmse, "mmse image for the coverage curve");
  ev->add_option("--samples-dir", eo.samples_dir, "posterior samples for the coverage curve");
  ev->add_option("--config", eo.config, "JSON job config");
  ev->add_option("--set", eo.sets, "override config key=value")->take_all();

  PsfOpts po;
  CLI::App* psf = app.add_subcommand("psf", "build a Gaussian kernel from its Nyquist response");
  psf->add_option("--mtf", po.mtf, "target transfer magnitude at Nyquist");
  psf->add_option("--size", po.size, "kernel size (odd)");
  psf->add_option("--out", po.out, "output kernel F32R");
  psf->add_option("--config", po.config, "JSON job config");
  psf->add_option("--set", po.sets, "override config key=value")->take_all();

  std::string cae_model;
  CLI::App* cae = app.add_subcommand("cae", "autoencoder utilities");
  cae->require_subcommand(1);
  CLI::App* inspect = cae->add_subcommand("inspect", "print network shapes at the reference size");
  inspect->add_option("--model", cae_model, "weights manifest JSON");

  try {
    app.parse(argc, argv);
    if (sim->parsed()) run_simulate(*sim, so);
    if (res->parsed()) run_restore(*res, ro);
    if (cal->parsed()) run_calibrate(*cal, co);
    if (ev->parsed()) run_evaluate(*ev, eo);
    if (psf->parsed()) run_psf(*psf, po);
    if (cae->parsed() && inspect->parsed()) run_cae_inspect(cae_model);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
