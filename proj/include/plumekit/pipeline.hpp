#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plumekit/core.hpp"
#include "plumekit/datasetgen.hpp"
#include "plumekit/inversion.hpp"
#include "plumekit/io.hpp"
#include "plumekit/losses.hpp"
#include "plumekit/metrics.hpp"
#include "plumekit/parallel.hpp"
#include "plumekit/plumeops.hpp"
#include "plumekit/plumesim.hpp"
#include "plumekit/random.hpp"
#include "plumekit/spectral.hpp"

namespace plumekit::pipeline {

namespace fs = std::filesystem;
using io::Json;

/// Set once by the executable from its build definition; echoed into every
/// artifact directory.
inline std::string& tool_version() {
  static std::string version = "dev";
  return version;
}

// ---------------------------------------------------------------------------
// RunConfig: one structured document drives every subcommand. Unknown keys
// are rejected with the offending path in the message.
// ---------------------------------------------------------------------------

struct SimSection {
  std::vector<double> rates_kgph = {500.0, 1000.0, 1500.0, 2000.0};
  std::vector<double> winds_mps = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  int height = 256;
  int width = 256;
  double pixel_size_m = 30.0;
  double eddy_diffusivity_m2s = 15.0;
  double turbulence_intensity = 0.3;
  double duration_s = 9000.0;
  double snapshot_interval_s = 30.0;
  double dt_s = 0.0;  // 0 selects the largest stable step
  int source_row = -1;
  int source_col = -1;
};

struct DatasetSection {
  std::string snapshot_dir;
  std::string base_map_dir;
  int synth_base_maps = 4;
  int canvas_height = 256;
  int canvas_width = 256;
  dataset::SubsetCounts train{8, 8, 8};
  dataset::SubsetCounts val{4, 4, 4};
  dataset::SubsetCounts test{4, 4, 4};
  double max_overlap = dataset::kDefaultMaxOverlap;
  double noise_sigma_ppb = 35.0;
  double scale_min = 1.0;
  double scale_max = 3.0;
  double ime_min = 300.0;
};

struct SpectralSection {
  std::string absorption_csv;
  int band_count = spectral::kDefaultBandCount;
  double band_min_nm = 2050.0;
  double band_max_nm = 2450.0;
  double band_fwhm_nm = 10.0;
  double air_column_per_cm2 = 0.0;  // 0 computes the 0-3000 m default
};

struct InversionSection {
  int clusters = 2;
  double shrinkage = 0.05;
  bool columnwise = false;
};

struct SegmentationSection {
  std::string strategy = "connected_components";
  double detect_threshold_ppb = 70.0;
  int morph_radius_px = 1;
  double ime_min = 300.0;
  double area_min = 300.0;
};

struct EstimationSection {
  double k_kg_per_ppb = kImeScaleKgPerPpb;
  double u10_mps = 5.0;  // used when a map sidecar carries no wind
};

struct EvalSection {
  std::string dataset_dir;
  std::string predictions_dir;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "runs/out";
  std::string in;
  int threads = 1;
  SimSection sim;
  DatasetSection dataset_cfg;
  SpectralSection spectral_cfg;
  InversionSection inversion_cfg;
  SegmentationSection segmentation;
  EstimationSection estimation;
  EvalSection eval_cfg;
};

namespace detail {

inline void check_keys(const Json& j, std::initializer_list<const char*> allowed,
                       const std::string& prefix) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) known = true;
    if (!known)
      throw ConfigError("unknown config key: " + prefix + it.key());
  }
}

inline double num(const Json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number())
    throw ConfigError(std::string("config key is not a number: ") + key);
  return j[key].get<double>();
}
inline int integer(const Json& j, const char* key, int fallback) {
  return int(num(j, key, double(fallback)));
}
inline std::string str(const Json& j, const char* key, std::string fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_string())
    throw ConfigError(std::string("config key is not a string: ") + key);
  return j[key].get<std::string>();
}
inline bool boolean(const Json& j, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_boolean())
    throw ConfigError(std::string("config key is not a boolean: ") + key);
  return j[key].get<bool>();
}
inline std::vector<double> numbers(const Json& j, const char* key,
                                   std::vector<double> fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_array())
    throw ConfigError(std::string("config key is not an array: ") + key);
  return j[key].get<std::vector<double>>();
}

inline dataset::SubsetCounts counts(const Json& j, const char* key,
                                    dataset::SubsetCounts fallback,
                                    const std::string& prefix) {
  if (!j.contains(key)) return fallback;
  const Json& c = j[key];
  check_keys(c, {"rate", "seg", "inv"}, prefix + key + ".");
  dataset::SubsetCounts out = fallback;
  out.rate = integer(c, "rate", out.rate);
  out.seg = integer(c, "seg", out.seg);
  out.inv = integer(c, "inv", out.inv);
  return out;
}

}  // namespace detail

inline RunConfig parse_config(const Json& j) {
  detail::check_keys(j,
                     {"seed", "out", "in", "threads", "sim", "dataset",
                      "spectral", "inversion", "segmentation", "estimation",
                      "eval"},
                     "");
  RunConfig config;
  if (j.contains("seed")) {
    if (!j["seed"].is_number())
      throw ConfigError("config key is not a number: seed");
    config.seed = j["seed"].get<std::uint64_t>();
  }
  config.out = detail::str(j, "out", config.out);
  config.in = detail::str(j, "in", config.in);
  config.threads = detail::integer(j, "threads", config.threads);

  if (j.contains("sim")) {
    const Json& s = j["sim"];
    detail::check_keys(s,
                       {"rates_kgph", "winds_mps", "height", "width",
                        "pixel_size_m", "eddy_diffusivity_m2s",
                        "turbulence_intensity", "duration_s",
                        "snapshot_interval_s", "dt_s", "source_row",
                        "source_col"},
                       "sim.");
    SimSection& sim = config.sim;
    sim.rates_kgph = detail::numbers(s, "rates_kgph", sim.rates_kgph);
    sim.winds_mps = detail::numbers(s, "winds_mps", sim.winds_mps);
    sim.height = detail::integer(s, "height", sim.height);
    sim.width = detail::integer(s, "width", sim.width);
    sim.pixel_size_m = detail::num(s, "pixel_size_m", sim.pixel_size_m);
    sim.eddy_diffusivity_m2s =
        detail::num(s, "eddy_diffusivity_m2s", sim.eddy_diffusivity_m2s);
    sim.turbulence_intensity =
        detail::num(s, "turbulence_intensity", sim.turbulence_intensity);
    sim.duration_s = detail::num(s, "duration_s", sim.duration_s);
    sim.snapshot_interval_s =
        detail::num(s, "snapshot_interval_s", sim.snapshot_interval_s);
    sim.dt_s = detail::num(s, "dt_s", sim.dt_s);
    sim.source_row = detail::integer(s, "source_row", sim.source_row);
    sim.source_col = detail::integer(s, "source_col", sim.source_col);
  }

  if (j.contains("dataset")) {
    const Json& d = j["dataset"];
    detail::check_keys(d,
                       {"snapshot_dir", "base_map_dir", "synth_base_maps",
                        "canvas_height", "canvas_width", "counts",
                        "max_overlap", "noise_sigma_ppb", "scale_min",
                        "scale_max", "ime_min"},
                       "dataset.");
    DatasetSection& ds = config.dataset_cfg;
    ds.snapshot_dir = detail::str(d, "snapshot_dir", ds.snapshot_dir);
    ds.base_map_dir = detail::str(d, "base_map_dir", ds.base_map_dir);
    ds.synth_base_maps = detail::integer(d, "synth_base_maps", ds.synth_base_maps);
    ds.canvas_height = detail::integer(d, "canvas_height", ds.canvas_height);
    ds.canvas_width = detail::integer(d, "canvas_width", ds.canvas_width);
    if (d.contains("counts")) {
      detail::check_keys(d["counts"], {"train", "val", "test"},
                         "dataset.counts.");
      ds.train = detail::counts(d["counts"], "train", ds.train, "dataset.counts.");
      ds.val = detail::counts(d["counts"], "val", ds.val, "dataset.counts.");
      ds.test = detail::counts(d["counts"], "test", ds.test, "dataset.counts.");
    }
    ds.max_overlap = detail::num(d, "max_overlap", ds.max_overlap);
    ds.noise_sigma_ppb = detail::num(d, "noise_sigma_ppb", ds.noise_sigma_ppb);
    ds.scale_min = detail::num(d, "scale_min", ds.scale_min);
    ds.scale_max = detail::num(d, "scale_max", ds.scale_max);
    ds.ime_min = detail::num(d, "ime_min", ds.ime_min);
  }

  if (j.contains("spectral")) {
    const Json& s = j["spectral"];
    detail::check_keys(s,
                       {"absorption_csv", "band_count", "band_min_nm",
                        "band_max_nm", "band_fwhm_nm", "air_column_per_cm2"},
                       "spectral.");
    SpectralSection& sp = config.spectral_cfg;
    sp.absorption_csv = detail::str(s, "absorption_csv", sp.absorption_csv);
    sp.band_count = detail::integer(s, "band_count", sp.band_count);
    sp.band_min_nm = detail::num(s, "band_min_nm", sp.band_min_nm);
    sp.band_max_nm = detail::num(s, "band_max_nm", sp.band_max_nm);
    sp.band_fwhm_nm = detail::num(s, "band_fwhm_nm", sp.band_fwhm_nm);
    sp.air_column_per_cm2 =
        detail::num(s, "air_column_per_cm2", sp.air_column_per_cm2);
  }

  if (j.contains("inversion")) {
    const Json& s = j["inversion"];
    detail::check_keys(s, {"clusters", "shrinkage", "columnwise"}, "inversion.");
    config.inversion_cfg.clusters =
        detail::integer(s, "clusters", config.inversion_cfg.clusters);
    config.inversion_cfg.shrinkage =
        detail::num(s, "shrinkage", config.inversion_cfg.shrinkage);
    config.inversion_cfg.columnwise =
        detail::boolean(s, "columnwise", config.inversion_cfg.columnwise);
  }

  if (j.contains("segmentation")) {
    const Json& s = j["segmentation"];
    detail::check_keys(s,
                       {"strategy", "detect_threshold_ppb", "morph_radius_px",
                        "ime_min", "area_min"},
                       "segmentation.");
    SegmentationSection& seg = config.segmentation;
    seg.strategy = detail::str(s, "strategy", seg.strategy);
    if (seg.strategy != "connected_components" &&
        seg.strategy != "active_contour")
      throw ConfigError("segmentation.strategy must be connected_components "
                        "or active_contour");
    seg.detect_threshold_ppb =
        detail::num(s, "detect_threshold_ppb", seg.detect_threshold_ppb);
    seg.morph_radius_px = detail::integer(s, "morph_radius_px", seg.morph_radius_px);
    seg.ime_min = detail::num(s, "ime_min", seg.ime_min);
    seg.area_min = detail::num(s, "area_min", seg.area_min);
  }

  if (j.contains("estimation")) {
    const Json& s = j["estimation"];
    detail::check_keys(s, {"k_kg_per_ppb", "u10_mps"}, "estimation.");
    config.estimation.k_kg_per_ppb =
        detail::num(s, "k_kg_per_ppb", config.estimation.k_kg_per_ppb);
    config.estimation.u10_mps =
        detail::num(s, "u10_mps", config.estimation.u10_mps);
  }

  if (j.contains("eval")) {
    const Json& s = j["eval"];
    detail::check_keys(s, {"dataset_dir", "predictions_dir"}, "eval.");
    config.eval_cfg.dataset_dir =
        detail::str(s, "dataset_dir", config.eval_cfg.dataset_dir);
    config.eval_cfg.predictions_dir =
        detail::str(s, "predictions_dir", config.eval_cfg.predictions_dir);
  }
  return config;
}

inline RunConfig load_config(const fs::path& path) {
  return parse_config(io::read_json(path));
}

inline Json config_to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["in"] = c.in;
  j["threads"] = c.threads;
  Json sim;
  sim["rates_kgph"] = c.sim.rates_kgph;
  sim["winds_mps"] = c.sim.winds_mps;
  sim["height"] = c.sim.height;
  sim["width"] = c.sim.width;
  sim["pixel_size_m"] = c.sim.pixel_size_m;
  sim["eddy_diffusivity_m2s"] = c.sim.eddy_diffusivity_m2s;
  sim["turbulence_intensity"] = c.sim.turbulence_intensity;
  sim["duration_s"] = c.sim.duration_s;
  sim["snapshot_interval_s"] = c.sim.snapshot_interval_s;
  sim["dt_s"] = c.sim.dt_s;
  sim["source_row"] = c.sim.source_row;
  sim["source_col"] = c.sim.source_col;
  j["sim"] = sim;
  Json ds;
  ds["snapshot_dir"] = c.dataset_cfg.snapshot_dir;
  ds["base_map_dir"] = c.dataset_cfg.base_map_dir;
  ds["synth_base_maps"] = c.dataset_cfg.synth_base_maps;
  ds["canvas_height"] = c.dataset_cfg.canvas_height;
  ds["canvas_width"] = c.dataset_cfg.canvas_width;
  Json counts;
  for (const auto& [name, sc] :
       std::initializer_list<std::pair<const char*, dataset::SubsetCounts>>{
           {"train", c.dataset_cfg.train},
           {"val", c.dataset_cfg.val},
           {"test", c.dataset_cfg.test}}) {
    Json one;
    one["rate"] = sc.rate;
    one["seg"] = sc.seg;
    one["inv"] = sc.inv;
    counts[name] = one;
  }
  ds["counts"] = counts;
  ds["max_overlap"] = c.dataset_cfg.max_overlap;
  ds["noise_sigma_ppb"] = c.dataset_cfg.noise_sigma_ppb;
  ds["scale_min"] = c.dataset_cfg.scale_min;
  ds["scale_max"] = c.dataset_cfg.scale_max;
  ds["ime_min"] = c.dataset_cfg.ime_min;
  j["dataset"] = ds;
  Json sp;
  sp["absorption_csv"] = c.spectral_cfg.absorption_csv;
  sp["band_count"] = c.spectral_cfg.band_count;
  sp["band_min_nm"] = c.spectral_cfg.band_min_nm;
  sp["band_max_nm"] = c.spectral_cfg.band_max_nm;
  sp["band_fwhm_nm"] = c.spectral_cfg.band_fwhm_nm;
  sp["air_column_per_cm2"] = c.spectral_cfg.air_column_per_cm2;
  j["spectral"] = sp;
  Json inv;
  inv["clusters"] = c.inversion_cfg.clusters;
  inv["shrinkage"] = c.inversion_cfg.shrinkage;
  inv["columnwise"] = c.inversion_cfg.columnwise;
  j["inversion"] = inv;
  Json seg;
  seg["strategy"] = c.segmentation.strategy;
  seg["detect_threshold_ppb"] = c.segmentation.detect_threshold_ppb;
  seg["morph_radius_px"] = c.segmentation.morph_radius_px;
  seg["ime_min"] = c.segmentation.ime_min;
  seg["area_min"] = c.segmentation.area_min;
  j["segmentation"] = seg;
  Json est;
  est["k_kg_per_ppb"] = c.estimation.k_kg_per_ppb;
  est["u10_mps"] = c.estimation.u10_mps;
  j["estimation"] = est;
  Json ev;
  ev["dataset_dir"] = c.eval_cfg.dataset_dir;
  ev["predictions_dir"] = c.eval_cfg.predictions_dir;
  j["eval"] = ev;
  return j;
}

// ---------------------------------------------------------------------------
// Shared resolution helpers
// ---------------------------------------------------------------------------

struct SpectralContext {
  AbsorptionTable table;
  spectral::SpectralResponse srf;
  double air_column = 0.0;
  std::vector<double> band_centers;
  std::vector<double> band_fwhm;
  std::vector<double> unit_depth;  // band-convolved optical depth per ppb
};

inline SpectralContext resolve_spectral(const SpectralSection& section) {
  SpectralContext ctx;
  ctx.table = section.absorption_csv.empty()
                  ? spectral::synthetic_ch4_table()
                  : io::read_absorption_csv(section.absorption_csv);
  ctx.table.validate();
  if (section.band_count < 1) throw ConfigError("spectral.band_count < 1");
  ctx.band_centers.resize(std::size_t(section.band_count));
  for (int b = 0; b < section.band_count; ++b) {
    const double t = section.band_count == 1
                         ? 0.5
                         : double(b) / double(section.band_count - 1);
    ctx.band_centers[std::size_t(b)] =
        section.band_min_nm + t * (section.band_max_nm - section.band_min_nm);
  }
  ctx.band_fwhm.assign(std::size_t(section.band_count), section.band_fwhm_nm);
  ctx.srf = spectral::build_srf(ctx.band_centers, ctx.band_fwhm,
                                ctx.table.wavelength_nm);
  ctx.air_column = section.air_column_per_cm2 > 0.0
                       ? section.air_column_per_cm2
                       : spectral::default_air_column(ctx.table.temperature_k,
                                                      ctx.table.pressure_pa);
  ctx.unit_depth = spectral::band_convolve(
      spectral::unit_optical_depth(ctx.table, ctx.air_column), ctx.srf);
  return ctx;
}

inline plumeops::SegmentationConfig to_segmentation_config(
    const SegmentationSection& s) {
  plumeops::SegmentationConfig config;
  config.strategy = s.strategy == "active_contour"
                        ? plumeops::SegmentationStrategy::active_contour
                        : plumeops::SegmentationStrategy::connected_components;
  config.detect_threshold_ppb = s.detect_threshold_ppb;
  config.morph_radius_px = s.morph_radius_px;
  config.ime_min = s.ime_min;
  config.area_min = s.area_min;
  return config;
}

/// Resolved config + tool version, dropped into every artifact directory.
inline void write_run_metadata(const fs::path& dir, const RunConfig& config,
                               const std::string& command) {
  fs::create_directories(dir);
  Json j;
  j["version"] = tool_version();
  j["command"] = command;
  j["config"] = config_to_json(config);
  io::write_json(dir / "resolved_config.json", j);
}

namespace detail {

inline std::vector<fs::path> find_rasters(const fs::path& root) {
  if (!fs::exists(root))
    throw FormatError("input path does not exist: " + root.string());
  std::vector<fs::path> out;
  if (fs::is_regular_file(root)) {
    out.push_back(root);
    return out;
  }
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file() && entry.path().extension() == ".f32")
      out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline bool is_cube_raster(const fs::path& raster) {
  fs::path side = raster;
  side.replace_extension(".json");
  if (!fs::exists(side)) return false;
  const Json meta = io::read_json(side);
  return meta.contains("bands");
}

/// train_inv_0000.cube.f32 -> train_inv_0000
inline std::string raster_id(const fs::path& raster) {
  std::string stem = raster.stem().string();
  const std::string suffix = ".cube";
  if (stem.size() > suffix.size() &&
      stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) == 0)
    stem.resize(stem.size() - suffix.size());
  return stem;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

/// simulate: sweep the configured (rate, wind) grid, one deterministic RNG
/// stream per run, snapshots under <out>/snapshots.
inline fs::path cmd_simulate(const RunConfig& config) {
  const fs::path out_dir = fs::path(config.out) / "snapshots";
  write_run_metadata(out_dir, config, "simulate");
  const SimSection& s = config.sim;
  struct Run {
    std::size_t rate_idx, wind_idx;
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < s.rates_kgph.size(); ++i)
    for (std::size_t j = 0; j < s.winds_mps.size(); ++j) runs.push_back({i, j});

  parallel_for(runs.size(), config.threads, [&](std::size_t k) {
    const Run run = runs[k];
    sim::SimConfig sc;
    sc.height = s.height;
    sc.width = s.width;
    sc.pixel_size_m = s.pixel_size_m;
    sc.emission_rate_kgph = s.rates_kgph[run.rate_idx];
    sc.wind_u10_mps = s.winds_mps[run.wind_idx];
    sc.eddy_diffusivity_m2s = s.eddy_diffusivity_m2s;
    sc.turbulence_intensity = s.turbulence_intensity;
    sc.source_row = s.source_row;
    sc.source_col = s.source_col;
    sc.duration_s = s.duration_s;
    sc.snapshot_interval_s = s.snapshot_interval_s;
    sc.dt_s = s.dt_s > 0.0 ? s.dt_s : sim::stable_dt(sc);
    sc.seed = derive_seed(config.seed, "sim", run.rate_idx, run.wind_idx);
    const auto snapshots = sim::simulate_plume(sc);
    for (const auto& snap : snapshots) {
      char name[64];
      std::snprintf(name, sizeof(name), "r%02zu_w%02zu_t%06d.f32",
                    run.rate_idx, run.wind_idx, int(snap.sim_time_s));
      io::write_snapshot(out_dir / name, snap);
    }
  });
  return out_dir;
}

/// dataset: build the three subsets from a snapshot store.
inline fs::path cmd_dataset(const RunConfig& config) {
  const fs::path out_dir = fs::path(config.out) / "dataset";
  write_run_metadata(out_dir, config, "dataset");
  const DatasetSection& d = config.dataset_cfg;
  dataset::DatasetConfig dc;
  dc.snapshot_dir = d.snapshot_dir.empty()
                        ? fs::path(config.out) / "snapshots"
                        : fs::path(d.snapshot_dir);
  dc.base_map_dir = d.base_map_dir;
  dc.synth_base_maps = d.synth_base_maps;
  dc.canvas_height = d.canvas_height;
  dc.canvas_width = d.canvas_width;
  dc.train = d.train;
  dc.val = d.val;
  dc.test = d.test;
  dc.max_overlap = d.max_overlap;
  dc.noise_sigma_ppb = d.noise_sigma_ppb;
  dc.scale_min = d.scale_min;
  dc.scale_max = d.scale_max;
  dc.ime_min = d.ime_min;
  dc.master_seed = derive_seed(config.seed, "dataset");
  dc.threads = config.threads;
  const SpectralContext ctx = resolve_spectral(config.spectral_cfg);
  dc.table = ctx.table;
  dc.band_centers_nm = ctx.band_centers;
  dc.band_fwhm_nm = ctx.band_fwhm;
  dc.air_column_per_cm2 = ctx.air_column;
  dataset::generate_dataset(dc, out_dir);
  return out_dir;
}

/// inject: turn concentration rasters under `in` into simulated cubes.
inline fs::path cmd_inject(const RunConfig& config) {
  const fs::path out_dir = fs::path(config.out) / "injected";
  write_run_metadata(out_dir, config, "inject");
  const SpectralContext ctx = resolve_spectral(config.spectral_cfg);
  const auto rasters = detail::find_rasters(config.in);
  std::vector<fs::path> maps;
  for (const auto& r : rasters)
    if (!detail::is_cube_raster(r)) maps.push_back(r);
  if (maps.empty()) throw FormatError("inject: no concentration rasters in " +
                                      config.in);
  parallel_for(maps.size(), config.threads, [&](std::size_t i) {
    const ConcentrationMap map = io::read_map(maps[i]);
    HyperCube base;
    if (!config.dataset_cfg.base_map_dir.empty()) {
      const auto bases =
          detail::find_rasters(config.dataset_cfg.base_map_dir);
      if (bases.empty())
        throw FormatError("inject: base map store is empty");
      base = io::read_cube(bases[i % bases.size()]);
    } else {
      base = dataset::synth_base_map(map.height(), map.width(),
                                     ctx.band_centers, ctx.band_fwhm,
                                     derive_seed(config.seed, "inject", i));
    }
    if (base.height() != map.height() || base.width() != map.width())
      throw ShapeError("inject: base map does not match " + maps[i].string());
    const auto t_cube = spectral::build_transmittance_cube(
        map, ctx.table, ctx.srf, ctx.air_column);
    const HyperCube scene = spectral::inject(base, t_cube);
    io::write_cube(out_dir / (detail::raster_id(maps[i]) + ".cube.f32"), scene);
  });
  return out_dir;
}

/// invert: matched-filter retrieval for every cube under `in`.
inline fs::path cmd_invert(const RunConfig& config) {
  const fs::path out_dir = fs::path(config.out) / "retrieved";
  write_run_metadata(out_dir, config, "invert");
  const SpectralContext ctx = resolve_spectral(config.spectral_cfg);
  const auto rasters = detail::find_rasters(config.in);
  std::vector<fs::path> cubes;
  for (const auto& r : rasters)
    if (detail::is_cube_raster(r)) cubes.push_back(r);
  if (cubes.empty())
    throw FormatError("invert: no cubes found under " + config.in);
  parallel_for(cubes.size(), config.threads, [&](std::size_t i) {
    const std::string id = detail::raster_id(cubes[i]);
    const HyperCube cube = io::read_cube(cubes[i]);
    const auto result = inversion::invert(
        cube, config.inversion_cfg.clusters, ctx.unit_depth,
        config.inversion_cfg.shrinkage, derive_seed(config.seed, "invert", id));
    io::write_map(out_dir / (id + ".f32"), result.map);
    Json diag;
    diag["clusters"] = int(result.clusters.size());
    diag["shrinkage"] = result.shrinkage;
    Json per = Json::array();
    for (const auto& c : result.clusters) {
      Json one;
      one["pixel_count"] = c.pixel_count;
      one["t_cinv_t"] = c.t_cinv_t;
      per.push_back(one);
    }
    diag["per_cluster"] = per;
    diag["warnings"] = result.warnings;
    io::write_json(out_dir / (id + ".diag.json"), diag);
  });
  return out_dir;
}

/// segment: classical instance segmentation for every map under `in`.
inline fs::path cmd_segment(const RunConfig& config) {
  const fs::path out_dir = fs::path(config.out) / "instances";
  write_run_metadata(out_dir, config, "segment");
  const plumeops::SegmentationConfig seg_config =
      to_segmentation_config(config.segmentation);
  const auto rasters = detail::find_rasters(config.in);
  std::vector<fs::path> maps;
  for (const auto& r : rasters)
    if (!detail::is_cube_raster(r)) maps.push_back(r);
  if (maps.empty())
    throw FormatError("segment: no concentration rasters under " + config.in);
  parallel_for(maps.size(), config.threads, [&](std::size_t i) {
    const std::string id = detail::raster_id(maps[i]);
    const ConcentrationMap map = io::read_map(maps[i]);
    auto segments = plumeops::segment_plumes(map, seg_config,
                                             config.estimation.k_kg_per_ppb);
    segments = plumeops::filter_instances(std::move(segments), seg_config);
    Json j;
    j["source"] = maps[i].filename().string();
    j["height"] = map.height();
    j["width"] = map.width();
    Json arr = Json::array();
    for (const auto& seg : segments) {
      Json one = io::instance_to_json(seg.instance, seg.pixel_sum_ppb);
      one["ime_kg"] = seg.ime_kg;
      one["length_m"] = plumeops::plume_length(seg.instance, map.pixel_size_m);
      arr.push_back(one);
    }
    j["instances"] = arr;
    io::write_json(out_dir / (id + ".instances.json"), j);
  });
  return out_dir;
}

/// estimate: IME-model rates for previously segmented instances. `in` points
/// at the maps; instance files are read from <out>/instances.
inline fs::path cmd_estimate(const RunConfig& config) {
  const fs::path out_dir = fs::path(config.out) / "rates";
  const fs::path instances_dir = fs::path(config.out) / "instances";
  write_run_metadata(out_dir, config, "estimate");
  const auto rasters = detail::find_rasters(config.in);
  std::vector<fs::path> maps;
  for (const auto& r : rasters)
    if (!detail::is_cube_raster(r)) maps.push_back(r);
  if (maps.empty())
    throw FormatError("estimate: no concentration rasters under " + config.in);
  parallel_for(maps.size(), config.threads, [&](std::size_t i) {
    const std::string id = detail::raster_id(maps[i]);
    const fs::path inst_path = instances_dir / (id + ".instances.json");
    if (!fs::exists(inst_path))
      throw FormatError("estimate: missing instances for sample " + id);
    const ConcentrationMap map = io::read_map(maps[i]);
    const double u10 =
        io::read_sidecar_wind(maps[i]).value_or(config.estimation.u10_mps);
    const Json in_json = io::read_json(inst_path);
    Json out_json;
    out_json["source"] = maps[i].filename().string();
    out_json["u10_mps"] = u10;
    Json arr = Json::array();
    for (const auto& item : in_json["instances"]) {
      const auto labeled = io::instance_from_json(item, inst_path);
      Json one = item;
      one["rate_kgph"] = plumeops::emission_rate(
          labeled.instance, map, u10, config.estimation.k_kg_per_ppb);
      arr.push_back(one);
    }
    out_json["instances"] = arr;
    io::write_json(out_dir / (id + ".rates.json"), out_json);
  });
  return out_dir;
}

/// losses: evaluate the loss algebra over prediction/truth instance files.
/// `in` holds predictions.json and truths.json, optionally history.json with
/// per-task loss sequences and a temperature.
inline fs::path cmd_losses(const RunConfig& config) {
  const fs::path out_dir = fs::path(config.out) / "losses";
  write_run_metadata(out_dir, config, "losses");
  const fs::path in_dir = config.in;
  const Json preds = io::read_json(in_dir / "predictions.json");
  const Json truths = io::read_json(in_dir / "truths.json");

  auto parse_instances = [&](const Json& j, const fs::path& where) {
    std::vector<PlumeInstance> instances;
    std::vector<double> rates, sums;
    for (const auto& item : j["instances"]) {
      const auto labeled = io::instance_from_json(item, where);
      instances.push_back(labeled.instance);
      rates.push_back(labeled.instance.emission_rate_kgph.value_or(0.0));
      sums.push_back(labeled.pixel_sum);
    }
    return std::tuple(instances, rates, sums);
  };
  const auto [pred_inst, pred_rates, pred_sums] =
      parse_instances(preds, in_dir / "predictions.json");
  const auto [true_inst, true_rates, true_sums] =
      parse_instances(truths, in_dir / "truths.json");

  const auto pairs = losses::match_detections(pred_inst, pred_rates, pred_sums,
                                              true_inst, true_rates);
  const auto er = losses::er_loss_detail(pairs, config.segmentation.ime_min);

  // Box and mask losses over the TP matches, boxes as (cx, cy, w, h).
  std::vector<losses::Box> pred_boxes, true_boxes;
  double mask_term = 0.0;
  int matched = 0;
  {
    std::vector<bool> used_truth(true_inst.size(), false);
    for (std::size_t p = 0; p < pred_inst.size(); ++p) {
      double best = 0.5;
      int best_t = -1;
      for (std::size_t t = 0; t < true_inst.size(); ++t) {
        if (used_truth[t]) continue;
        const double v = mask_iou(pred_inst[p], true_inst[t]);
        if (v >= best) {
          best = v;
          best_t = int(t);
        }
      }
      if (best_t < 0) continue;
      used_truth[std::size_t(best_t)] = true;
      auto to_box = [](const PlumeInstance& inst) {
        losses::Box b;
        b.cx = 0.5 * (inst.bbox.col_min + inst.bbox.col_max);
        b.cy = 0.5 * (inst.bbox.row_min + inst.bbox.row_max);
        b.w = inst.bbox.width();
        b.h = inst.bbox.height();
        return b;
      };
      pred_boxes.push_back(to_box(pred_inst[p]));
      true_boxes.push_back(to_box(true_inst[std::size_t(best_t)]));
      mask_term +=
          losses::mask_loss(true_inst[std::size_t(best_t)], pred_inst[p]);
      ++matched;
    }
  }
  const double box_term = losses::box_loss(pred_boxes, true_boxes);
  const double mask_mean = matched > 0 ? mask_term / matched : 0.0;

  double cls_term = 0.0;
  if (preds.contains("cls") && preds["cls"].is_object()) {
    const auto y = preds["cls"]["y"].get<std::vector<std::vector<double>>>();
    const auto yhat =
        preds["cls"]["yhat"].get<std::vector<std::vector<double>>>();
    cls_term = losses::cross_entropy(y, yhat);
  }
  const double total = losses::maskrcnn_loss(cls_term, box_term, mask_mean);

  Json report;
  report["cls_loss"] = cls_term;
  report["box_loss"] = box_term;
  report["mask_loss"] = mask_mean;
  report["maskrcnn_loss"] = total;
  report["er_loss"] = er.value;
  report["er_pairs_retained"] = er.retained;
  if (er.retained == 0) report["er_warning"] = "every pair was excluded";
  report["mtl01_loss"] = losses::mtl01_loss(total, er.value);

  const fs::path history_path = in_dir / "history.json";
  if (fs::exists(history_path)) {
    const Json h = io::read_json(history_path);
    losses::LossHistory history;
    for (const auto& seq : h["tasks"])
      history.tasks.push_back(seq.get<std::vector<double>>());
    const double temperature =
        h.contains("temperature") ? h["temperature"].get<double>() : 2.0;
    const auto weights = losses::dwa_weights(history, temperature);
    report["dwa_weights"] = weights;
    if (weights.size() == 2)
      report["mtl02_loss"] = losses::mtl02_loss(er.value, total, weights[0],
                                                weights[1]);
  }
  report["config"] = config_to_json(config);
  io::write_json(out_dir / "loss_report.json", report);
  return out_dir;
}

struct EvalReport {
  double inv_rmse_ppm = 0.0;
  double inv_mae_ppm = 0.0;
  metrics::ApSuite seg_ap;
  double rate_rmse_kgph = 0.0;
  double rate_mae_kgph = 0.0;
  int inv_samples = 0;
  int seg_samples = 0;
  int rate_pairs = 0;
};

/// eval: score predictions against dataset labels. Detection scores for the
/// classical segmenter are instance IMEs.
inline EvalReport cmd_eval(const RunConfig& config) {
  const fs::path out_dir = fs::path(config.out) / "metrics";
  write_run_metadata(out_dir, config, "eval");
  const fs::path dataset_dir = config.eval_cfg.dataset_dir.empty()
                                   ? fs::path(config.out) / "dataset"
                                   : fs::path(config.eval_cfg.dataset_dir);
  const fs::path pred_dir = config.eval_cfg.predictions_dir.empty()
                                ? fs::path(config.out)
                                : fs::path(config.eval_cfg.predictions_dir);
  const Json manifest = io::read_json(dataset_dir / "manifest.json");

  EvalReport report;
  std::vector<double> inv_label_ppm, inv_pred_ppm;
  std::vector<metrics::MatchTable> tables;
  std::vector<double> rate_true, rate_pred;

  for (const auto& rec : manifest["samples"]) {
    const std::string subset = rec["subset"].get<std::string>();
    const std::string id = rec["id"].get<std::string>();
    if (subset == "inv") {
      const fs::path pred_path = pred_dir / "retrieved" / (id + ".f32");
      if (!fs::exists(pred_path)) continue;
      const ConcentrationMap label =
          io::read_map(dataset_dir / rec["files"][1].get<std::string>());
      const ConcentrationMap pred = io::read_map(pred_path);
      if (!label.values.same_shape(pred.values))
        throw ShapeError("eval: retrieved map shape mismatch for " + id);
      for (std::size_t i = 0; i < label.values.size(); ++i) {
        inv_label_ppm.push_back(label.values.data()[i] / 1000.0);
        inv_pred_ppm.push_back(pred.values.data()[i] / 1000.0);
      }
      ++report.inv_samples;
    } else if (subset == "seg") {
      const fs::path inst_path = pred_dir / "instances" / (id + ".instances.json");
      if (!fs::exists(inst_path)) continue;
      const Json label_json =
          io::read_json(dataset_dir / rec["files"][1].get<std::string>());
      std::vector<PlumeInstance> truths;
      std::vector<double> truth_rates;
      for (const auto& item : label_json["instances"]) {
        const auto labeled = io::instance_from_json(item, inst_path);
        truths.push_back(labeled.instance);
        truth_rates.push_back(
            labeled.instance.emission_rate_kgph.value_or(0.0));
      }
      const Json pred_json = io::read_json(inst_path);
      std::vector<PlumeInstance> preds;
      std::vector<double> scores;
      std::vector<double> pred_rates;
      for (const auto& item : pred_json["instances"]) {
        const auto labeled = io::instance_from_json(item, inst_path);
        preds.push_back(labeled.instance);
        scores.push_back(item["ime_kg"].get<double>());
        pred_rates.push_back(0.0);
      }
      tables.push_back(metrics::build_match_table(preds, scores, truths));
      ++report.seg_samples;

      // Rate pairs, if the estimate stage ran.
      const fs::path rates_path = pred_dir / "rates" / (id + ".rates.json");
      if (fs::exists(rates_path)) {
        const Json rates_json = io::read_json(rates_path);
        std::vector<PlumeInstance> rp;
        std::vector<double> rr, rs;
        for (const auto& item : rates_json["instances"]) {
          const auto labeled = io::instance_from_json(item, rates_path);
          rp.push_back(labeled.instance);
          rr.push_back(item["rate_kgph"].get<double>());
          rs.push_back(labeled.pixel_sum);
        }
        const auto pairs =
            losses::match_detections(rp, rr, rs, truths, truth_rates);
        for (const auto& pair : pairs) {
          switch (pair.kind) {
            case losses::MatchKind::TP:
              rate_true.push_back(*pair.true_rate_kgph);
              rate_pred.push_back(*pair.pred_rate_kgph);
              break;
            case losses::MatchKind::FP:
              rate_true.push_back(0.0);
              rate_pred.push_back(*pair.pred_rate_kgph);
              break;
            case losses::MatchKind::FN:
              rate_true.push_back(*pair.true_rate_kgph);
              rate_pred.push_back(0.0);
              break;
          }
        }
      }
    }
  }

  Json j;
  if (!inv_label_ppm.empty()) {
    report.inv_rmse_ppm = metrics::rmse(inv_label_ppm, inv_pred_ppm);
    report.inv_mae_ppm = metrics::mae(inv_label_ppm, inv_pred_ppm);
    Json row;
    row["method"] = "matched_filter";
    row["rmse_ppm"] = report.inv_rmse_ppm;
    row["mae_ppm"] = report.inv_mae_ppm;
    row["samples"] = report.inv_samples;
    j["inversion"] = row;
  }
  if (!tables.empty()) {
    report.seg_ap = metrics::ap_suite(metrics::merge_tables(tables));
    Json row;
    row["method"] = config.segmentation.strategy;
    row["ap50"] = report.seg_ap.ap50;
    row["ap75"] = report.seg_ap.ap75;
    row["ap95"] = report.seg_ap.ap95;
    row["ap50_95"] = report.seg_ap.ap50_95;
    row["samples"] = report.seg_samples;
    j["segmentation"] = row;
  }
  if (!rate_true.empty()) {
    report.rate_rmse_kgph = metrics::rmse(rate_true, rate_pred);
    report.rate_mae_kgph = metrics::mae(rate_true, rate_pred);
    report.rate_pairs = int(rate_true.size());
    Json row;
    row["method"] = "ime";
    row["rmse_kgph"] = report.rate_rmse_kgph;
    row["mae_kgph"] = report.rate_mae_kgph;
    row["pairs"] = report.rate_pairs;
    j["rate"] = row;
  }
  io::write_json(out_dir / "metrics_report.json", j);
  return report;
}

/// pipeline: simulate -> dataset -> invert -> segment -> estimate -> eval,
/// all under one seed and one output root.
inline EvalReport cmd_pipeline(RunConfig config) {
  write_run_metadata(config.out, config, "pipeline");
  cmd_simulate(config);
  config.dataset_cfg.snapshot_dir =
      (fs::path(config.out) / "snapshots").string();
  const fs::path dataset_dir = cmd_dataset(config);

  RunConfig invert_cfg = config;
  invert_cfg.in = (dataset_dir / "inv").string();
  cmd_invert(invert_cfg);

  RunConfig segment_cfg = config;
  segment_cfg.in = (dataset_dir / "seg").string();
  cmd_segment(segment_cfg);
  cmd_estimate(segment_cfg);

  RunConfig eval_cfg = config;
  eval_cfg.eval_cfg.dataset_dir = dataset_dir.string();
  eval_cfg.eval_cfg.predictions_dir = config.out;
  return cmd_eval(eval_cfg);
}

/// Dispatch by name. Throws ConfigError for unknown subcommands; the CLI
/// maps error types onto exit codes.
inline int run_subcommand(const std::string& name, const RunConfig& config) {
  if (name == "simulate")
    cmd_simulate(config);
  else if (name == "dataset")
    cmd_dataset(config);
  else if (name == "inject")
    cmd_inject(config);
  else if (name == "invert")
    cmd_invert(config);
  else if (name == "segment")
    cmd_segment(config);
  else if (name == "estimate")
    cmd_estimate(config);
  else if (name == "losses")
    cmd_losses(config);
  else if (name == "eval")
    cmd_eval(config);
  else if (name == "pipeline")
    cmd_pipeline(config);
  else
    throw ConfigError("unknown subcommand: " + name);
  return 0;
}

}  // namespace plumekit::pipeline
