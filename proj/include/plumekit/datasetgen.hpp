#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plumekit/core.hpp"
#include "plumekit/io.hpp"
#include "plumekit/parallel.hpp"
#include "plumekit/plumesim.hpp"
#include "plumekit/random.hpp"
#include "plumekit/spectral.hpp"

namespace plumekit::dataset {

namespace fs = std::filesystem;

/// Multi-plume placement gave up after the rejection-attempt budget.
class PlacementExhaustedError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

struct AugmentSpec {
  double scale = 1.0;           // multiplies pixels and the rate label
  double zero_threshold = 0.05; // fraction of the max pixel, in [0.05, 0.10]
  double rotation_deg = 0.0;    // in [-170, 170]

  void validate() const {
    if (!(scale > 0.0)) throw ConfigError("AugmentSpec: scale must be positive");
    if (zero_threshold < 0.05 || zero_threshold > 0.10)
      throw ConfigError("AugmentSpec: zero threshold outside [0.05, 0.10]");
    if (rotation_deg < -170.0 || rotation_deg > 170.0)
      throw ConfigError("AugmentSpec: rotation outside [-170, 170]");
  }

  static AugmentSpec draw(Rng& rng, double scale_min, double scale_max) {
    AugmentSpec spec;
    spec.scale = rng.uniform(scale_min, scale_max);
    spec.zero_threshold = rng.uniform(0.05, 0.10);
    spec.rotation_deg = rng.uniform(-170.0, 170.0);
    return spec;
  }
};

struct AugmentedPlume {
  ConcentrationMap map;
  double emission_rate_kgph = 0.0;
  double wind_u10_mps = 0.0;

  double pixel_sum() const {
    double s = 0.0;
    for (double v : map.values) s += v;
    return s;
  }
};

namespace detail {

/// Rotation about the grid center; multiples of 90 degrees on square grids
/// take an exact permutation path so augmentation preserves mass there.
inline Grid2d<double> rotate(const Grid2d<double>& in, double degrees) {
  const int h = in.height(), w = in.width();
  if (degrees == 0.0) return in;
  if (h == w && (degrees == 90.0 || degrees == -90.0)) {
    Grid2d<double> out(h, w, 0.0);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        out(r, c) = degrees == 90.0 ? in(h - 1 - c, r) : in(c, w - 1 - r);
    return out;
  }
  const double rad = degrees * 3.14159265358979323846 / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  Grid2d<double> out(h, w, 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double x = c - cx, y = r - cy;
      // Inverse map: rotate the output coordinate back into the source.
      const double xs = cs * x + sn * y;
      const double ys = -sn * x + cs * y;
      const double src_r = cy + ys, src_c = cx + xs;
      const int r0 = int(std::floor(src_r)), c0 = int(std::floor(src_c));
      const double fr = src_r - r0, fc = src_c - c0;
      double acc = 0.0;
      for (int dr = 0; dr <= 1; ++dr)
        for (int dc = 0; dc <= 1; ++dc) {
          const int rr = r0 + dr, cc = c0 + dc;
          if (!in.in_bounds(rr, cc)) continue;
          const double wgt = (dr ? fr : 1.0 - fr) * (dc ? fc : 1.0 - fc);
          acc += wgt * in(rr, cc);
        }
      out(r, c) = acc;
    }
  }
  return out;
}

}  // namespace detail

/// Scale, threshold, rotate. The returned label rate is exactly m * a. Pixels
/// below zero_threshold * max are zeroed before rotation.
inline AugmentedPlume augment_single(const PlumeSnapshot& snapshot,
                                     const AugmentSpec& spec) {
  snapshot.validate();
  spec.validate();
  Grid2d<double> values = snapshot.map.values;
  double max_v = 0.0;
  for (double& v : values) {
    v *= spec.scale;
    max_v = std::max(max_v, v);
  }
  const double cutoff = spec.zero_threshold * max_v;
  for (double& v : values)
    if (v < cutoff) v = 0.0;
  values = detail::rotate(values, spec.rotation_deg);
  bool any = false;
  for (double v : values)
    if (v > 0.0) any = true;
  if (!any)
    throw InputError("augment_single: threshold zeroed the whole plume");
  AugmentedPlume out;
  out.map.values = std::move(values);
  out.map.pixel_size_m = snapshot.map.pixel_size_m;
  out.emission_rate_kgph = snapshot.emission_rate_kgph * spec.scale;
  out.wind_u10_mps = snapshot.wind_u10_mps;
  return out;
}

// ---------------------------------------------------------------------------
// Overlap and compositing
// ---------------------------------------------------------------------------

/// Concentration-weighted overlap of two plumes: the sum of elementwise-max
/// values over the intersection support divided by the same sum over the
/// union support. Equal maps give 1, disjoint supports give 0.
inline double overlap_ratio(const ConcentrationMap& a,
                            const ConcentrationMap& b) {
  if (!a.values.same_shape(b.values))
    throw ShapeError("overlap_ratio: maps must share a shape");
  double inter = 0.0, uni = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double va = a.values.data()[i], vb = b.values.data()[i];
    const double m = std::max(va, vb);
    if (va > 0.0 && vb > 0.0) inter += m;
    if (va > 0.0 || vb > 0.0) uni += m;
  }
  if (uni == 0.0)
    throw InputError("overlap_ratio: both maps are all-zero");
  return inter / uni;
}

inline constexpr double kDefaultMaxOverlap = 0.15;
inline constexpr int kPlacementAttempts = 1000;

struct CompositeResult {
  ConcentrationMap canvas;
  std::vector<PlumeInstance> instances;
  std::vector<double> pixel_sums;       // each plume's own contribution
  std::vector<double> winds;
  std::vector<ConcentrationMap> placed; // per-plume maps the overlap cap saw
};

/// Superimpose up to three plumes onto a zero canvas at rejection-sampled
/// offsets; every placed pair must keep overlap_ratio at or below
/// max_overlap. Overlapping concentrations add; each label keeps its own
/// support mask, box, and rate.
inline CompositeResult composite(const std::vector<AugmentedPlume>& plumes,
                                 int canvas_height, int canvas_width,
                                 double max_overlap, Rng& rng,
                                 double pixel_size_m = 30.0) {
  if (plumes.size() > 3)
    throw ConfigError("composite: at most three plumes per canvas");
  if (max_overlap < 0.0 || max_overlap > 1.0)
    throw ConfigError("composite: max_overlap outside [0, 1]");
  CompositeResult result;
  result.canvas.pixel_size_m = pixel_size_m;
  result.canvas.values = Grid2d<double>(canvas_height, canvas_width, 0.0);

  std::vector<ConcentrationMap>& placed = result.placed;
  for (const AugmentedPlume& plume : plumes) {
    MaskGrid support(plume.map.height(), plume.map.width(), 0);
    for (int r = 0; r < plume.map.height(); ++r)
      for (int c = 0; c < plume.map.width(); ++c)
        support(r, c) = plume.map.values(r, c) > 0.0 ? 1 : 0;
    const BBox box = enclosing_box(support);
    if (box.height() > canvas_height || box.width() > canvas_width)
      throw ConfigError("composite: plume support larger than canvas");

    bool ok = false;
    ConcentrationMap candidate;
    candidate.pixel_size_m = pixel_size_m;
    for (int attempt = 0; attempt < kPlacementAttempts && !ok; ++attempt) {
      const int dr = int(rng.uniform_int(-box.row_min,
                                         canvas_height - 1 - box.row_max));
      const int dc = int(rng.uniform_int(-box.col_min,
                                         canvas_width - 1 - box.col_max));
      candidate.values = Grid2d<double>(canvas_height, canvas_width, 0.0);
      for (int r = box.row_min; r <= box.row_max; ++r)
        for (int c = box.col_min; c <= box.col_max; ++c) {
          const double v = plume.map.values(r, c);
          if (v > 0.0) candidate.values(r + dr, c + dc) = v;
        }
      ok = true;
      for (const ConcentrationMap& prev : placed)
        if (overlap_ratio(candidate, prev) > max_overlap) {
          ok = false;
          break;
        }
    }
    if (!ok)
      throw PlacementExhaustedError(
          "composite: no placement satisfied the overlap cap after " +
          std::to_string(kPlacementAttempts) + " attempts");

    MaskGrid placed_support(canvas_height, canvas_width, 0);
    double sum = 0.0;
    for (std::size_t i = 0; i < candidate.values.size(); ++i) {
      const double v = candidate.values.data()[i];
      if (v > 0.0) {
        placed_support.data()[i] = 1;
        sum += v;
      }
      result.canvas.values.data()[i] += v;
    }
    result.instances.push_back(
        make_instance(placed_support, plume.emission_rate_kgph));
    result.pixel_sums.push_back(sum);
    result.winds.push_back(plume.wind_u10_mps);
    placed.push_back(std::move(candidate));
  }
  return result;
}

/// Add i.i.d. zero-mean gaussian noise, clamped at zero to keep the
/// non-negativity invariant. Deterministic per seed.
inline ConcentrationMap add_noise(const ConcentrationMap& map, double sigma,
                                  std::uint64_t seed) {
  if (sigma < 0.0) throw InputError("add_noise: negative sigma");
  ConcentrationMap out = map;
  if (sigma == 0.0) return out;
  Rng rng(seed);
  for (double& v : out.values) v = std::max(0.0, v + sigma * rng.gaussian());
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic base maps
// ---------------------------------------------------------------------------

/// Procedural stand-in for a real hyperspectral background tile: a smooth
/// SWIR continuum modulated by a low-frequency albedo field, a small smooth
/// spectral perturbation, and a little white noise to keep the covariance
/// full-rank. Strictly positive by construction.
inline HyperCube synth_base_map(int height, int width,
                                const std::vector<double>& band_centers_nm,
                                const std::vector<double>& band_fwhm_nm,
                                std::uint64_t seed) {
  if (height <= 0 || width <= 0 || band_centers_nm.empty())
    throw ConfigError("synth_base_map: bad shape");
  Rng rng(seed);
  const int nb = int(band_centers_nm.size());
  const double lam0 = band_centers_nm.front();
  const double span = std::max(1.0, band_centers_nm.back() - lam0);

  const double level = rng.uniform(600.0, 1400.0);
  const double tilt = rng.uniform(-0.25, 0.25);
  const double phase = rng.uniform(0.0, 6.283185307179586);
  std::vector<double> continuum(std::size_t(nb), 0.0);
  for (int b = 0; b < nb; ++b) {
    const double t = (band_centers_nm[std::size_t(b)] - lam0) / span;
    continuum[std::size_t(b)] =
        level * (1.0 + tilt * (t - 0.5) + 0.2 * std::cos(6.283185307179586 * t + phase));
  }

  // Low-frequency albedo built from a handful of cosine waves.
  struct Wave {
    double fr, fc, ph, amp;
  };
  std::vector<Wave> waves(6);
  for (auto& wv : waves) {
    wv.fr = rng.uniform(-3.0, 3.0) / double(height);
    wv.fc = rng.uniform(-3.0, 3.0) / double(width);
    wv.ph = rng.uniform(0.0, 6.283185307179586);
    wv.amp = 0.08;
  }
  auto field_at = [&](int r, int c) {
    double a = 1.0;
    for (const auto& wv : waves)
      a += wv.amp *
           std::cos(6.283185307179586 * (wv.fr * r + wv.fc * c) + wv.ph);
    return a;
  };

  // One smooth spectral perturbation direction shared across the tile.
  std::vector<double> pert(std::size_t(nb), 0.0);
  for (int b = 0; b < nb; ++b) {
    const double t = (band_centers_nm[std::size_t(b)] - lam0) / span;
    pert[std::size_t(b)] = std::sin(6.283185307179586 * (1.7 * t) + phase * 0.5);
  }

  HyperCube cube;
  cube.band_centers_nm = band_centers_nm;
  cube.band_fwhm_nm = band_fwhm_nm;
  cube.radiance = Cube3d<double>(height, width, nb);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      const double albedo = field_at(r, c);
      const double g = 0.02 * std::cos(6.283185307179586 *
                                           (0.7 * r / double(height) -
                                            1.3 * c / double(width)) +
                                       phase);
      double* px = cube.radiance.pixel(r, c);
      for (int b = 0; b < nb; ++b) {
        const double noise = 1.0 + 0.002 * rng.gaussian_truncated(4.0);
        px[b] = continuum[std::size_t(b)] * albedo *
                (1.0 + g * pert[std::size_t(b)]) * noise;
      }
    }
  return cube;
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

struct SubsetCounts {
  int rate = 0;
  int seg = 0;
  int inv = 0;
};

/// Wind-speed split rule: validation winds {2, 10}, test winds {1, 9},
/// everything else trains.
inline std::string split_for_wind(double wind_u10) {
  auto is = [&](double v) { return std::abs(wind_u10 - v) < 1e-9; };
  if (is(2.0) || is(10.0)) return "val";
  if (is(1.0) || is(9.0)) return "test";
  return "train";
}

struct DatasetConfig {
  fs::path snapshot_dir;
  fs::path base_map_dir;      // empty selects the procedural generator
  int synth_base_maps = 4;    // per split, when synthesizing
  int canvas_height = 256;
  int canvas_width = 256;
  double pixel_size_m = 30.0;
  SubsetCounts train, val, test;
  double max_overlap = kDefaultMaxOverlap;
  double noise_sigma_ppb = 35.0;
  double scale_min = 1.0;
  double scale_max = 3.0;
  double ime_min = 300.0;  // generation-time pixel-sum filter
  int max_regen = 100;
  std::uint64_t master_seed = 0;
  int threads = 1;
  // Spectral configuration for the inversion subset.
  AbsorptionTable table;
  std::vector<double> band_centers_nm;
  std::vector<double> band_fwhm_nm;
  double air_column_per_cm2 = 0.0;  // 0 computes the 0-3000 m default

  const SubsetCounts& counts(const std::string& split) const {
    if (split == "train") return train;
    if (split == "val") return val;
    return test;
  }

  void validate() const {
    if (canvas_height <= 0 || canvas_width <= 0)
      throw ConfigError("DatasetConfig: bad canvas shape");
    if (max_overlap < 0.0 || max_overlap > 1.0)
      throw ConfigError("DatasetConfig: max_overlap outside [0, 1]");
    if (noise_sigma_ppb < 0.0)
      throw ConfigError("DatasetConfig: negative noise sigma");
    if (!(scale_min > 0.0) || scale_max < scale_min)
      throw ConfigError("DatasetConfig: bad scale range");
    if (ime_min < 0.0) throw ConfigError("DatasetConfig: negative ime_min");
    for (const std::string split : {"train", "val", "test"}) {
      const SubsetCounts& c = counts(split);
      if (c.rate < 0 || c.seg < 0 || c.inv < 0)
        throw ConfigError("DatasetConfig: negative sample count");
      if ((c.seg > 0 || c.inv > 0) && c.rate == 0)
        throw ConfigError(
            "DatasetConfig: seg/inv samples draw from the rate pool; "
            "rate count must be positive for split " +
            split);
    }
  }
};

struct SampleRecord {
  std::string id;
  std::string split;
  std::string subset;  // rate | seg | inv
  std::vector<std::string> files;
  std::vector<double> winds;
  std::string base_ref;  // inversion samples: which base map was used
};

struct DatasetManifest {
  std::uint64_t master_seed = 0;
  std::vector<SampleRecord> samples;

  io::Json to_json() const {
    io::Json j;
    j["master_seed"] = master_seed;
    io::Json arr = io::Json::array();
    for (const SampleRecord& s : samples) {
      io::Json r;
      r["id"] = s.id;
      r["split"] = s.split;
      r["subset"] = s.subset;
      r["files"] = s.files;
      r["winds"] = s.winds;
      if (!s.base_ref.empty()) r["base"] = s.base_ref;
      arr.push_back(r);
    }
    j["samples"] = arr;
    return j;
  }
};

namespace detail {

struct SplitPools {
  std::vector<PlumeSnapshot> snapshots;
  std::vector<HyperCube> base_maps;
  std::vector<std::string> base_refs;
};

inline std::string sample_id(const std::string& split,
                             const std::string& subset, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", index);
  return split + "_" + subset + "_" + buf;
}

inline AugmentedPlume draw_rate_sample(const SplitPools& pool,
                                       const DatasetConfig& config, Rng& rng,
                                       const std::string& id) {
  for (int attempt = 0; attempt < config.max_regen; ++attempt) {
    const std::size_t pick =
        std::size_t(rng.uniform_int(0, std::int64_t(pool.snapshots.size()) - 1));
    const AugmentSpec spec =
        AugmentSpec::draw(rng, config.scale_min, config.scale_max);
    try {
      AugmentedPlume plume = augment_single(pool.snapshots[pick], spec);
      if (plume.pixel_sum() >= config.ime_min) return plume;
    } catch (const InputError&) {
      // degenerate augmentation; redraw
    }
  }
  throw ConfigError("generate_dataset: sample " + id +
                    ": regeneration budget exhausted (ime_min too high?)");
}

}  // namespace detail

/// Build the three dataset subsets under out_dir. Fully reproducible from the
/// master seed: per-sample RNG streams derive from (seed, subset, split,
/// index), so outputs do not depend on the thread count.
inline DatasetManifest generate_dataset(const DatasetConfig& config,
                                        const fs::path& out_dir) {
  config.validate();
  const std::vector<PlumeSnapshot> all_snapshots =
      sim::ingest_snapshots(config.snapshot_dir);
  if (all_snapshots.empty())
    throw ConfigError("generate_dataset: snapshot store is empty");

  AbsorptionTable table = config.table;
  if (table.wavelength_nm.empty()) table = spectral::synthetic_ch4_table();
  table.validate();
  std::vector<double> centers = config.band_centers_nm;
  std::vector<double> fwhm = config.band_fwhm_nm;
  if (centers.empty()) {
    centers = spectral::default_band_centers();
    fwhm = spectral::default_band_fwhm();
  }
  const spectral::SpectralResponse srf =
      spectral::build_srf(centers, fwhm, table.wavelength_nm);
  const double air_column =
      config.air_column_per_cm2 > 0.0
          ? config.air_column_per_cm2
          : spectral::default_air_column(table.temperature_k, table.pressure_pa);

  const std::vector<std::string> splits = {"train", "val", "test"};
  std::map<std::string, detail::SplitPools> pools;
  for (const PlumeSnapshot& snap : all_snapshots)
    pools[split_for_wind(snap.wind_u10_mps)].snapshots.push_back(snap);

  // Base maps: external store round-robins across splits by sorted index;
  // otherwise each split gets its own procedurally generated tiles.
  if (!config.base_map_dir.empty()) {
    std::vector<fs::path> rasters;
    for (const auto& entry : fs::directory_iterator(config.base_map_dir))
      if (entry.is_regular_file() && entry.path().extension() == ".f32")
        rasters.push_back(entry.path());
    std::sort(rasters.begin(), rasters.end());
    if (rasters.empty())
      throw ConfigError("generate_dataset: base map store is empty");
    for (std::size_t i = 0; i < rasters.size(); ++i) {
      const std::string split = splits[i % splits.size()];
      pools[split].base_maps.push_back(io::read_cube(rasters[i]));
      pools[split].base_refs.push_back(rasters[i].string());
    }
  } else {
    for (const std::string& split : splits)
      for (int i = 0; i < config.synth_base_maps; ++i) {
        pools[split].base_maps.push_back(synth_base_map(
            config.canvas_height, config.canvas_width, centers, fwhm,
            derive_seed(config.master_seed, "basemap", split, std::uint64_t(i))));
        pools[split].base_refs.push_back("synth:" + split + ":" +
                                         std::to_string(i));
      }
  }

  for (const std::string& split : splits) {
    const SubsetCounts& counts = config.counts(split);
    if (counts.rate > 0 && pools[split].snapshots.empty())
      throw ConfigError("generate_dataset: no snapshots for split " + split);
    if (counts.inv > 0 && pools[split].base_maps.empty())
      throw ConfigError("generate_dataset: no base maps for split " + split);
  }

  fs::create_directories(out_dir);
  for (const std::string& split : splits)
    for (const char* subset : {"rate", "seg", "inv"})
      fs::create_directories(out_dir / subset / split);

  DatasetManifest manifest;
  manifest.master_seed = config.master_seed;

  for (const std::string& split : splits) {
    const SubsetCounts& counts = config.counts(split);
    const detail::SplitPools& pool = pools[split];

    // Phase 1: emission-rate samples; they double as the plume pool for the
    // multi-plume subsets.
    std::vector<AugmentedPlume> rate_pool(std::size_t(counts.rate));
    std::vector<SampleRecord> rate_records(std::size_t(counts.rate));
    parallel_for(std::size_t(counts.rate), config.threads, [&](std::size_t i) {
      const std::string id = detail::sample_id(split, "rate", int(i));
      Rng rng(derive_seed(config.master_seed, "rate", split, std::uint64_t(i)));
      const AugmentedPlume plume = detail::draw_rate_sample(pool, config, rng, id);
      const fs::path raster = out_dir / "rate" / split / (id + ".f32");
      PlumeSnapshot out;
      out.map = plume.map;
      out.emission_rate_kgph = plume.emission_rate_kgph;
      out.wind_u10_mps = plume.wind_u10_mps;
      out.sim_time_s = 0.0;
      io::write_snapshot(raster, out);
      rate_pool[i] = plume;
      SampleRecord rec;
      rec.id = id;
      rec.split = split;
      rec.subset = "rate";
      rec.files = {fs::relative(raster, out_dir).string()};
      rec.winds = {plume.wind_u10_mps};
      rate_records[i] = std::move(rec);
    });
    for (auto& r : rate_records) manifest.samples.push_back(std::move(r));

    // Phase 2: segmentation samples (noisy multi-plume map + instance labels).
    std::vector<SampleRecord> seg_records(std::size_t(counts.seg));
    parallel_for(std::size_t(counts.seg), config.threads, [&](std::size_t i) {
      const std::string id = detail::sample_id(split, "seg", int(i));
      Rng rng(derive_seed(config.master_seed, "seg", split, std::uint64_t(i)));
      CompositeResult comp;
      bool done = false;
      for (int attempt = 0; attempt < config.max_regen && !done; ++attempt) {
        const int n = int(rng.uniform_int(0, 3));
        std::vector<AugmentedPlume> picks;
        for (int p = 0; p < n; ++p)
          picks.push_back(rate_pool[std::size_t(
              rng.uniform_int(0, std::int64_t(rate_pool.size()) - 1))]);
        try {
          comp = composite(picks, config.canvas_height, config.canvas_width,
                           config.max_overlap, rng, config.pixel_size_m);
        } catch (const PlacementExhaustedError&) {
          continue;
        }
        done = true;
        for (double s : comp.pixel_sums)
          if (s < config.ime_min) done = false;
      }
      if (!done)
        throw ConfigError("generate_dataset: sample " + id +
                          ": placement budget exhausted");
      const ConcentrationMap noisy =
          add_noise(comp.canvas, config.noise_sigma_ppb, rng.next_u64());
      const fs::path raster = out_dir / "seg" / split / (id + ".f32");
      io::write_map(raster, noisy);
      io::Json labels;
      labels["height"] = config.canvas_height;
      labels["width"] = config.canvas_width;
      io::Json arr = io::Json::array();
      for (std::size_t p = 0; p < comp.instances.size(); ++p)
        arr.push_back(io::instance_to_json(comp.instances[p], comp.pixel_sums[p]));
      labels["instances"] = arr;
      const fs::path label_path = out_dir / "seg" / split / (id + ".labels.json");
      io::write_json(label_path, labels);
      SampleRecord rec;
      rec.id = id;
      rec.split = split;
      rec.subset = "seg";
      rec.files = {fs::relative(raster, out_dir).string(),
                   fs::relative(label_path, out_dir).string()};
      rec.winds = comp.winds;
      seg_records[i] = std::move(rec);
    });
    for (auto& r : seg_records) manifest.samples.push_back(std::move(r));

    // Phase 3: inversion samples (injected cube + clean multi-plume label;
    // empty composites pair a raw base map with an all-zero label).
    std::vector<SampleRecord> inv_records(std::size_t(counts.inv));
    parallel_for(std::size_t(counts.inv), config.threads, [&](std::size_t i) {
      const std::string id = detail::sample_id(split, "inv", int(i));
      Rng rng(derive_seed(config.master_seed, "inv", split, std::uint64_t(i)));
      CompositeResult comp;
      bool done = false;
      for (int attempt = 0; attempt < config.max_regen && !done; ++attempt) {
        const int n = int(rng.uniform_int(0, 3));
        std::vector<AugmentedPlume> picks;
        for (int p = 0; p < n; ++p)
          picks.push_back(rate_pool[std::size_t(
              rng.uniform_int(0, std::int64_t(rate_pool.size()) - 1))]);
        try {
          comp = composite(picks, config.canvas_height, config.canvas_width,
                           config.max_overlap, rng, config.pixel_size_m);
        } catch (const PlacementExhaustedError&) {
          continue;
        }
        done = true;
      }
      if (!done)
        throw ConfigError("generate_dataset: sample " + id +
                          ": placement budget exhausted");
      const std::size_t base_idx = std::size_t(
          rng.uniform_int(0, std::int64_t(pool.base_maps.size()) - 1));
      const HyperCube& base = pool.base_maps[base_idx];
      if (base.height() != config.canvas_height ||
          base.width() != config.canvas_width)
        throw ConfigError("generate_dataset: base map shape mismatch for " + id);
      HyperCube image;
      if (comp.instances.empty()) {
        image = base;
      } else {
        const spectral::TransmittanceCube t_cube =
            spectral::build_transmittance_cube(comp.canvas, table, srf,
                                               air_column);
        image = spectral::inject(base, t_cube);
      }
      const fs::path cube_path = out_dir / "inv" / split / (id + ".cube.f32");
      const fs::path label_path = out_dir / "inv" / split / (id + ".label.f32");
      io::write_cube(cube_path, image);
      io::write_map(label_path, comp.canvas);
      SampleRecord rec;
      rec.id = id;
      rec.split = split;
      rec.subset = "inv";
      rec.files = {fs::relative(cube_path, out_dir).string(),
                   fs::relative(label_path, out_dir).string()};
      rec.winds = comp.winds;
      rec.base_ref = pool.base_refs[base_idx];
      inv_records[i] = std::move(rec);
    });
    for (auto& r : inv_records) manifest.samples.push_back(std::move(r));
  }

  io::write_json(out_dir / "manifest.json", manifest.to_json());
  return manifest;
}

}  // namespace plumekit::dataset
