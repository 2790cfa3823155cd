#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "plumekit/core.hpp"
#include "plumekit/io.hpp"
#include "plumekit/metrics.hpp"
#include "plumekit/random.hpp"

namespace plumekit::sim {

/// Snapshots start one simulated hour after the source turns on.
inline constexpr double kSnapshotStartS = 3600.0;

struct SimConfig {
  int height = 256;
  int width = 256;
  double pixel_size_m = 30.0;
  double emission_rate_kgph = 1000.0;
  double wind_u10_mps = 5.0;          // blows west to east (+col)
  double eddy_diffusivity_m2s = 15.0;
  double turbulence_intensity = 0.3;  // gust std as a fraction of wind speed
  int source_row = -1;                // -1 selects height/2
  int source_col = -1;                // -1 selects width/8
  double dt_s = 1.0;
  double duration_s = 9000.0;
  double snapshot_interval_s = 30.0;
  std::uint64_t seed = 0;
  double ime_scale_kg_per_ppb = kImeScaleKgPerPpb;

  int resolved_source_row() const {
    return source_row >= 0 ? source_row : height / 2;
  }
  int resolved_source_col() const {
    return source_col >= 0 ? source_col : width / 8;
  }

  /// Largest admissible step. Gusts are truncated at 3 sigma, so the worst
  /// instantaneous wind components are bounded; the combined advection +
  /// diffusion positivity condition then holds with a 0.5 safety factor.
  double stability_dt_bound() const {
    const double gust = 3.0 * turbulence_intensity * wind_u10_mps;
    const double u_max = wind_u10_mps + gust;
    const double v_max = gust;
    const double denom = (u_max + v_max) / pixel_size_m +
                         4.0 * eddy_diffusivity_m2s /
                             (pixel_size_m * pixel_size_m);
    return denom > 0.0 ? 0.5 / denom : std::numeric_limits<double>::infinity();
  }

  void validate() const {
    if (height <= 0 || width <= 0)
      throw ConfigError("SimConfig: domain must be positive");
    if (!(pixel_size_m > 0.0))
      throw ConfigError("SimConfig: pixel_size must be positive");
    if (emission_rate_kgph < 0.0)
      throw ConfigError("SimConfig: negative emission rate");
    if (wind_u10_mps < 0.0) throw ConfigError("SimConfig: negative wind");
    if (eddy_diffusivity_m2s < 0.0)
      throw ConfigError("SimConfig: negative diffusivity");
    if (turbulence_intensity < 0.0)
      throw ConfigError("SimConfig: negative turbulence intensity");
    const int sr = resolved_source_row(), sc = resolved_source_col();
    if (sr < 0 || sr >= height || sc < 0 || sc >= width)
      throw ConfigError("SimConfig: source outside domain");
    if (!(dt_s > 0.0)) throw ConfigError("SimConfig: dt must be positive");
    if (dt_s > stability_dt_bound() * (1.0 + 1e-12))
      throw ConfigError("SimConfig: dt violates the stability bound");
    if (!(duration_s >= 0.0)) throw ConfigError("SimConfig: negative duration");
    if (!(snapshot_interval_s > 0.0))
      throw ConfigError("SimConfig: snapshot interval must be positive");
    const double steps = snapshot_interval_s / dt_s;
    if (std::abs(steps - std::round(steps)) > 1e-9 * steps)
      throw ConfigError("SimConfig: snapshot interval must be a multiple of dt");
    if (duration_s >= kSnapshotStartS) {
      const double spinup = kSnapshotStartS / dt_s;
      if (std::abs(spinup - std::round(spinup)) > 1e-9 * spinup)
        throw ConfigError(
            "SimConfig: snapshot start time must land on a whole step");
    }
    if (!(ime_scale_kg_per_ppb > 0.0))
      throw ConfigError("SimConfig: ime scale must be positive");
  }
};

/// Pick the largest dt that divides the snapshot interval and respects the
/// stability bound.
inline double stable_dt(const SimConfig& config) {
  const double bound = config.stability_dt_bound();
  if (!std::isfinite(bound)) return config.snapshot_interval_s;
  const double n = std::ceil(config.snapshot_interval_s / bound - 1e-12);
  return config.snapshot_interval_s / std::max(1.0, n);
}

struct StepInfo {
  double u_mps = 0.0;       // wind actually applied this step
  double v_mps = 0.0;
  double injected_kg = 0.0;
  double outflow_kg = 0.0;  // mass advected through the domain boundary
};

/// Explicit advection-diffusion integrator for the plume surrogate:
///   dc/dt = -u . grad(c) + D lap(c) + S
/// First-order upwind advection, central diffusion, per-step gusts drawn as
/// truncated gaussians around the nominal wind. Boundaries admit advective
/// outflow only (incoming air is clean) and no diffusive flux. The scheme is
/// conservative in flux form, so domain mass equals injected minus outflow.
class PlumeSimulator {
 public:
  explicit PlumeSimulator(const SimConfig& config)
      : config_(config), rng_(config.seed),
        field_(config.height, config.width, 0.0),
        scratch_(config.height, config.width, 0.0) {
    config_.validate();
    source_ppb_per_s_ = config_.emission_rate_kgph / 3600.0 /
                        config_.ime_scale_kg_per_ppb;
  }

  const SimConfig& config() const { return config_; }
  const Grid2d<double>& field() const { return field_; }
  double time_s() const { return time_s_; }
  double injected_kg() const { return injected_kg_; }
  double outflow_kg() const { return outflow_kg_; }

  double domain_mass_kg() const {
    double s = 0.0;
    for (double v : field_) s += v;
    return s * config_.ime_scale_kg_per_ppb;
  }

  StepInfo step() {
    const double gust_std = config_.turbulence_intensity * config_.wind_u10_mps;
    StepInfo info;
    info.u_mps = config_.wind_u10_mps;
    info.v_mps = 0.0;
    if (gust_std > 0.0) {
      info.u_mps += gust_std * rng_.gaussian_truncated(3.0);
      info.v_mps += gust_std * rng_.gaussian_truncated(3.0);
    }
    advance(info);
    time_s_ += config_.dt_s;
    injected_kg_ += info.injected_kg;
    outflow_kg_ += info.outflow_kg;
    return info;
  }

 private:
  void advance(StepInfo& info) {
    const int h = config_.height, w = config_.width;
    const double dx = config_.pixel_size_m;
    const double dt = config_.dt_s;
    const double diff = config_.eddy_diffusivity_m2s / dx;  // face flux / dc
    const double u = info.u_mps, v = info.v_mps;
    const double up = std::max(u, 0.0), un = std::min(u, 0.0);
    const double vp = std::max(v, 0.0), vn = std::min(v, 0.0);
    const double scale = dt / dx;

    double outflow = 0.0;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const double center = field_(r, c);
        const double west = c > 0 ? field_(r, c - 1) : 0.0;
        const double east = c < w - 1 ? field_(r, c + 1) : 0.0;
        const double north = r > 0 ? field_(r - 1, c) : 0.0;
        const double south = r < h - 1 ? field_(r + 1, c) : 0.0;

        // Upwind face fluxes, positive along +col / +row.
        const double f_w = up * west + un * center;
        const double f_e = up * center + un * east;
        const double f_n = vp * north + vn * center;
        const double f_s = vp * center + vn * south;

        double dq = 0.0;
        dq -= diff * (c > 0 ? center - west : 0.0);
        dq += diff * (c < w - 1 ? east - center : 0.0);
        dq -= diff * (r > 0 ? center - north : 0.0);
        dq += diff * (r < h - 1 ? south - center : 0.0);

        scratch_(r, c) = center - scale * (f_e - f_w + f_s - f_n) + scale * dq;

        if (c == 0 && f_w < 0.0) outflow -= f_w;
        if (c == w - 1 && f_e > 0.0) outflow += f_e;
        if (r == 0 && f_n < 0.0) outflow -= f_n;
        if (r == h - 1 && f_s > 0.0) outflow += f_s;
      }
    }
    std::swap(field_, scratch_);

    const double injected_ppb = source_ppb_per_s_ * dt;
    field_(config_.resolved_source_row(), config_.resolved_source_col()) +=
        injected_ppb;
    info.injected_kg = injected_ppb * config_.ime_scale_kg_per_ppb;
    info.outflow_kg = outflow * scale * config_.ime_scale_kg_per_ppb;
  }

  SimConfig config_;
  Rng rng_;
  Grid2d<double> field_;
  Grid2d<double> scratch_;
  double source_ppb_per_s_ = 0.0;
  double time_s_ = 0.0;
  double injected_kg_ = 0.0;
  double outflow_kg_ = 0.0;
};

/// Run a configured simulation to completion, emitting snapshots on the
/// configured cadence from one hour onward. Deterministic for a given seed.
inline std::vector<PlumeSnapshot> simulate_plume(const SimConfig& config) {
  PlumeSimulator simulator(config);
  const double dt = config.dt_s;
  const std::int64_t total_steps =
      std::int64_t(std::floor(config.duration_s / dt + 1e-9));
  const std::int64_t interval_steps =
      std::int64_t(std::round(config.snapshot_interval_s / dt));
  const std::int64_t first_snap_step =
      std::int64_t(std::round(kSnapshotStartS / dt));

  std::vector<PlumeSnapshot> snapshots;
  for (std::int64_t s = 1; s <= total_steps; ++s) {
    simulator.step();
    if (s >= first_snap_step && (s - first_snap_step) % interval_steps == 0) {
      PlumeSnapshot snap;
      snap.map.values = simulator.field();
      snap.map.pixel_size_m = config.pixel_size_m;
      snap.emission_rate_kgph = config.emission_rate_kgph;
      snap.wind_u10_mps = config.wind_u10_mps;
      snap.sim_time_s = double(s) * dt;
      snapshots.push_back(std::move(snap));
    }
  }
  return snapshots;
}

/// Arithmetic mean over the height axis of a stack of level grids.
inline ConcentrationMap column_average(const std::vector<Grid2d<double>>& levels,
                                       double pixel_size_m) {
  if (levels.empty()) throw InputError("column_average: no height levels");
  for (const auto& level : levels)
    if (!level.same_shape(levels.front()))
      throw ShapeError("column_average: level shape mismatch");
  ConcentrationMap out;
  out.pixel_size_m = pixel_size_m;
  out.values = Grid2d<double>(levels.front().height(), levels.front().width());
  for (int r = 0; r < out.height(); ++r)
    for (int c = 0; c < out.width(); ++c) {
      double s = 0.0;
      for (const auto& level : levels) s += level(r, c);
      out.values(r, c) = s / double(levels.size());
    }
  return out;
}

/// Load every `<name>.f32` + `<name>.json` snapshot pair under a directory,
/// sorted by filename. Validation failures name the offending file.
inline std::vector<PlumeSnapshot> ingest_snapshots(
    const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir) || !fs::is_directory(dir))
    throw FormatError("ingest_snapshots: not a directory: " + dir.string());
  std::vector<fs::path> rasters;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".f32")
      rasters.push_back(entry.path());
  std::sort(rasters.begin(), rasters.end());
  std::vector<PlumeSnapshot> snapshots;
  snapshots.reserve(rasters.size());
  for (const auto& raster : rasters)
    snapshots.push_back(io::read_snapshot(raster));
  return snapshots;
}

/// Ordinary least squares of snapshot IME against labeled emission rate.
inline metrics::LinearFit linearity_check(
    const std::vector<PlumeSnapshot>& snapshots,
    double k = kImeScaleKgPerPpb) {
  if (snapshots.size() < 2)
    throw InputError("linearity_check: need at least two snapshots");
  std::vector<double> rates, imes;
  rates.reserve(snapshots.size());
  imes.reserve(snapshots.size());
  for (const auto& snap : snapshots) {
    rates.push_back(snap.emission_rate_kgph);
    imes.push_back(ime(snap.map, k));
  }
  bool distinct = false;
  for (double r : rates)
    if (r != rates.front()) distinct = true;
  if (!distinct)
    throw InputError("linearity_check: all emission rates identical");
  return metrics::linear_fit(rates, imes);
}

}  // namespace plumekit::sim
