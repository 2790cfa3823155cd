#include <catch2/catch.hpp>

#include <cmath>
#include <filesystem>

#include "plumekit/io.hpp"
#include "plumekit/plumesim.hpp"

using namespace plumekit;
using namespace plumekit::sim;
namespace fs = std::filesystem;

namespace {

SimConfig small_config() {
  SimConfig config;
  config.height = 64;
  config.width = 64;
  config.pixel_size_m = 30.0;
  config.emission_rate_kgph = 1000.0;
  config.wind_u10_mps = 4.0;
  config.eddy_diffusivity_m2s = 15.0;
  config.turbulence_intensity = 0.3;
  config.dt_s = stable_dt(config);
  config.duration_s = 4200.0;
  config.snapshot_interval_s = 30.0;
  config.seed = 9;
  return config;
}

/// Re-derive the boundary outflow for one step from the pre-step field and
/// the wind the simulator reports, with independent flux arithmetic.
double oracle_outflow_kg(const Grid2d<double>& pre, double u, double v,
                         const SimConfig& config) {
  const double scale = config.dt_s / config.pixel_size_m;
  double out = 0.0;
  const int h = pre.height(), w = pre.width();
  for (int r = 0; r < h; ++r) {
    if (u > 0.0) out += u * pre(r, w - 1);
    if (u < 0.0) out += -u * pre(r, 0);
  }
  for (int c = 0; c < w; ++c) {
    if (v > 0.0) out += v * pre(h - 1, c);
    if (v < 0.0) out += -v * pre(0, c);
  }
  return out * scale * config.ime_scale_kg_per_ppb;
}

}  // namespace

TEST_CASE("zero emission rate keeps every snapshot identically zero",
          "[plumesim]") {
  SimConfig config = small_config();
  config.emission_rate_kgph = 0.0;
  config.duration_s = 3700.0;
  const auto snaps = simulate_plume(config);
  REQUIRE_FALSE(snaps.empty());
  for (const auto& s : snaps)
    for (double v : s.map.values) CHECK(v == 0.0);
}

TEST_CASE("pure diffusion from a centered source is 180-degree symmetric",
          "[plumesim]") {
  SimConfig config;
  config.height = 33;
  config.width = 33;
  config.wind_u10_mps = 0.0;
  config.turbulence_intensity = 0.0;
  config.source_row = 16;
  config.source_col = 16;
  config.emission_rate_kgph = 800.0;
  config.dt_s = stable_dt(config);
  config.duration_s = 600.0;
  config.snapshot_interval_s = 30.0;
  PlumeSimulator simulator(config);
  for (int i = 0; i < 400; ++i) simulator.step();
  const auto& f = simulator.field();
  for (int r = 0; r < config.height; ++r)
    for (int c = 0; c < config.width; ++c) {
      const double a = f(r, c);
      const double b = f(config.height - 1 - r, config.width - 1 - c);
      CHECK(a == Approx(b).epsilon(1e-6).margin(1e-12));
    }
}

TEST_CASE("mass budget against the flux-accounting oracle", "[plumesim]") {
  SimConfig config = small_config();
  config.duration_s = 1200.0;
  PlumeSimulator simulator(config);
  double injected = 0.0;
  double outflow_oracle = 0.0;
  const std::int64_t steps = std::int64_t(config.duration_s / config.dt_s);
  for (std::int64_t i = 0; i < steps; ++i) {
    const Grid2d<double> pre = simulator.field();
    const StepInfo info = simulator.step();
    injected += info.injected_kg;
    outflow_oracle +=
        oracle_outflow_kg(pre, info.u_mps, info.v_mps, config);
  }
  const double mass = simulator.domain_mass_kg();
  REQUIRE(injected > 0.0);
  CHECK(mass == Approx(injected - outflow_oracle).epsilon(0.01));
  // The simulator's own ledger should agree with the oracle tightly.
  CHECK(simulator.outflow_kg() ==
        Approx(outflow_oracle).epsilon(1e-9).margin(1e-12));
}

TEST_CASE("field stays non-negative at every step", "[plumesim]") {
  SimConfig config = small_config();
  config.wind_u10_mps = 9.0;
  config.turbulence_intensity = 0.3;
  config.dt_s = stable_dt(config);
  PlumeSimulator simulator(config);
  for (int i = 0; i < 600; ++i) {
    simulator.step();
    for (double v : simulator.field()) REQUIRE(v >= 0.0);
  }
}

TEST_CASE("doubling the emission rate doubles every pixel", "[plumesim]") {
  SimConfig config = small_config();
  config.duration_s = 3660.0;
  const auto base = simulate_plume(config);
  SimConfig doubled = config;
  doubled.emission_rate_kgph *= 2.0;
  const auto twice = simulate_plume(doubled);
  REQUIRE(base.size() == twice.size());
  for (std::size_t s = 0; s < base.size(); ++s)
    for (std::size_t i = 0; i < base[s].map.values.size(); ++i) {
      const double a = base[s].map.values.data()[i];
      const double b = twice[s].map.values.data()[i];
      CHECK(b == Approx(2.0 * a).epsilon(1e-9).margin(1e-300));
    }
}

TEST_CASE("snapshot count follows the cadence contract", "[plumesim]") {
  SimConfig config = small_config();
  config.duration_s = 3600.0 + 7.0 * 30.0;  // eight snapshots
  auto snaps = simulate_plume(config);
  CHECK(snaps.size() == 8);
  CHECK(snaps.front().sim_time_s == Approx(3600.0));
  CHECK(snaps.back().sim_time_s == Approx(3810.0));

  config.duration_s = 3599.0;  // before the snapshot window opens
  snaps = simulate_plume(config);
  CHECK(snaps.empty());
}

TEST_CASE("stability bound violations are configuration errors", "[plumesim]") {
  SimConfig config = small_config();
  config.dt_s = config.stability_dt_bound() * 4.0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config.dt_s = 7.0;  // does not divide the 30 s interval
  config.snapshot_interval_s = 30.0;
  if (config.dt_s <= config.stability_dt_bound())
    CHECK_THROWS_AS(config.validate(), ConfigError);
}

TEST_CASE("column_average examples and oracle", "[plumesim]") {
  const Grid2d<double> uniform(3, 4, 7.5);
  auto avg = column_average({uniform, uniform}, 30.0);
  for (double v : avg.values) CHECK(v == 7.5);

  const Grid2d<double> zeros(2, 2, 0.0);
  const Grid2d<double> tens(2, 2, 10.0);
  avg = column_average({zeros, tens}, 30.0);
  for (double v : avg.values) CHECK(v == 5.0);

  Rng rng(55);
  std::vector<Grid2d<double>> volume(3, Grid2d<double>(4, 4));
  for (auto& level : volume)
    for (auto& v : level) v = rng.uniform(0.0, 100.0);
  avg = column_average(volume, 30.0);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      double s = 0.0;
      for (const auto& level : volume) s += level(r, c);
      CHECK(avg.values(r, c) == s / 3.0);
    }

  CHECK_THROWS_AS(column_average({}, 30.0), InputError);
}

TEST_CASE("snapshot ingestion round-trips and validates", "[plumesim]") {
  const fs::path dir = fs::temp_directory_path() / "plumekit_ingest";
  fs::remove_all(dir);
  fs::create_directories(dir);

  CHECK(ingest_snapshots(dir).empty());

  SimConfig config = small_config();
  config.duration_s = 3660.0;
  const auto snaps = simulate_plume(config);
  REQUIRE(snaps.size() >= 2);
  io::write_snapshot(dir / "s0.f32", snaps[0]);
  io::write_snapshot(dir / "s1.f32", snaps[1]);
  const auto back = ingest_snapshots(dir);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < back[0].map.values.size(); ++i)
    CHECK(back[0].map.values.data()[i] ==
          double(float(snaps[0].map.values.data()[i])));

  // A negative pixel is a format error naming the file.
  io::write_snapshot(dir / "s2.f32", snaps[0]);
  auto raw = io::read_f32(dir / "s2.f32", snaps[0].map.values.size());
  raw[5] = -1.0f;
  io::write_f32(dir / "s2.f32", raw);
  CHECK_THROWS_WITH(ingest_snapshots(dir), Catch::Contains("s2.f32"));
  fs::remove_all(dir);
}

TEST_CASE("linearity_check on constructed inputs", "[plumesim]") {
  auto make = [](double rate, double ime_sum) {
    PlumeSnapshot s;
    s.map.values = Grid2d<double>(1, 1, ime_sum / kImeScaleKgPerPpb);
    s.emission_rate_kgph = rate;
    return s;
  };
  // Perfectly proportional: ime = 2 * rate.
  std::vector<PlumeSnapshot> snaps;
  for (double rate : {500.0, 1000.0, 1500.0, 2000.0})
    snaps.push_back(make(rate, 2.0 * rate));
  auto fit = linearity_check(snaps);
  CHECK(fit.r_squared == Approx(1.0).epsilon(1e-12));
  CHECK(fit.slope == Approx(2.0).epsilon(1e-9));

  // Two points fit exactly.
  snaps = {make(500.0, 120.0), make(1500.0, 500.0)};
  fit = linearity_check(snaps);
  CHECK(fit.r_squared == Approx(1.0).epsilon(1e-12));

  // Identical rates cannot be fit.
  snaps = {make(500.0, 100.0), make(500.0, 200.0), make(500.0, 300.0)};
  CHECK_THROWS_AS(linearity_check(snaps), InputError);
}
