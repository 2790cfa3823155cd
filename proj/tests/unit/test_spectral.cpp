#include <catch2/catch.hpp>

#include <cmath>
#include <vector>

#include "plumekit/random.hpp"
#include "plumekit/spectral.hpp"

using namespace plumekit;
using namespace plumekit::spectral;

namespace {

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    v[std::size_t(i)] = lo + (hi - lo) * double(i) / double(n - 1);
  return v;
}

HyperCube tiny_cube(int h, int w, int nb, double fill) {
  HyperCube cube;
  cube.radiance = Cube3d<double>(h, w, nb, fill);
  cube.band_centers_nm = linspace(2100.0, 2400.0, nb);
  cube.band_fwhm_nm = std::vector<double>(std::size_t(nb), 10.0);
  return cube;
}

}  // namespace

TEST_CASE("srf weights sum to one per band", "[spectral]") {
  const auto grid = linspace(1600.0, 2500.0, 901);
  const auto srf = build_srf({2100.0, 2300.0, 2450.0}, {8.0, 10.0, 12.0}, grid);
  for (const auto& w : srf.weights) {
    double s = 0.0;
    for (double v : w) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(s == Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("fwhm to sigma conversion", "[spectral]") {
  CHECK(fwhm_to_sigma(8.0) == Approx(3.3972).epsilon(1e-4));
  // The sampled response reproduces that width empirically.
  const auto grid = linspace(2200.0, 2400.0, 2001);
  const auto srf = build_srf({2300.0}, {8.0}, grid);
  double mean = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k)
    mean += srf.weights[0][k] * grid[k];
  double var = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k)
    var += srf.weights[0][k] * (grid[k] - mean) * (grid[k] - mean);
  CHECK(std::sqrt(var) == Approx(3.3972).epsilon(1e-3));
}

TEST_CASE("single-point grid collapses to weight one", "[spectral]") {
  const auto srf = build_srf({2300.0}, {8.0}, {2300.0});
  REQUIRE(srf.weights.size() == 1);
  REQUIRE(srf.weights[0].size() == 1);
  CHECK(srf.weights[0][0] == 1.0);
}

TEST_CASE("srf rejects centers outside the grid span", "[spectral]") {
  const auto grid = linspace(2000.0, 2400.0, 401);
  CHECK_THROWS_AS(build_srf({2500.0}, {8.0}, grid), InputError);
  CHECK_THROWS_AS(build_srf({2300.0}, {0.0}, grid), InputError);
}

TEST_CASE("optical depth basics", "[spectral]") {
  const AbsorptionTable table = synthetic_ch4_table(2.0);
  const double air = default_air_column();
  const auto zero = optical_depth(0.0, table, air);
  for (double t : zero) CHECK(t == 0.0);

  const auto one = optical_depth(700.0, table, air);
  const auto two = optical_depth(1400.0, table, air);
  for (std::size_t k = 0; k < one.size(); ++k)
    CHECK(two[k] == Approx(2.0 * one[k]).epsilon(1e-12).margin(1e-300));

  CHECK_THROWS_AS(optical_depth(-1.0, table, air), InputError);
}

TEST_CASE("optical depth single-line hand value", "[spectral]") {
  // sigma = 1e-20 cm^2, air column 5e24 /cm^2, 1000 ppb -> tau = 5e-2.
  AbsorptionTable table;
  table.wavelength_nm = {1600.0, 2450.0};
  table.cross_section_cm2 = {1e-20, 1e-20};
  const auto tau = optical_depth(1000.0, table, 5e24);
  CHECK(tau[0] == Approx(5e-2).epsilon(1e-12));
}

TEST_CASE("default air column from the ideal gas law", "[spectral]") {
  // p/(kB T) * 3000 m, in molecules/cm^2.
  const double n = 97000.0 / (1.380649e-23 * 296.0);
  CHECK(default_air_column() == Approx(n * 3000.0 * 1e-4).epsilon(1e-12));
}

TEST_CASE("transmittance values and oracle", "[spectral]") {
  CHECK(transmittance({0.0})[0] == 1.0);
  CHECK(transmittance({std::log(2.0)})[0] == Approx(0.5).epsilon(1e-12));
  Rng rng(8);
  std::vector<double> tau(64);
  for (auto& t : tau) t = rng.uniform(0.0, 3.0);
  const auto got = transmittance(tau);
  for (std::size_t k = 0; k < tau.size(); ++k) {
    CHECK(got[k] == Approx(std::exp(-tau[k])).epsilon(1e-12));
    CHECK(got[k] > 0.0);
    CHECK(got[k] <= 1.0);
  }
  CHECK_THROWS_AS(transmittance({-0.1}), InputError);
}

TEST_CASE("band convolution against the double-loop oracle", "[spectral]") {
  Rng rng(21);
  const auto grid = linspace(2000.0, 2400.0, 201);
  const auto srf = build_srf({2100.0, 2250.0, 2380.0}, {12.0, 9.0, 15.0}, grid);

  // Constant input passes through untouched.
  const std::vector<double> constant(grid.size(), 0.73);
  for (double v : band_convolve(constant, srf))
    CHECK(v == Approx(0.73).epsilon(1e-12));

  // Random input matches the brute-force double loop.
  std::vector<double> t(grid.size());
  for (auto& v : t) v = rng.uniform(0.2, 1.0);
  const auto got = band_convolve(t, srf);
  for (int b = 0; b < srf.bands(); ++b) {
    double s = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k)
      s += srf.weights[std::size_t(b)][k] * t[k];
    CHECK(got[std::size_t(b)] == Approx(s).epsilon(1e-12));
  }

  // Weighted means stay inside the input range.
  double lo = 1e9, hi = -1e9;
  for (double v : t) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (double v : got) {
    CHECK(v >= lo - 1e-12);
    CHECK(v <= hi + 1e-12);
  }

  CHECK_THROWS_AS(band_convolve({1.0, 2.0}, srf), ShapeError);
}

TEST_CASE("inject is the identity under unit transmittance", "[spectral]") {
  Rng rng(5);
  HyperCube base = tiny_cube(3, 4, 5, 1.0);
  for (auto& v : base.radiance.data()) v = rng.uniform(100.0, 900.0);
  TransmittanceCube ones;
  ones.values = Cube3d<double>(3, 4, 5, 1.0);
  ones.band_centers_nm = base.band_centers_nm;
  ones.band_fwhm_nm = base.band_fwhm_nm;
  const HyperCube out = inject(base, ones);
  CHECK(out.radiance == base.radiance);
}

TEST_CASE("inject scales a single element and divides back", "[spectral]") {
  HyperCube base = tiny_cube(2, 2, 3, 500.0);
  TransmittanceCube t;
  t.values = Cube3d<double>(2, 2, 3, 1.0);
  t.values(1, 0, 2) = 0.9;
  t.band_centers_nm = base.band_centers_nm;
  t.band_fwhm_nm = base.band_fwhm_nm;
  const HyperCube out = inject(base, t);
  CHECK(out.radiance(1, 0, 2) == Approx(450.0));
  CHECK(out.radiance(0, 0, 0) == 500.0);
  CHECK(out.radiance(1, 0, 1) == 500.0);

  // Dividing recovers the transmittance.
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c)
      for (int b = 0; b < 3; ++b)
        CHECK(out.radiance(r, c, b) / base.radiance(r, c, b) ==
              Approx(t.values(r, c, b)).epsilon(1e-9));

  TransmittanceCube wrong;
  wrong.values = Cube3d<double>(2, 3, 3, 1.0);
  CHECK_THROWS_AS(inject(base, wrong), ShapeError);
}

TEST_CASE("preprocess log scaling", "[spectral]") {
  HyperCube cube = tiny_cube(1, 3, 1, 1.0);
  cube.radiance(0, 0, 0) = 1.0;
  cube.radiance(0, 1, 0) = std::exp(10.0);
  cube.radiance(0, 2, 0) = 1000.0;
  const auto out = preprocess(cube);
  CHECK(out(0, 0, 0) == Approx(0.0).margin(1e-15));
  CHECK(out(0, 1, 0) == Approx(1.0).epsilon(1e-12));
  CHECK(out(0, 2, 0) == Approx(0.6908).epsilon(1e-4));

  cube.radiance(0, 0, 0) = 0.0;
  CHECK_THROWS_AS(preprocess(cube), InputError);
}

TEST_CASE("preprocess lands in [0,1] for sensor-like radiance", "[spectral]") {
  Rng rng(88);
  HyperCube cube = tiny_cube(8, 8, 4, 1.0);
  for (auto& v : cube.radiance.data()) v = rng.uniform(10.0, 20000.0);
  const auto out = preprocess(cube);
  for (double v : out.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("zero map produces a unit cube and identity injection",
          "[spectral]") {
  const AbsorptionTable table = synthetic_ch4_table(2.0);
  const auto srf = build_srf(default_band_centers(), default_band_fwhm(),
                             table.wavelength_nm);
  ConcentrationMap zero;
  zero.values = Grid2d<double>(4, 4, 0.0);
  const auto cube =
      build_transmittance_cube(zero, table, srf, default_air_column());
  for (double v : cube.values.data()) CHECK(v == 1.0);

  Rng rng(31);
  HyperCube base;
  base.radiance = Cube3d<double>(4, 4, kDefaultBandCount);
  for (auto& v : base.radiance.data()) v = rng.uniform(200.0, 1500.0);
  base.band_centers_nm = default_band_centers();
  base.band_fwhm_nm = default_band_fwhm();
  const HyperCube out = inject(base, cube);
  CHECK(out.radiance == base.radiance);
}

TEST_CASE("transmittance cube is monotone in concentration", "[spectral]") {
  const AbsorptionTable table = synthetic_ch4_table(2.0);
  const auto srf = build_srf(default_band_centers(), default_band_fwhm(),
                             table.wavelength_nm);
  const double air = default_air_column();
  ConcentrationMap low;
  low.values = Grid2d<double>(1, 1, 400.0);
  ConcentrationMap high;
  high.values = Grid2d<double>(1, 1, 900.0);
  const auto t_low = build_transmittance_cube(low, table, srf, air);
  const auto t_high = build_transmittance_cube(high, table, srf, air);
  for (int b = 0; b < t_low.bands(); ++b)
    CHECK(t_high.values(0, 0, b) <= t_low.values(0, 0, b) + 1e-15);
}

TEST_CASE("column-by-column processing is bit-exact", "[spectral]") {
  const AbsorptionTable table = synthetic_ch4_table(4.0);
  const auto srf = build_srf(default_band_centers(), default_band_fwhm(),
                             table.wavelength_nm);
  const double air = default_air_column();
  Rng rng(71);
  ConcentrationMap map;
  map.values = Grid2d<double>(6, 5, 0.0);
  for (auto& v : map.values) v = rng.uniform() < 0.5 ? rng.uniform(0.0, 800.0) : 0.0;
  const auto whole = build_transmittance_cube(map, table, srf, air);
  for (int c = 0; c < map.width(); ++c) {
    ConcentrationMap column;
    column.values = Grid2d<double>(map.height(), 1, 0.0);
    for (int r = 0; r < map.height(); ++r)
      column.values(r, 0) = map.values(r, c);
    const auto part = build_transmittance_cube(column, table, srf, air);
    for (int r = 0; r < map.height(); ++r)
      for (int b = 0; b < whole.bands(); ++b)
        CHECK(part.values(r, 0, b) == whole.values(r, c, b));
  }
}

TEST_CASE("synthetic table passes validation and covers the window",
          "[spectral]") {
  const AbsorptionTable table = synthetic_ch4_table();
  CHECK_NOTHROW(table.validate());
  CHECK(table.wavelength_nm.front() <= 1600.0);
  CHECK(table.wavelength_nm.back() >= 2450.0);
}
