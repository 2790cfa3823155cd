#include <catch2/catch.hpp>

#include <filesystem>

#include "plumekit/io.hpp"
#include "plumekit/random.hpp"
#include "plumekit/spectral.hpp"

using namespace plumekit;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("plumekit_io_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("snapshot raster round-trip is bit-exact", "[io]") {
  const fs::path dir = temp_dir("snap");
  Rng rng(11);
  PlumeSnapshot snap;
  snap.map.values = Grid2d<double>(7, 5);
  for (auto& v : snap.map.values) v = double(float(rng.uniform(0.0, 900.0)));
  snap.map.pixel_size_m = 30.0;
  snap.emission_rate_kgph = 1500.0;
  snap.wind_u10_mps = 4.0;
  snap.sim_time_s = 3630.0;
  io::write_snapshot(dir / "a.f32", snap);
  const PlumeSnapshot back = io::read_snapshot(dir / "a.f32");
  CHECK(back.map.values == snap.map.values);
  CHECK(back.emission_rate_kgph == snap.emission_rate_kgph);
  CHECK(back.wind_u10_mps == snap.wind_u10_mps);
  CHECK(back.sim_time_s == snap.sim_time_s);
  fs::remove_all(dir);
}

TEST_CASE("snapshot read rejects missing metadata and bad values", "[io]") {
  const fs::path dir = temp_dir("bad");
  PlumeSnapshot snap;
  snap.map.values = Grid2d<double>(2, 2, 1.0);
  io::write_snapshot(dir / "ok.f32", snap);

  // Drop a required field from the sidecar.
  io::Json meta = io::read_json(dir / "ok.json");
  meta.erase("wind_u10_mps");
  io::write_json(dir / "ok.json", meta);
  CHECK_THROWS_AS(io::read_snapshot(dir / "ok.f32"), FormatError);
  CHECK_THROWS_WITH(io::read_snapshot(dir / "ok.f32"),
                    Catch::Contains("wind_u10_mps"));

  // Negative pixel: the error names the file.
  PlumeSnapshot neg = snap;
  io::write_snapshot(dir / "neg.f32", neg);
  io::write_f32(dir / "neg.f32", {1.0f, -2.0f, 3.0f, 4.0f});
  CHECK_THROWS_WITH(io::read_snapshot(dir / "neg.f32"),
                    Catch::Contains("neg.f32"));

  // Shape mismatch between raster and sidecar.
  io::write_f32(dir / "ok.f32", {1.0f, 2.0f});
  meta["wind_u10_mps"] = 1.0;
  io::write_json(dir / "ok.json", meta);
  CHECK_THROWS_AS(io::read_snapshot(dir / "ok.f32"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("hypercube band-sequential round-trip", "[io]") {
  const fs::path dir = temp_dir("cube");
  Rng rng(3);
  HyperCube cube;
  cube.radiance = Cube3d<double>(4, 3, 5);
  for (auto& v : cube.radiance.data()) v = double(float(rng.uniform(0.5, 2.0)));
  cube.band_centers_nm = {2100, 2150, 2200, 2250, 2300};
  cube.band_fwhm_nm = std::vector<double>(5, 10.0);
  io::write_cube(dir / "c.f32", cube);
  const HyperCube back = io::read_cube(dir / "c.f32");
  CHECK(back.radiance == cube.radiance);
  CHECK(back.band_centers_nm == cube.band_centers_nm);
  fs::remove_all(dir);
}

TEST_CASE("absorption table CSV round-trip", "[io]") {
  const fs::path dir = temp_dir("csv");
  const AbsorptionTable table = spectral::synthetic_ch4_table(5.0);
  io::write_absorption_csv(dir / "ch4.csv", table);
  const AbsorptionTable back = io::read_absorption_csv(dir / "ch4.csv");
  REQUIRE(back.size() == table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    CHECK(back.wavelength_nm[i] == table.wavelength_nm[i]);
    CHECK(back.cross_section_cm2[i] == table.cross_section_cm2[i]);
  }
  CHECK(back.temperature_k == table.temperature_k);
  CHECK(back.pressure_pa == table.pressure_pa);
  fs::remove_all(dir);
}

TEST_CASE("rle mask round-trip over random masks", "[io]") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 1 + int(rng.uniform_int(0, 12));
    const int w = 1 + int(rng.uniform_int(0, 12));
    MaskGrid mask(h, w, 0);
    for (auto& v : mask) v = rng.uniform() < 0.4 ? 1 : 0;
    const auto runs = io::rle_encode(mask);
    const MaskGrid back = io::rle_decode(runs, h, w);
    CHECK(back == mask);
  }
}

TEST_CASE("instance json round-trip", "[io]") {
  MaskGrid full(9, 9, 0);
  full(2, 2) = full(2, 3) = full(3, 2) = 1;
  const PlumeInstance inst = make_instance(full, 840.0);
  const io::Json j = io::instance_to_json(inst, 512.5);
  const auto back = io::instance_from_json(j, "memory");
  CHECK(back.instance.bbox == inst.bbox);
  CHECK(back.instance.mask == inst.mask);
  CHECK(back.pixel_sum == 512.5);
  CHECK(*back.instance.emission_rate_kgph == 840.0);
}
