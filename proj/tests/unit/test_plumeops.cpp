#include <catch2/catch.hpp>

#include <cmath>

#include "plumekit/plumeops.hpp"
#include "plumekit/random.hpp"

using namespace plumekit;
using namespace plumekit::plumeops;

namespace {

ConcentrationMap zero_map(int h, int w) {
  ConcentrationMap m;
  m.values = Grid2d<double>(h, w, 0.0);
  return m;
}

void paint_blob(ConcentrationMap& map, int r0, int c0, int size, double value) {
  for (int r = r0; r < r0 + size; ++r)
    for (int c = c0; c < c0 + size; ++c) map.values(r, c) = value;
}

SegmentationConfig cc_config(double threshold, int radius = 0) {
  SegmentationConfig config;
  config.strategy = SegmentationStrategy::connected_components;
  config.detect_threshold_ppb = threshold;
  config.morph_radius_px = radius;
  return config;
}

}  // namespace

TEST_CASE("all-zero map segments to nothing", "[plumeops]") {
  const auto segs = segment_plumes(zero_map(16, 16), cc_config(10.0));
  CHECK(segs.empty());
}

TEST_CASE("two disjoint blobs give two instances partitioning their pixels",
          "[plumeops]") {
  auto map = zero_map(32, 32);
  paint_blob(map, 4, 4, 6, 200.0);
  paint_blob(map, 20, 20, 5, 300.0);
  const auto segs = segment_plumes(map, cc_config(50.0));
  REQUIRE(segs.size() == 2);
  // Sorted by descending IME: 25 px * 300 = 7500 beats 36 px * 200 = 7200.
  CHECK(segs[0].pixel_sum_ppb == Approx(7500.0));
  CHECK(segs[1].pixel_sum_ppb == Approx(7200.0));
  CHECK(segs[0].ime_kg == Approx(7500.0 * kImeScaleKgPerPpb));
  // Masks are disjoint and cover exactly the painted pixels.
  int covered = 0;
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c) {
      const bool a = segs[0].instance.covers(r, c);
      const bool b = segs[1].instance.covers(r, c);
      CHECK_FALSE((a && b));
      if (a || b) {
        ++covered;
        CHECK(map.values(r, c) > 50.0);
      }
    }
  CHECK(covered == 36 + 25);
}

TEST_CASE("a sub-threshold gap splits one plume into two instances",
          "[plumeops]") {
  auto map = zero_map(16, 16);
  for (int c = 2; c < 14; ++c) map.values(8, c) = 150.0;
  map.values(8, 7) = 20.0;  // the gap
  const auto segs = segment_plumes(map, cc_config(50.0));
  CHECK(segs.size() == 2);
}

TEST_CASE("morphological closing bridges a gap in a thick bar", "[plumeops]") {
  auto map = zero_map(16, 16);
  for (int r = 7; r <= 9; ++r)
    for (int c = 2; c < 14; ++c)
      map.values(r, c) = c == 7 ? 20.0 : 150.0;  // sub-threshold column
  CHECK(segment_plumes(map, cc_config(50.0, 0)).size() == 2);
  CHECK(segment_plumes(map, cc_config(50.0, 1)).size() == 1);
}

TEST_CASE("active contour recovers two gaussian blobs", "[plumeops]") {
  auto map = zero_map(48, 48);
  Rng rng(6);
  auto gaussian_blob = [&](int cr, int cc, double peak, double width) {
    for (int r = 0; r < 48; ++r)
      for (int c = 0; c < 48; ++c) {
        const double d2 = double((r - cr) * (r - cr) + (c - cc) * (c - cc));
        map.values(r, c) += peak * std::exp(-d2 / (2.0 * width * width));
      }
  };
  gaussian_blob(14, 14, 500.0, 4.0);
  gaussian_blob(33, 33, 420.0, 4.0);
  for (auto& v : map.values) v = std::max(0.0, v + 8.0 * rng.gaussian());

  SegmentationConfig config;
  config.strategy = SegmentationStrategy::active_contour;
  config.detect_threshold_ppb = 100.0;
  config.morph_radius_px = 0;
  config.area_min = 30.0;
  auto segs = segment_plumes(map, config);
  segs = filter_instances(std::move(segs), config);
  REQUIRE(segs.size() == 2);
  for (const auto& seg : segs) CHECK(seg.instance.area() >= 30);
}

TEST_CASE("filter_instances thresholds and idempotence", "[plumeops]") {
  SegmentationConfig config;
  config.ime_min = 300.0;
  config.area_min = 2.0;

  auto make_segment = [](double sum, int area) {
    PlumeSegment seg;
    MaskGrid full(8, 8, 0);
    for (int i = 0; i < area; ++i) full(i / 8, i % 8) = 1;
    seg.instance = make_instance(full);
    seg.pixel_sum_ppb = sum;
    seg.ime_kg = sum * kImeScaleKgPerPpb;
    return seg;
  };

  std::vector<PlumeSegment> segs;
  segs.push_back(make_segment(299.0, 10));  // removed: sum below 300
  segs.push_back(make_segment(301.0, 10));  // kept
  segs.push_back(make_segment(5000.0, 1));  // removed: area below 2
  auto kept = filter_instances(segs, config);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].pixel_sum_ppb == 301.0);

  const auto again = filter_instances(kept, config);
  CHECK(again.size() == kept.size());

  CHECK(filter_instances({}, config).empty());
}

TEST_CASE("effective wind evaluations", "[plumeops]") {
  CHECK(effective_wind(0.0) == Approx(0.44));
  CHECK(effective_wind(10.0) == Approx(3.84));
  CHECK(effective_wind(2.0) == Approx(1.12));
  CHECK_THROWS_AS(effective_wind(-1.0), InputError);
}

TEST_CASE("plume length from mask area", "[plumeops]") {
  MaskGrid one(4, 4, 0);
  one(1, 1) = 1;
  const auto single = make_instance(one);
  CHECK(plume_length(single, 30.0) == Approx(30.0));
  CHECK(plume_length(single, 60.0) == Approx(60.0));

  MaskGrid big(110, 110, 0);
  for (int r = 0; r < 100; ++r)
    for (int c = 0; c < 100; ++c) big(r, c) = 1;
  const auto block = make_instance(big);
  CHECK(plume_length(block, 30.0) == Approx(3000.0));
}

TEST_CASE("emission rate chained hand example", "[plumeops]") {
  // IME 500 kg over a 10,000-pixel mask at 30 m, u10 = 2 m/s:
  // U_eff = 1.12, L = 3000 m, Q = 1.12 * 500 / 3000 * 3600 = 672 kg/h.
  const int side = 100;
  ConcentrationMap map = zero_map(side + 4, side + 4);
  const double per_pixel = 500.0 / kImeScaleKgPerPpb / (side * side);
  MaskGrid full(side + 4, side + 4, 0);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      map.values(r, c) = per_pixel;
      full(r, c) = 1;
    }
  const auto inst = make_instance(full);
  CHECK(emission_rate(inst, map, 2.0) == Approx(672.0).epsilon(1e-9));
}

TEST_CASE("emission rate vanishes on a zero map and scales linearly",
          "[plumeops]") {
  ConcentrationMap map = zero_map(12, 12);
  MaskGrid full(12, 12, 0);
  for (int r = 3; r < 8; ++r)
    for (int c = 3; c < 8; ++c) full(r, c) = 1;
  const auto inst = make_instance(full);
  CHECK(emission_rate(inst, map, 5.0) == 0.0);

  for (int r = 3; r < 8; ++r)
    for (int c = 3; c < 8; ++c) map.values(r, c) = 40.0;
  const double q1 = emission_rate(inst, map, 5.0);
  for (auto& v : map.values) v *= 3.0;
  const double q3 = emission_rate(inst, map, 5.0);
  CHECK(q3 == Approx(3.0 * q1).epsilon(1e-12));
}

TEST_CASE("segmentation masks are pairwise disjoint", "[plumeops]") {
  Rng rng(99);
  auto map = zero_map(40, 40);
  for (auto& v : map.values)
    v = rng.uniform() < 0.2 ? rng.uniform(60.0, 400.0) : 0.0;
  const auto segs = segment_plumes(map, cc_config(50.0));
  Grid2d<int> owner(40, 40, -1);
  for (std::size_t i = 0; i < segs.size(); ++i)
    for (int r = 0; r < 40; ++r)
      for (int c = 0; c < 40; ++c)
        if (segs[i].instance.covers(r, c)) {
          CHECK(owner(r, c) == -1);
          owner(r, c) = int(i);
        }
}
