#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "plumekit/core.hpp"

namespace plumekit::plumeops {

enum class SegmentationStrategy { connected_components, active_contour };

struct SegmentationConfig {
  SegmentationStrategy strategy = SegmentationStrategy::connected_components;
  double detect_threshold_ppb = 70.0;  // 2x the default dataset noise sigma
  int morph_radius_px = 1;
  double ime_min = 300.0;   // minimum concentration sum (ppb) per instance
  double area_min = 300.0;  // minimum mask area in pixels
  int active_contour_iters = 200;
  double active_contour_smoothness = 0.0;

  void validate() const {
    if (detect_threshold_ppb < 0.0)
      throw ConfigError("SegmentationConfig: negative detect threshold");
    if (morph_radius_px < 0)
      throw ConfigError("SegmentationConfig: negative morph radius");
    if (ime_min < 0.0 || area_min < 0.0)
      throw ConfigError("SegmentationConfig: negative filter threshold");
    if (active_contour_iters < 1)
      throw ConfigError("SegmentationConfig: active contour needs iterations");
  }
};

/// A segmented plume: the instance, its concentration sum over the mask, and
/// the IME in kilograms.
struct PlumeSegment {
  PlumeInstance instance;
  double pixel_sum_ppb = 0.0;
  double ime_kg = 0.0;
};

namespace detail {

inline MaskGrid threshold_mask(const ConcentrationMap& map, double threshold) {
  MaskGrid mask(map.height(), map.width(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask.data()[i] = map.values.data()[i] > threshold ? 1 : 0;
  return mask;
}

inline std::vector<std::pair<int, int>> disk_offsets(int radius) {
  std::vector<std::pair<int, int>> offsets;
  for (int dr = -radius; dr <= radius; ++dr)
    for (int dc = -radius; dc <= radius; ++dc)
      if (dr * dr + dc * dc <= radius * radius) offsets.push_back({dr, dc});
  return offsets;
}

inline MaskGrid dilate(const MaskGrid& mask,
                       const std::vector<std::pair<int, int>>& offsets) {
  MaskGrid out(mask.height(), mask.width(), 0);
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c)
      if (mask(r, c))
        for (const auto& [dr, dc] : offsets)
          if (mask.in_bounds(r + dr, c + dc)) out(r + dr, c + dc) = 1;
  return out;
}

inline MaskGrid erode(const MaskGrid& mask,
                      const std::vector<std::pair<int, int>>& offsets) {
  MaskGrid out(mask.height(), mask.width(), 0);
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c) {
      bool all = true;
      for (const auto& [dr, dc] : offsets) {
        const int rr = r + dr, cc = c + dc;
        if (!mask.in_bounds(rr, cc) || !mask(rr, cc)) {
          all = false;
          break;
        }
      }
      out(r, c) = all ? 1 : 0;
    }
  return out;
}

inline MaskGrid morph_close(const MaskGrid& mask, int radius) {
  if (radius <= 0) return mask;
  const auto offsets = disk_offsets(radius);
  return erode(dilate(mask, offsets), offsets);
}

/// 8-connected labeling by flood fill; labels start at 1, 0 is background.
inline int label_components(const MaskGrid& mask, Grid2d<std::int32_t>& labels) {
  labels = Grid2d<std::int32_t>(mask.height(), mask.width(), 0);
  int next = 0;
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask(r, c) || labels(r, c) != 0) continue;
      ++next;
      stack.push_back({r, c});
      labels(r, c) = next;
      while (!stack.empty()) {
        const auto [cr, cc] = stack.back();
        stack.pop_back();
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = cr + dr, cccol = cc + dc;
            if ((dr | dc) == 0 || !mask.in_bounds(rr, cccol)) continue;
            if (mask(rr, cccol) && labels(rr, cccol) == 0) {
              labels(rr, cccol) = next;
              stack.push_back({rr, cccol});
            }
          }
      }
    }
  return next;
}

/// Discrete two-phase Chan-Vese region competition: starting from the seed
/// mask, raster sweeps flip a pixel's membership whenever that lowers
/// (v - c_in)^2 - (v - c_out)^2 plus a perimeter penalty. Stops when a sweep
/// flips nothing or the iteration cap is hit.
inline MaskGrid chan_vese(const ConcentrationMap& map, const MaskGrid& seed,
                          int max_iters, double smoothness) {
  MaskGrid region = seed;
  const int h = map.height(), w = map.width();

  for (int iter = 0; iter < max_iters; ++iter) {
    double sum_in = 0.0, sum_out = 0.0;
    std::int64_t n_in = 0, n_out = 0;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        if (region(r, c)) {
          sum_in += map.values(r, c);
          ++n_in;
        } else {
          sum_out += map.values(r, c);
          ++n_out;
        }
      }
    if (n_in == 0 || n_out == 0) break;
    const double c_in = sum_in / double(n_in);
    const double c_out = sum_out / double(n_out);

    bool changed = false;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const double v = map.values(r, c);
        const double d_in = (v - c_in) * (v - c_in);
        const double d_out = (v - c_out) * (v - c_out);
        int inside_neighbors = 0, neighbors = 0;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            if ((dr | dc) == 0 || !region.in_bounds(r + dr, c + dc)) continue;
            ++neighbors;
            inside_neighbors += region(r + dr, c + dc) ? 1 : 0;
          }
        // Perimeter penalty pushes a pixel toward its neighborhood majority.
        const double penalty =
            smoothness * (neighbors - 2 * inside_neighbors) / double(neighbors);
        const std::uint8_t want = (d_in + penalty < d_out) ? 1 : 0;
        if (want != region(r, c)) {
          region(r, c) = want;
          changed = true;
        }
      }
    if (!changed) break;
  }
  return region;
}

}  // namespace detail

/// Classical plume instance segmentation. connected_components thresholds,
/// closes small gaps, and labels 8-connected regions; active_contour refines
/// the thresholded mask by Chan-Vese region competition first. Instances come
/// back sorted by descending IME.
inline std::vector<PlumeSegment> segment_plumes(const ConcentrationMap& map,
                                                const SegmentationConfig& config,
                                                double k = kImeScaleKgPerPpb) {
  map.validate();
  config.validate();

  MaskGrid mask = detail::threshold_mask(map, config.detect_threshold_ppb);
  if (config.strategy == SegmentationStrategy::active_contour)
    mask = detail::chan_vese(map, mask, config.active_contour_iters,
                             config.active_contour_smoothness);
  mask = detail::morph_close(mask, config.morph_radius_px);

  Grid2d<std::int32_t> labels;
  const int count = detail::label_components(mask, labels);

  std::vector<MaskGrid> full{std::size_t(count)};
  for (auto& m : full) m = MaskGrid(map.height(), map.width(), 0);
  for (int r = 0; r < map.height(); ++r)
    for (int c = 0; c < map.width(); ++c)
      if (labels(r, c) > 0) full[std::size_t(labels(r, c)) - 1](r, c) = 1;

  std::vector<PlumeSegment> segments;
  segments.reserve(full.size());
  for (const auto& m : full) {
    PlumeSegment seg;
    seg.instance = make_instance(m);
    double sum = 0.0;
    for (int r = 0; r < map.height(); ++r)
      for (int c = 0; c < map.width(); ++c)
        if (m(r, c)) sum += map.values(r, c);
    seg.pixel_sum_ppb = sum;
    seg.ime_kg = k * sum;
    segments.push_back(std::move(seg));
  }
  std::stable_sort(segments.begin(), segments.end(),
                   [](const PlumeSegment& a, const PlumeSegment& b) {
                     return a.ime_kg > b.ime_kg;
                   });
  return segments;
}

/// Drop false-positive patches: instances whose concentration sum falls below
/// ime_min or whose area falls below area_min pixels. Idempotent.
inline std::vector<PlumeSegment> filter_instances(
    std::vector<PlumeSegment> segments, const SegmentationConfig& config) {
  std::vector<PlumeSegment> kept;
  kept.reserve(segments.size());
  for (auto& seg : segments)
    if (seg.pixel_sum_ppb >= config.ime_min &&
        double(seg.instance.area()) >= config.area_min)
      kept.push_back(std::move(seg));
  return kept;
}

/// Effective transport speed from the 10 m wind: 0.34 u10 + 0.44.
inline double effective_wind(double u10_mps) {
  if (u10_mps < 0.0) throw InputError("effective_wind: negative wind speed");
  return 0.34 * u10_mps + 0.44;
}

/// Plume length scale: the square root of the mask area.
inline double plume_length(const PlumeInstance& instance, double pixel_size_m) {
  const std::int64_t area = instance.area();
  if (area == 0) throw InputError("plume_length: empty mask");
  if (!(pixel_size_m > 0.0))
    throw InputError("plume_length: pixel size must be positive");
  return std::sqrt(double(area) * pixel_size_m * pixel_size_m);
}

/// IME-model emission rate: Q = U_eff * IME / L, reported in kg/h.
inline double emission_rate(const PlumeInstance& instance,
                            const ConcentrationMap& map, double u10_mps,
                            double k = kImeScaleKgPerPpb) {
  const double u_eff = effective_wind(u10_mps);
  const double mass_kg = ime_masked(map, instance, k);
  const double length_m = plume_length(instance, map.pixel_size_m);
  const double q_kg_per_s = u_eff * mass_kg / length_m;
  return q_kg_per_s * 3600.0;
}

}  // namespace plumekit::plumeops
