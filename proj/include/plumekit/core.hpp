#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "plumekit/grid.hpp"

namespace plumekit {

// ---------------------------------------------------------------------------
// Errors. Every throwing path in the toolkit uses one of these; the CLI maps
// ConfigError to exit 2 and FormatError to exit 3.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration value (stability bound, unknown key, k > pixels, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent file content; the message names the file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Mismatched grid/cube shapes between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Rejected input value (negative concentration, non-finite pixel, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure (singular covariance, degenerate signature, ...).
class NumericError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Inclusive axis-aligned box in (row, col) grid coordinates.
struct BBox {
  int row_min = 0;
  int col_min = 0;
  int row_max = 0;
  int col_max = 0;

  int height() const { return row_max - row_min + 1; }
  int width() const { return col_max - col_min + 1; }

  bool contains(const BBox& other) const {
    return row_min <= other.row_min && col_min <= other.col_min &&
           row_max >= other.row_max && col_max >= other.col_max;
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Column methane enhancement per pixel, in ppb. The canonical concentration
/// unit throughout the toolkit is ppb; reporting layers that mirror the
/// ppm-denominated tables divide by 1000 at the boundary.
struct ConcentrationMap {
  Grid2d<double> values;
  double pixel_size_m = 30.0;

  int height() const { return values.height(); }
  int width() const { return values.width(); }

  void validate() const {
    if (values.height() <= 0 || values.width() <= 0)
      throw InputError("ConcentrationMap: empty grid");
    if (!(pixel_size_m > 0.0))
      throw InputError("ConcentrationMap: pixel_size must be positive");
    for (double v : values) {
      if (!std::isfinite(v))
        throw InputError("ConcentrationMap: non-finite pixel value");
      if (v < 0.0)
        throw InputError("ConcentrationMap: negative pixel value");
    }
  }
};

/// One simulated (or ingested) plume state with its generation metadata.
struct PlumeSnapshot {
  ConcentrationMap map;
  double emission_rate_kgph = 0.0;
  double wind_u10_mps = 0.0;
  double sim_time_s = 0.0;

  void validate() const {
    map.validate();
    if (emission_rate_kgph < 0.0)
      throw InputError("PlumeSnapshot: negative emission rate");
    if (wind_u10_mps < 0.0) throw InputError("PlumeSnapshot: negative wind");
    if (sim_time_s < 0.0) throw InputError("PlumeSnapshot: negative sim time");
  }
};

/// Sensor radiance cube with per-band center wavelength and FWHM. Radiance
/// must stay strictly positive so the log preprocessing is defined.
struct HyperCube {
  Cube3d<double> radiance;
  std::vector<double> band_centers_nm;
  std::vector<double> band_fwhm_nm;

  int height() const { return radiance.height(); }
  int width() const { return radiance.width(); }
  int bands() const { return radiance.bands(); }

  void validate() const {
    if (radiance.empty()) throw InputError("HyperCube: empty cube");
    if (int(band_centers_nm.size()) != radiance.bands() ||
        int(band_fwhm_nm.size()) != radiance.bands())
      throw ShapeError("HyperCube: band metadata does not match band count");
    for (std::size_t b = 1; b < band_centers_nm.size(); ++b)
      if (!(band_centers_nm[b] > band_centers_nm[b - 1]))
        throw InputError("HyperCube: band centers must be strictly increasing");
    for (double v : radiance.data())
      if (!(v > 0.0) || !std::isfinite(v))
        throw InputError("HyperCube: radiance must be positive and finite");
  }
};

/// One segmented plume: a binary mask stored relative to its minimum
/// enclosing box, plus an optional emission-rate label in kg/h.
struct PlumeInstance {
  BBox bbox;
  MaskGrid mask;  // bbox.height() x bbox.width(), at least one true pixel
  std::optional<double> emission_rate_kgph;

  std::int64_t area() const {
    std::int64_t n = 0;
    for (auto v : mask) n += (v != 0);
    return n;
  }

  bool covers(int r, int c) const {
    const int lr = r - bbox.row_min;
    const int lc = c - bbox.col_min;
    return mask.in_bounds(lr, lc) && mask(lr, lc) != 0;
  }

  void validate() const {
    if (mask.height() != bbox.height() || mask.width() != bbox.width())
      throw ShapeError("PlumeInstance: mask does not match bbox");
    bool row_min_hit = false, row_max_hit = false;
    bool col_min_hit = false, col_max_hit = false;
    std::int64_t n = 0;
    for (int r = 0; r < mask.height(); ++r)
      for (int c = 0; c < mask.width(); ++c)
        if (mask(r, c)) {
          ++n;
          row_min_hit |= (r == 0);
          row_max_hit |= (r == mask.height() - 1);
          col_min_hit |= (c == 0);
          col_max_hit |= (c == mask.width() - 1);
        }
    if (n == 0) throw InputError("PlumeInstance: empty mask");
    if (!(row_min_hit && row_max_hit && col_min_hit && col_max_hit))
      throw InputError("PlumeInstance: bbox is not the minimum enclosing box");
    if (emission_rate_kgph && *emission_rate_kgph < 0.0)
      throw InputError("PlumeInstance: negative emission rate");
  }
};

/// High-resolution methane absorption cross-section at fixed (T, p).
struct AbsorptionTable {
  std::vector<double> wavelength_nm;       // strictly increasing
  std::vector<double> cross_section_cm2;   // per molecule
  double temperature_k = 296.0;
  double pressure_pa = 97000.0;

  std::size_t size() const { return wavelength_nm.size(); }

  void validate() const {
    if (wavelength_nm.size() != cross_section_cm2.size())
      throw ShapeError("AbsorptionTable: column length mismatch");
    if (wavelength_nm.size() < 2)
      throw InputError("AbsorptionTable: needs at least two grid points");
    for (std::size_t i = 1; i < wavelength_nm.size(); ++i)
      if (!(wavelength_nm[i] > wavelength_nm[i - 1]))
        throw InputError("AbsorptionTable: wavelengths must be increasing");
    for (double s : cross_section_cm2)
      if (!(s >= 0.0) || !std::isfinite(s))
        throw InputError("AbsorptionTable: cross-sections must be >= 0");
    if (wavelength_nm.front() > 1600.0 || wavelength_nm.back() < 2450.0)
      throw InputError(
          "AbsorptionTable: grid must cover the 1600-2450 nm methane window");
  }
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Scale factor turning a ppb pixel sum into kilograms of methane; the IME
/// constant used everywhere a mass is reported.
inline constexpr double kImeScaleKgPerPpb = 5.155e-3;

/// Integrated mass enhancement: k times the sum of all pixel enhancements.
/// Pure and independent of pixel ordering.
inline double ime(const ConcentrationMap& map,
                  double k = kImeScaleKgPerPpb) {
  if (!(k > 0.0)) throw InputError("ime: scale factor must be positive");
  double sum = 0.0;
  for (double v : map.values) {
    if (!std::isfinite(v)) throw InputError("ime: non-finite pixel value");
    sum += v;
  }
  return k * sum;
}

/// IME restricted to an instance's mask pixels.
inline double ime_masked(const ConcentrationMap& map,
                         const PlumeInstance& instance,
                         double k = kImeScaleKgPerPpb) {
  if (!(k > 0.0)) throw InputError("ime: scale factor must be positive");
  if (instance.bbox.row_max >= map.height() ||
      instance.bbox.col_max >= map.width() || instance.bbox.row_min < 0 ||
      instance.bbox.col_min < 0)
    throw ShapeError("ime_masked: instance box outside map");
  double sum = 0.0;
  for (int r = 0; r < instance.mask.height(); ++r)
    for (int c = 0; c < instance.mask.width(); ++c)
      if (instance.mask(r, c)) {
        const double v =
            map.values(r + instance.bbox.row_min, c + instance.bbox.col_min);
        if (!std::isfinite(v)) throw InputError("ime: non-finite pixel value");
        sum += v;
      }
  return k * sum;
}

/// Smallest axis-aligned box containing all true pixels of the mask.
inline BBox enclosing_box(const MaskGrid& mask) {
  int rmin = mask.height(), rmax = -1, cmin = mask.width(), cmax = -1;
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c)
      if (mask(r, c)) {
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
        cmin = std::min(cmin, c);
        cmax = std::max(cmax, c);
      }
  if (rmax < 0) throw InputError("enclosing_box: empty mask");
  return BBox{rmin, cmin, rmax, cmax};
}

/// Build an instance from a full-canvas mask, cropping storage to the box.
inline PlumeInstance make_instance(const MaskGrid& full_mask,
                                   std::optional<double> rate = std::nullopt) {
  const BBox box = enclosing_box(full_mask);
  MaskGrid cropped(box.height(), box.width(), 0);
  for (int r = 0; r < box.height(); ++r)
    for (int c = 0; c < box.width(); ++c)
      cropped(r, c) = full_mask(r + box.row_min, c + box.col_min);
  return PlumeInstance{box, std::move(cropped), rate};
}

/// Pixel-count intersection-over-union of two instances' masks, evaluated in
/// shared canvas coordinates.
inline double mask_iou(const PlumeInstance& a, const PlumeInstance& b) {
  const int r0 = std::max(a.bbox.row_min, b.bbox.row_min);
  const int r1 = std::min(a.bbox.row_max, b.bbox.row_max);
  const int c0 = std::max(a.bbox.col_min, b.bbox.col_min);
  const int c1 = std::min(a.bbox.col_max, b.bbox.col_max);
  std::int64_t inter = 0;
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c)
      if (a.covers(r, c) && b.covers(r, c)) ++inter;
  const std::int64_t uni = a.area() + b.area() - inter;
  return uni > 0 ? double(inter) / double(uni) : 0.0;
}

}  // namespace plumekit
