#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "plumekit/core.hpp"

namespace plumekit::spectral {

inline constexpr double kBoltzmannJPerK = 1.380649e-23;

/// FWHM of a gaussian to its sigma: fwhm / (2 sqrt(2 ln 2)).
inline double fwhm_to_sigma(double fwhm) {
  return fwhm / 2.3548200450309493;
}

/// Dry-air column over a 0-3000 m path at the table's (T, p), in
/// molecules/cm^2, from the ideal-gas law. Computed, never hard-coded.
inline double default_air_column(double temperature_k = 296.0,
                                 double pressure_pa = 97000.0,
                                 double path_m = 3000.0) {
  if (!(temperature_k > 0.0) || !(pressure_pa > 0.0) || !(path_m > 0.0))
    throw InputError("default_air_column: non-positive argument");
  const double number_density_m3 = pressure_pa / (kBoltzmannJPerK * temperature_k);
  return number_density_m3 * path_m * 1e-4;  // /m^2 -> /cm^2
}

/// Per-band gaussian response sampled on the absorption-table wavelength
/// grid, each band's weights normalized to sum to one.
struct SpectralResponse {
  std::vector<double> grid_nm;
  std::vector<double> centers_nm;
  std::vector<double> fwhm_nm;
  std::vector<std::vector<double>> weights;  // [band][grid point]

  int bands() const { return int(centers_nm.size()); }
  std::size_t grid_size() const { return grid_nm.size(); }
};

inline SpectralResponse build_srf(const std::vector<double>& centers_nm,
                                  const std::vector<double>& fwhm_nm,
                                  const std::vector<double>& grid_nm) {
  if (centers_nm.size() != fwhm_nm.size() || centers_nm.empty())
    throw ShapeError("build_srf: centers and fwhm must match and be non-empty");
  if (grid_nm.empty()) throw InputError("build_srf: empty wavelength grid");
  SpectralResponse srf;
  srf.grid_nm = grid_nm;
  srf.centers_nm = centers_nm;
  srf.fwhm_nm = fwhm_nm;
  srf.weights.resize(centers_nm.size());
  for (std::size_t b = 0; b < centers_nm.size(); ++b) {
    const double center = centers_nm[b];
    if (center < grid_nm.front() || center > grid_nm.back())
      throw InputError("build_srf: band center outside wavelength grid span");
    if (!(fwhm_nm[b] > 0.0)) throw InputError("build_srf: fwhm must be positive");
    const double sigma = fwhm_to_sigma(fwhm_nm[b]);
    std::vector<double>& w = srf.weights[b];
    w.resize(grid_nm.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < grid_nm.size(); ++k) {
      const double z = (grid_nm[k] - center) / sigma;
      w[k] = std::exp(-0.5 * z * z);
      sum += w[k];
    }
    for (double& v : w) v /= sum;
  }
  return srf;
}

/// Beer-Lambert optical depth for a ppb column enhancement:
/// tau(lambda) = sigma(lambda) * (column * 1e-9) * air_column.
inline std::vector<double> optical_depth(double column_ppb,
                                         const AbsorptionTable& table,
                                         double air_column_per_cm2) {
  if (column_ppb < 0.0) throw InputError("optical_depth: negative column");
  if (!(air_column_per_cm2 > 0.0))
    throw InputError("optical_depth: air column must be positive");
  const double factor = column_ppb * 1e-9 * air_column_per_cm2;
  std::vector<double> tau(table.size());
  for (std::size_t k = 0; k < table.size(); ++k)
    tau[k] = table.cross_section_cm2[k] * factor;
  return tau;
}

/// Optical depth per single ppb; the building block of matched-filter
/// target signatures.
inline std::vector<double> unit_optical_depth(const AbsorptionTable& table,
                                              double air_column_per_cm2) {
  return optical_depth(1.0, table, air_column_per_cm2);
}

inline std::vector<double> transmittance(const std::vector<double>& tau) {
  std::vector<double> t(tau.size());
  for (std::size_t k = 0; k < tau.size(); ++k) {
    if (tau[k] < 0.0) throw InputError("transmittance: negative optical depth");
    t[k] = std::exp(-tau[k]);
  }
  return t;
}

/// Normalized convolution along the wavelength dimension: per band, the
/// weighted mean of the high-resolution signal under that band's response.
inline std::vector<double> band_convolve(const std::vector<double>& highres,
                                         const SpectralResponse& srf) {
  if (highres.size() != srf.grid_size())
    throw ShapeError("band_convolve: signal does not match SRF grid");
  std::vector<double> out(srf.bands());
  for (int b = 0; b < srf.bands(); ++b) {
    const std::vector<double>& w = srf.weights[std::size_t(b)];
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * highres[k];
    out[std::size_t(b)] = s;
  }
  return out;
}

/// Band-resolved plume transmittance aligned with a target cube's bands.
struct TransmittanceCube {
  Cube3d<double> values;  // each in (0, 1]
  std::vector<double> band_centers_nm;
  std::vector<double> band_fwhm_nm;

  int height() const { return values.height(); }
  int width() const { return values.width(); }
  int bands() const { return values.bands(); }

  void validate() const {
    if (values.empty()) throw InputError("TransmittanceCube: empty cube");
    for (double v : values.data())
      if (!(v > 0.0) || v > 1.0)
        throw InputError("TransmittanceCube: values must lie in (0, 1]");
  }
};

/// Turn a concentration map into the per-pixel, band-convolved transmittance
/// cube. Zero-concentration pixels carry T = 1 exactly in every band, so
/// injection leaves the base map untouched there. Per-pixel and pure: any
/// column-by-column decomposition reproduces the whole-image result
/// bit-exactly.
inline TransmittanceCube build_transmittance_cube(
    const ConcentrationMap& map, const AbsorptionTable& table,
    const SpectralResponse& srf, double air_column_per_cm2) {
  map.validate();
  if (srf.grid_size() != table.size())
    throw ShapeError("build_transmittance_cube: SRF grid does not match table");
  TransmittanceCube cube;
  cube.band_centers_nm = srf.centers_nm;
  cube.band_fwhm_nm = srf.fwhm_nm;
  cube.values = Cube3d<double>(map.height(), map.width(), srf.bands(), 1.0);
  const std::vector<double> unit_tau =
      unit_optical_depth(table, air_column_per_cm2);
  std::vector<double> t(table.size());
  for (int r = 0; r < map.height(); ++r) {
    for (int c = 0; c < map.width(); ++c) {
      const double column = map.values(r, c);
      if (column == 0.0) continue;
      for (std::size_t k = 0; k < t.size(); ++k)
        t[k] = std::exp(-column * unit_tau[k]);
      double* px = cube.values.pixel(r, c);
      for (int b = 0; b < srf.bands(); ++b) {
        const std::vector<double>& w = srf.weights[std::size_t(b)];
        double s = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * t[k];
        px[b] = s;
      }
    }
  }
  return cube;
}

/// Hadamard product of base radiance and plume transmittance.
inline HyperCube inject(const HyperCube& base, const TransmittanceCube& plume) {
  if (!base.radiance.same_shape(plume.values))
    throw ShapeError("inject: cube shapes do not match");
  HyperCube out = base;
  for (std::size_t i = 0; i < out.radiance.data().size(); ++i)
    out.radiance.data()[i] = base.radiance.data()[i] * plume.values.data()[i];
  return out;
}

/// Log preprocessing: ln(radiance)/10 per element. For EnMAP/PRISMA radiance
/// ranges the outputs land in [0, 1]; that is asserted in tests, not here.
inline Cube3d<double> preprocess(const HyperCube& cube) {
  Cube3d<double> out(cube.height(), cube.width(), cube.bands());
  for (std::size_t i = 0; i < cube.radiance.data().size(); ++i) {
    const double v = cube.radiance.data()[i];
    if (!(v > 0.0))
      throw InputError("preprocess: radiance must be positive for the log");
    out.data()[i] = std::log(v) / 10.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Built-in sensor model and cross-section data
// ---------------------------------------------------------------------------

/// Default band grid: 41 SWIR bands across the methane window, 10 nm apart
/// with 10 nm FWHM, mirroring the EnMAP band count after exclusion.
inline constexpr int kDefaultBandCount = 41;

inline std::vector<double> default_band_centers() {
  std::vector<double> centers(kDefaultBandCount);
  for (int b = 0; b < kDefaultBandCount; ++b) centers[std::size_t(b)] = 2050.0 + 10.0 * b;
  return centers;
}

inline std::vector<double> default_band_fwhm() {
  return std::vector<double>(kDefaultBandCount, 10.0);
}

/// Smooth stand-in for the methane absorption cross-section over the SWIR
/// window at (296 K, 97 kPa): gaussian lobes around the 2.3 um band complex
/// plus the weaker 1.65 um band. Peak magnitudes sit at the 1e-21 cm^2 scale
/// so a few hundred ppb of column enhancement absorbs a fraction of a percent
/// per band. Real deployments feed a measured table via CSV instead.
inline AbsorptionTable synthetic_ch4_table(double step_nm = 1.0) {
  AbsorptionTable table;
  table.temperature_k = 296.0;
  table.pressure_pa = 97000.0;
  auto lobe = [](double wl, double center, double width, double peak) {
    const double z = (wl - center) / width;
    return peak * std::exp(-0.5 * z * z);
  };
  for (double wl = 1550.0; wl <= 2500.0 + 1e-9; wl += step_nm) {
    double xs = 0.0;
    xs += lobe(wl, 2305.0, 45.0, 4.5e-21);
    xs += lobe(wl, 2370.0, 30.0, 2.6e-21);
    xs += lobe(wl, 2240.0, 28.0, 1.6e-21);
    xs += lobe(wl, 1666.0, 22.0, 1.1e-21);
    xs += lobe(wl, 1730.0, 18.0, 4.0e-22);
    table.wavelength_nm.push_back(wl);
    table.cross_section_cm2.push_back(xs);
  }
  return table;
}

}  // namespace plumekit::spectral
