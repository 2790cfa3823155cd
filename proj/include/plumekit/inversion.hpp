#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "plumekit/core.hpp"
#include "plumekit/random.hpp"
#include "plumekit/spectral.hpp"

namespace plumekit::inversion {

// ---------------------------------------------------------------------------
// Small dense symmetric-positive-definite solver (Cholesky). B is the band
// count, tens at most, so O(B^3) is nothing.
// ---------------------------------------------------------------------------

namespace detail {

/// Lower-triangular Cholesky factor of a symmetric matrix stored row-major.
/// Returns false when the matrix is not positive-definite.
inline bool cholesky(std::vector<double>& a, int n) {
  for (int j = 0; j < n; ++j) {
    double d = a[std::size_t(j) * n + j];
    for (int k = 0; k < j; ++k) {
      const double l = a[std::size_t(j) * n + k];
      d -= l * l;
    }
    if (!(d > 0.0)) return false;
    const double ljj = std::sqrt(d);
    a[std::size_t(j) * n + j] = ljj;
    for (int i = j + 1; i < n; ++i) {
      double s = a[std::size_t(i) * n + j];
      for (int k = 0; k < j; ++k)
        s -= a[std::size_t(i) * n + k] * a[std::size_t(j) * n + k];
      a[std::size_t(i) * n + j] = s / ljj;
    }
  }
  return true;
}

/// Solve L L^T x = b given the factor from cholesky().
inline std::vector<double> cholesky_solve(const std::vector<double>& l, int n,
                                          const std::vector<double>& b) {
  std::vector<double> x(b);
  for (int i = 0; i < n; ++i) {
    double s = x[std::size_t(i)];
    for (int k = 0; k < i; ++k) s -= l[std::size_t(i) * n + k] * x[std::size_t(k)];
    x[std::size_t(i)] = s / l[std::size_t(i) * n + i];
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = x[std::size_t(i)];
    for (int k = i + 1; k < n; ++k) s -= l[std::size_t(k) * n + i] * x[std::size_t(k)];
    x[std::size_t(i)] = s / l[std::size_t(i) * n + i];
  }
  return x;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Background statistics and target signature
// ---------------------------------------------------------------------------

/// Mean spectrum and shrunk covariance of a pixel population.
struct BackgroundStats {
  std::vector<double> mean;
  std::vector<double> covariance;  // B x B row-major, after shrinkage
  std::int64_t pixel_count = 0;
  double shrinkage_used = 0.0;

  int bands() const { return int(mean.size()); }
};

/// Radiance-space methane signature: t = -mean .* unit_depth, the first-order
/// darkening of the mean background radiance per ppb.
struct TargetSignature {
  std::vector<double> t;
};

/// Estimate mean and covariance over the masked pixels, then shrink toward
/// the diagonal: C <- (1-s) C + s diag(C). Populations smaller than B+1
/// cannot support a full-rank sample covariance, so the shrinkage weight is
/// raised to max(s, 1 - n/(B+1)) there.
inline BackgroundStats estimate_background(const HyperCube& cube,
                                           const MaskGrid& mask,
                                           double shrinkage = 0.05) {
  if (mask.height() != cube.height() || mask.width() != cube.width())
    throw ShapeError("estimate_background: mask does not match cube");
  if (shrinkage < 0.0 || shrinkage > 1.0)
    throw ConfigError("estimate_background: shrinkage must be in [0, 1]");
  const int nb = cube.bands();
  BackgroundStats stats;
  stats.mean.assign(std::size_t(nb), 0.0);
  std::int64_t n = 0;
  for (int r = 0; r < cube.height(); ++r)
    for (int c = 0; c < cube.width(); ++c)
      if (mask(r, c)) {
        const double* px = cube.radiance.pixel(r, c);
        for (int b = 0; b < nb; ++b) stats.mean[std::size_t(b)] += px[b];
        ++n;
      }
  if (n < 2)
    throw InputError("estimate_background: need at least two masked pixels");
  for (double& m : stats.mean) m /= double(n);
  stats.pixel_count = n;

  stats.covariance.assign(std::size_t(nb) * nb, 0.0);
  std::vector<double> d(std::size_t(nb), 0.0);
  for (int r = 0; r < cube.height(); ++r)
    for (int c = 0; c < cube.width(); ++c)
      if (mask(r, c)) {
        const double* px = cube.radiance.pixel(r, c);
        for (int b = 0; b < nb; ++b) d[std::size_t(b)] = px[b] - stats.mean[std::size_t(b)];
        for (int i = 0; i < nb; ++i)
          for (int j = i; j < nb; ++j)
            stats.covariance[std::size_t(i) * nb + j] += d[std::size_t(i)] * d[std::size_t(j)];
      }
  for (int i = 0; i < nb; ++i)
    for (int j = i; j < nb; ++j) {
      const double v = stats.covariance[std::size_t(i) * nb + j] / double(n);
      stats.covariance[std::size_t(i) * nb + j] = v;
      stats.covariance[std::size_t(j) * nb + i] = v;
    }

  double s = shrinkage;
  if (n < std::int64_t(nb) + 1)
    s = std::max(s, 1.0 - double(n) / double(nb + 1));
  stats.shrinkage_used = s;
  for (int i = 0; i < nb; ++i)
    for (int j = 0; j < nb; ++j)
      if (i != j) stats.covariance[std::size_t(i) * nb + j] *= (1.0 - s);
  return stats;
}

inline TargetSignature target_signature(const BackgroundStats& stats,
                                        const std::vector<double>& unit_depth) {
  if (unit_depth.size() != stats.mean.size())
    throw ShapeError("target_signature: unit depth does not match band count");
  TargetSignature sig;
  sig.t.resize(stats.mean.size());
  for (std::size_t b = 0; b < stats.mean.size(); ++b) {
    if (stats.mean[b] == 0.0)
      throw NumericError("target_signature: zero mean radiance in a band");
    sig.t[b] = -stats.mean[b] * unit_depth[b];
  }
  return sig;
}

// ---------------------------------------------------------------------------
// Matched filter
// ---------------------------------------------------------------------------

struct FilterResult {
  ConcentrationMap map;    // negatives clamped to zero
  Grid2d<double> raw;      // unclamped retrievals for diagnostics
  double t_cinv_t = 0.0;   // whitened signature energy
};

/// Evaluate alpha_i = (L_i - mean)^T C^-1 t / (t^T C^-1 t) over the masked
/// pixels using precomputed statistics and signature. Unmasked pixels stay
/// zero. The degenerate case of an exactly constant population (zero
/// covariance, zero residuals) yields an all-zero map.
inline FilterResult apply_matched_filter(const HyperCube& cube,
                                         const MaskGrid& mask,
                                         const BackgroundStats& stats,
                                         const TargetSignature& signature,
                                         double pixel_size_m = 30.0,
                                         const std::string& label = "mask") {
  if (mask.height() != cube.height() || mask.width() != cube.width())
    throw ShapeError("apply_matched_filter: mask does not match cube");
  const int nb = cube.bands();
  if (int(signature.t.size()) != nb || stats.bands() != nb)
    throw ShapeError("apply_matched_filter: band count mismatch");

  FilterResult result;
  result.map.pixel_size_m = pixel_size_m;
  result.map.values = Grid2d<double>(cube.height(), cube.width(), 0.0);
  result.raw = Grid2d<double>(cube.height(), cube.width(), 0.0);

  std::vector<double> factor = stats.covariance;
  if (!detail::cholesky(factor, nb)) {
    bool all_zero = true;
    for (int r = 0; r < cube.height() && all_zero; ++r)
      for (int c = 0; c < cube.width() && all_zero; ++c)
        if (mask(r, c)) {
          const double* px = cube.radiance.pixel(r, c);
          for (int b = 0; b < nb; ++b)
            if (px[b] != stats.mean[std::size_t(b)]) {
              all_zero = false;
              break;
            }
        }
    if (all_zero) return result;  // constant background, zero enhancement
    throw NumericError("matched_filter: singular covariance for " + label);
  }
  const std::vector<double> w = detail::cholesky_solve(factor, nb, signature.t);
  double denom = 0.0;
  for (int b = 0; b < nb; ++b) denom += signature.t[std::size_t(b)] * w[std::size_t(b)];
  if (!(denom > 0.0))
    throw NumericError("matched_filter: degenerate signature for " + label);
  result.t_cinv_t = denom;

  for (int r = 0; r < cube.height(); ++r)
    for (int c = 0; c < cube.width(); ++c) {
      if (!mask(r, c)) continue;
      const double* px = cube.radiance.pixel(r, c);
      double num = 0.0;
      for (int b = 0; b < nb; ++b)
        num += (px[b] - stats.mean[std::size_t(b)]) * w[std::size_t(b)];
      const double alpha = num / denom;
      result.raw(r, c) = alpha;
      result.map.values(r, c) = std::max(alpha, 0.0);
    }
  return result;
}

/// Whole-mask matched filter: statistics and signature come from the mask's
/// own pixels. columnwise switches to per-column statistics for sensors with
/// pushbroom striping; simulated cubes have none, so it defaults off.
inline FilterResult matched_filter(const HyperCube& cube, const MaskGrid& mask,
                                   const std::vector<double>& unit_depth,
                                   double shrinkage = 0.05,
                                   bool columnwise = false,
                                   double pixel_size_m = 30.0,
                                   const std::string& label = "mask") {
  if (!columnwise) {
    const BackgroundStats stats = estimate_background(cube, mask, shrinkage);
    const TargetSignature sig = target_signature(stats, unit_depth);
    return apply_matched_filter(cube, mask, stats, sig, pixel_size_m, label);
  }
  FilterResult result;
  result.map.pixel_size_m = pixel_size_m;
  result.map.values = Grid2d<double>(cube.height(), cube.width(), 0.0);
  result.raw = Grid2d<double>(cube.height(), cube.width(), 0.0);
  for (int c = 0; c < cube.width(); ++c) {
    MaskGrid col_mask(cube.height(), cube.width(), 0);
    std::int64_t n = 0;
    for (int r = 0; r < cube.height(); ++r)
      if (mask(r, c)) {
        col_mask(r, c) = 1;
        ++n;
      }
    if (n < 2) continue;
    const BackgroundStats stats = estimate_background(cube, col_mask, shrinkage);
    const TargetSignature sig = target_signature(stats, unit_depth);
    const FilterResult col = apply_matched_filter(
        cube, col_mask, stats, sig, pixel_size_m,
        label + " column " + std::to_string(c));
    result.t_cinv_t = col.t_cinv_t;
    for (int r = 0; r < cube.height(); ++r)
      if (col_mask(r, c)) {
        result.raw(r, c) = col.raw(r, c);
        result.map.values(r, c) = col.map.values(r, c);
      }
  }
  return result;
}

// ---------------------------------------------------------------------------
// K-means background masking
// ---------------------------------------------------------------------------

/// Lloyd's algorithm over per-pixel log-preprocessed spectra with k-means++
/// seeding. Deterministic for a given seed; iteration stops after 100 rounds
/// or when no centroid moves more than 1e-6.
inline std::vector<MaskGrid> kmeans_mask(const HyperCube& cube, int k,
                                         std::uint64_t seed) {
  const std::size_t n_pixels = cube.radiance.pixels();
  if (k < 1) throw ConfigError("kmeans_mask: k must be at least 1");
  if (std::size_t(k) > n_pixels)
    throw ConfigError("kmeans_mask: more clusters than pixels");
  const int nb = cube.bands();

  if (k == 1) {
    std::vector<MaskGrid> masks;
    masks.emplace_back(cube.height(), cube.width(), 1);
    return masks;
  }

  const Cube3d<double> features = spectral::preprocess(cube);
  auto dist2 = [&](std::size_t pixel, const std::vector<double>& center) {
    const double* px = features.pixel(pixel);
    double s = 0.0;
    for (int b = 0; b < nb; ++b) {
      const double d = px[b] - center[std::size_t(b)];
      s += d * d;
    }
    return s;
  };

  // k-means++ seeding
  Rng rng(seed);
  std::vector<std::vector<double>> centers;
  centers.reserve(std::size_t(k));
  {
    const std::size_t first = std::size_t(rng.uniform_int(0, std::int64_t(n_pixels) - 1));
    centers.emplace_back(features.pixel(first), features.pixel(first) + nb);
    std::vector<double> d2(n_pixels);
    while (centers.size() < std::size_t(k)) {
      double total = 0.0;
      for (std::size_t p = 0; p < n_pixels; ++p) {
        double best = std::numeric_limits<double>::max();
        for (const auto& center : centers) best = std::min(best, dist2(p, center));
        d2[p] = best;
        total += best;
      }
      std::size_t pick = 0;
      if (total > 0.0) {
        const double target = rng.uniform() * total;
        double acc = 0.0;
        pick = n_pixels - 1;
        for (std::size_t p = 0; p < n_pixels; ++p) {
          acc += d2[p];
          if (acc >= target) {
            pick = p;
            break;
          }
        }
      } else {
        pick = std::size_t(rng.uniform_int(0, std::int64_t(n_pixels) - 1));
      }
      centers.emplace_back(features.pixel(pick), features.pixel(pick) + nb);
    }
  }

  std::vector<int> assign(n_pixels, 0);
  std::vector<std::vector<double>> sums(std::size_t(k), std::vector<double>(std::size_t(nb), 0.0));
  std::vector<std::int64_t> counts(std::size_t(k), 0);
  for (int iter = 0; iter < 100; ++iter) {
    for (std::size_t p = 0; p < n_pixels; ++p) {
      double best = std::numeric_limits<double>::max();
      int best_c = 0;
      for (int c = 0; c < k; ++c) {
        const double d = dist2(p, centers[std::size_t(c)]);
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      assign[p] = best_c;
    }
    for (auto& s : sums) std::fill(s.begin(), s.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t p = 0; p < n_pixels; ++p) {
      const double* px = features.pixel(p);
      auto& s = sums[std::size_t(assign[p])];
      for (int b = 0; b < nb; ++b) s[std::size_t(b)] += px[b];
      ++counts[std::size_t(assign[p])];
    }
    double max_shift = 0.0;
    for (int c = 0; c < k; ++c) {
      if (counts[std::size_t(c)] == 0) continue;  // empty cluster keeps its centroid
      double shift = 0.0;
      for (int b = 0; b < nb; ++b) {
        const double nv = sums[std::size_t(c)][std::size_t(b)] / double(counts[std::size_t(c)]);
        const double d = nv - centers[std::size_t(c)][std::size_t(b)];
        shift += d * d;
        centers[std::size_t(c)][std::size_t(b)] = nv;
      }
      max_shift = std::max(max_shift, std::sqrt(shift));
    }
    if (max_shift < 1e-6) break;
  }

  std::vector<MaskGrid> masks{std::size_t(k)};
  for (auto& m : masks) m = MaskGrid(cube.height(), cube.width(), 0);
  for (std::size_t p = 0; p < n_pixels; ++p) {
    const int r = int(p / std::size_t(cube.width()));
    const int c = int(p % std::size_t(cube.width()));
    masks[std::size_t(assign[p])](r, c) = 1;
  }
  return masks;
}

// ---------------------------------------------------------------------------
// Full inversion: masking + per-cluster matched filter
// ---------------------------------------------------------------------------

struct ClusterDiag {
  std::int64_t pixel_count = 0;
  double t_cinv_t = 0.0;
};

struct InvertResult {
  ConcentrationMap map;  // clamped, clusters summed (they are disjoint)
  Grid2d<double> raw;
  std::vector<ClusterDiag> clusters;
  std::vector<std::string> warnings;
  double shrinkage = 0.0;
};

/// K-means masking followed by a per-cluster matched filter. Clusters too
/// small to carry their own statistics (< B+1 pixels) are merged into the
/// nearest surviving cluster by mean spectrum, with a warning recorded.
inline InvertResult invert(const HyperCube& cube, int k,
                           const std::vector<double>& unit_depth,
                           double shrinkage = 0.05, std::uint64_t seed = 0,
                           double pixel_size_m = 30.0) {
  cube.validate();
  std::vector<MaskGrid> masks = kmeans_mask(cube, k, seed);
  const int nb = cube.bands();

  InvertResult result;
  result.shrinkage = shrinkage;

  // Merge undersized clusters into the spectrally nearest big one.
  auto mask_count = [](const MaskGrid& m) {
    std::int64_t n = 0;
    for (auto v : m) n += (v != 0);
    return n;
  };
  auto mask_mean = [&](const MaskGrid& m) {
    std::vector<double> mean(std::size_t(nb), 0.0);
    std::int64_t n = 0;
    for (int r = 0; r < cube.height(); ++r)
      for (int c = 0; c < cube.width(); ++c)
        if (m(r, c)) {
          const double* px = cube.radiance.pixel(r, c);
          for (int b = 0; b < nb; ++b) mean[std::size_t(b)] += px[b];
          ++n;
        }
    if (n > 0)
      for (double& v : mean) v /= double(n);
    return mean;
  };
  bool merged = true;
  while (merged && masks.size() > 1) {
    merged = false;
    for (std::size_t i = 0; i < masks.size(); ++i) {
      if (mask_count(masks[i]) >= std::int64_t(nb) + 1) continue;
      const auto small_mean = mask_mean(masks[i]);
      double best = std::numeric_limits<double>::max();
      std::size_t target = (i + 1) % masks.size();
      for (std::size_t j = 0; j < masks.size(); ++j) {
        if (j == i) continue;
        const auto mj = mask_mean(masks[j]);
        double d = 0.0;
        for (int b = 0; b < nb; ++b) {
          const double dd = mj[std::size_t(b)] - small_mean[std::size_t(b)];
          d += dd * dd;
        }
        if (d < best) {
          best = d;
          target = j;
        }
      }
      for (std::size_t p = 0; p < masks[i].size(); ++p)
        if (masks[i].data()[p]) masks[target].data()[p] = 1;
      result.warnings.push_back("cluster " + std::to_string(i) +
                                " smaller than B+1 pixels; merged");
      masks.erase(masks.begin() + std::ptrdiff_t(i));
      merged = true;
      break;
    }
  }

  result.map.pixel_size_m = pixel_size_m;
  result.map.values = Grid2d<double>(cube.height(), cube.width(), 0.0);
  result.raw = Grid2d<double>(cube.height(), cube.width(), 0.0);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const FilterResult part =
        matched_filter(cube, masks[i], unit_depth, shrinkage, false,
                       pixel_size_m, "cluster " + std::to_string(i));
    ClusterDiag diag;
    diag.pixel_count = mask_count(masks[i]);
    diag.t_cinv_t = part.t_cinv_t;
    result.clusters.push_back(diag);
    for (std::size_t p = 0; p < result.raw.size(); ++p) {
      result.raw.data()[p] += part.raw.data()[p];
      result.map.values.data()[p] += part.map.values.data()[p];
    }
  }
  return result;
}

}  // namespace plumekit::inversion
