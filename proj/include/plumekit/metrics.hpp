#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "plumekit/core.hpp"

namespace plumekit::metrics {

inline double rmse(const std::vector<double>& y,
                   const std::vector<double>& yhat) {
  if (y.size() != yhat.size() || y.empty())
    throw ShapeError("rmse: vectors must be non-empty and equal length");
  double ss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - yhat[i];
    ss += d * d;
  }
  return std::sqrt(ss / double(y.size()));
}

inline double mae(const std::vector<double>& y,
                  const std::vector<double>& yhat) {
  if (y.size() != yhat.size() || y.empty())
    throw ShapeError("mae: vectors must be non-empty and equal length");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - yhat[i]);
  return s / double(y.size());
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares of y on x. R^2 = 1 - SSres/SStot; constant y
/// (SStot == 0) returns R^2 = 0 by convention.
inline LinearFit linear_fit(const std::vector<double>& x,
                            const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw InputError("linear_fit: need at least two (x, y) points");
  const double n = double(x.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw InputError("linear_fit: all x values identical");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (syy > 0.0) {
    double ssres = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = y[i] - (fit.intercept + fit.slope * x[i]);
      ssres += e * e;
    }
    fit.r_squared = 1.0 - ssres / syy;
  } else {
    fit.r_squared = 0.0;
  }
  return fit;
}

inline double pearson_r(const std::vector<double>& x,
                        const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw InputError("pearson_r: need at least two points");
  const double n = double(x.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0))
    throw InputError("pearson_r: zero variance input");
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Detection metrics
// ---------------------------------------------------------------------------

/// One scored detection and the IoU against the truth it claimed when the
/// table was built (0 when no truth was left to claim).
struct Detection {
  double score = 0.0;
  double iou = 0.0;
};

/// Detections sorted by descending score, each truth claimed at most once.
struct MatchTable {
  std::vector<Detection> detections;
  int truth_count = 0;
};

/// Greedy table construction: walk detections by descending score; each
/// claims the unclaimed truth with the highest mask IoU. The stored IoU is
/// then compared against any threshold, so one table serves every AP column.
inline MatchTable build_match_table(
    const std::vector<PlumeInstance>& predictions,
    const std::vector<double>& scores,
    const std::vector<PlumeInstance>& truths) {
  if (predictions.size() != scores.size())
    throw ShapeError("build_match_table: scores size mismatch");
  std::vector<std::size_t> order(predictions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  std::vector<bool> claimed(truths.size(), false);
  MatchTable table;
  table.truth_count = int(truths.size());
  for (std::size_t idx : order) {
    double best = 0.0;
    int best_t = -1;
    for (std::size_t t = 0; t < truths.size(); ++t) {
      if (claimed[t]) continue;
      const double v = mask_iou(predictions[idx], truths[t]);
      if (v > best) {
        best = v;
        best_t = int(t);
      }
    }
    if (best_t >= 0 && best > 0.0) claimed[std::size_t(best_t)] = true;
    table.detections.push_back({scores[idx], best});
  }
  return table;
}

struct PrPoint {
  double precision = 0.0;
  double recall = 0.0;
};

/// Sweep the score threshold over the table: after each detection, a point
/// (precision, recall) with TP = detections whose stored IoU >= threshold.
inline std::vector<PrPoint> precision_recall(const MatchTable& table,
                                             double iou_threshold) {
  if (table.truth_count == 0 && !table.detections.empty())
    throw InputError("precision_recall: no truths; recall undefined");
  std::vector<PrPoint> curve;
  int tp = 0, fp = 0;
  for (const Detection& d : table.detections) {
    if (d.iou >= iou_threshold)
      ++tp;
    else
      ++fp;
    PrPoint p;
    p.precision = double(tp) / double(tp + fp);
    p.recall = table.truth_count > 0 ? double(tp) / double(table.truth_count)
                                     : 0.0;
    curve.push_back(p);
  }
  return curve;
}

/// Discrete AP with max-to-the-right interpolated precision:
/// AP = sum (R_{i+1} - R_i) * max precision at recall >= R_{i+1}.
inline double average_precision(const std::vector<PrPoint>& curve) {
  if (curve.empty()) return 0.0;
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double r = curve[i].recall;
    if (r <= prev_recall) continue;
    double p_interp = 0.0;
    for (std::size_t j = i; j < curve.size(); ++j)
      if (curve[j].recall >= r) p_interp = std::max(p_interp, curve[j].precision);
    ap += (r - prev_recall) * p_interp;
    prev_recall = r;
  }
  return ap;
}

inline double average_precision(const MatchTable& table, double iou_threshold) {
  return average_precision(precision_recall(table, iou_threshold));
}

struct ApSuite {
  double ap50 = 0.0;
  double ap75 = 0.0;
  double ap95 = 0.0;
  double ap50_95 = 0.0;  // mean over thresholds 0.50:0.05:0.95
};

inline ApSuite ap_suite(const MatchTable& table) {
  ApSuite suite;
  suite.ap50 = average_precision(table, 0.50);
  suite.ap75 = average_precision(table, 0.75);
  suite.ap95 = average_precision(table, 0.95);
  double acc = 0.0;
  for (int i = 0; i < 10; ++i) acc += average_precision(table, 0.50 + 0.05 * i);
  suite.ap50_95 = acc / 10.0;
  return suite;
}

/// Pool several per-image tables into one sweep (scores are comparable
/// across images by contract).
inline MatchTable merge_tables(const std::vector<MatchTable>& tables) {
  MatchTable merged;
  for (const MatchTable& t : tables) {
    merged.truth_count += t.truth_count;
    merged.detections.insert(merged.detections.end(), t.detections.begin(),
                             t.detections.end());
  }
  std::stable_sort(merged.detections.begin(), merged.detections.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.score > b.score;
                   });
  return merged;
}

}  // namespace plumekit::metrics
