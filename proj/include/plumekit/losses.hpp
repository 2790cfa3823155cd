#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "plumekit/core.hpp"

namespace plumekit::losses {

/// Huber-style kernel: 0.5 x^2 inside the unit knee, |x| - 0.5 outside.
inline double smooth_l1_scalar(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

inline double mse(const std::vector<double>& y,
                  const std::vector<double>& yhat) {
  if (y.size() != yhat.size() || y.empty())
    throw ShapeError("mse: vectors must be non-empty and equal length");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - yhat[i];
    s += d * d;
  }
  return s / double(y.size());
}

/// Mean of the smooth-L1 kernel over elementwise residuals.
inline double smooth_l1(const std::vector<double>& y,
                        const std::vector<double>& yhat) {
  if (y.size() != yhat.size() || y.empty())
    throw ShapeError("smooth_l1: vectors must be non-empty and equal length");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    s += smooth_l1_scalar(y[i] - yhat[i]);
  return s / double(y.size());
}

/// Classification loss over one-hot labels and predicted class probabilities,
/// averaged over samples. Probabilities are clipped to [1e-12, 1].
inline double cross_entropy(const std::vector<std::vector<double>>& y,
                            const std::vector<std::vector<double>>& yhat) {
  if (y.size() != yhat.size() || y.empty())
    throw ShapeError("cross_entropy: sample count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i].size() != yhat[i].size() || y[i].empty())
      throw ShapeError("cross_entropy: class count mismatch");
    double row_sum = 0.0;
    for (double p : yhat[i]) {
      if (!(p >= 0.0) || !std::isfinite(p))
        throw InputError("cross_entropy: invalid probability");
      row_sum += p;
    }
    if (std::abs(row_sum - 1.0) > 1e-6)
      throw InputError("cross_entropy: probability row does not sum to 1");
    for (std::size_t c = 0; c < y[i].size(); ++c) {
      const double p = std::clamp(yhat[i][c], 1e-12, 1.0);
      total -= y[i][c] * std::log(p);
    }
  }
  return total / double(y.size());
}

/// Box parameterized as (center x, center y, width, height).
struct Box {
  double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;
};

/// Sum (not mean) of smooth-L1 over every box and every one of its four
/// parameters.
inline double box_loss(const std::vector<Box>& pred,
                       const std::vector<Box>& truth) {
  if (pred.size() != truth.size())
    throw ShapeError("box_loss: box count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    s += smooth_l1_scalar(pred[i].cx - truth[i].cx);
    s += smooth_l1_scalar(pred[i].cy - truth[i].cy);
    s += smooth_l1_scalar(pred[i].w - truth[i].w);
    s += smooth_l1_scalar(pred[i].h - truth[i].h);
  }
  return s;
}

namespace detail {
struct MaskStats {
  double centroid_r = 0.0;
  double centroid_c = 0.0;
  std::int64_t area = 0;
};
inline MaskStats mask_stats(const PlumeInstance& m) {
  MaskStats s;
  for (int r = 0; r < m.mask.height(); ++r)
    for (int c = 0; c < m.mask.width(); ++c)
      if (m.mask(r, c)) {
        s.centroid_r += r + m.bbox.row_min;
        s.centroid_c += c + m.bbox.col_min;
        ++s.area;
      }
  if (s.area == 0) throw InputError("mask_loss: empty mask");
  s.centroid_r /= double(s.area);
  s.centroid_c /= double(s.area);
  return s;
}
}  // namespace detail

/// Mask loss as printed: -IoU(b, b^) + rho^2/c^2, rho the distance between
/// mask centroids. The sign convention makes the perfect-match value -1; set
/// one_minus_iou for the conventional 1 - IoU form instead.
inline double mask_loss(const PlumeInstance& truth, const PlumeInstance& pred,
                        double c = 10.0, bool one_minus_iou = false) {
  const auto st = detail::mask_stats(truth);
  const auto sp = detail::mask_stats(pred);
  const double iou = mask_iou(truth, pred);
  const double dr = st.centroid_r - sp.centroid_r;
  const double dc = st.centroid_c - sp.centroid_c;
  const double rho2 = dr * dr + dc * dc;
  const double base = one_minus_iou ? 1.0 - iou : -iou;
  return base + rho2 / (c * c);
}

/// Total detector loss: classification + box + mask.
inline double maskrcnn_loss(double cls_term, double box_term,
                            double mask_term) {
  if (!std::isfinite(cls_term) || !std::isfinite(box_term) ||
      !std::isfinite(mask_term))
    throw InputError("maskrcnn_loss: non-finite component");
  return cls_term + box_term + mask_term;
}

// ---------------------------------------------------------------------------
// Emission-rate loss over matched detections
// ---------------------------------------------------------------------------

enum class MatchKind { TP, FP, FN };

/// One prediction/truth pairing. TP pairs carry both rates; FP carries only
/// the prediction; FN only the truth. pred_pixel_sum is the predicted
/// instance's concentration sum, used by the small-patch exclusion rule.
struct DetectionPair {
  MatchKind kind = MatchKind::TP;
  std::optional<double> pred_rate_kgph;
  std::optional<double> true_rate_kgph;
  double pred_pixel_sum = 0.0;

  void validate() const {
    switch (kind) {
      case MatchKind::TP:
        if (!pred_rate_kgph || !true_rate_kgph)
          throw InputError("DetectionPair: TP needs both rates");
        break;
      case MatchKind::FP:
        if (!pred_rate_kgph || true_rate_kgph)
          throw InputError("DetectionPair: FP carries only a prediction");
        break;
      case MatchKind::FN:
        if (pred_rate_kgph || !true_rate_kgph)
          throw InputError("DetectionPair: FN carries only a truth");
        break;
    }
  }
};

struct ErLossResult {
  double value = 0.0;
  int retained = 0;  // zero means the warning case: every pair was excluded
};

/// Rates are divided by this before the smooth-L1 kernel so the unit knee
/// sits at a meaningful scale.
inline constexpr double kRateNormalizeKgph = 1000.0;

/// Emission-rate loss: smooth-L1 of (truth, prediction) for TPs, of
/// (0, prediction) for FPs, of (truth, 0) for misses; predictions whose
/// pixel sum falls below ime_min are excluded. Mean over retained pairs.
inline ErLossResult er_loss_detail(const std::vector<DetectionPair>& pairs,
                                   double ime_min = 300.0,
                                   double normalize = kRateNormalizeKgph) {
  ErLossResult out;
  double s = 0.0;
  for (const DetectionPair& p : pairs) {
    p.validate();
    if (p.kind != MatchKind::FN && p.pred_pixel_sum < ime_min) continue;
    double x = 0.0;
    switch (p.kind) {
      case MatchKind::TP:
        x = (*p.true_rate_kgph - *p.pred_rate_kgph) / normalize;
        break;
      case MatchKind::FP:
        x = (0.0 - *p.pred_rate_kgph) / normalize;
        break;
      case MatchKind::FN:
        x = (*p.true_rate_kgph - 0.0) / normalize;
        break;
    }
    s += smooth_l1_scalar(x);
    ++out.retained;
  }
  out.value = out.retained > 0 ? s / double(out.retained) : 0.0;
  return out;
}

inline double er_loss(const std::vector<DetectionPair>& pairs,
                      double ime_min = 300.0,
                      double normalize = kRateNormalizeKgph) {
  return er_loss_detail(pairs, ime_min, normalize).value;
}

/// Greedy IoU matching (threshold 0.5, descending IoU) producing the
/// TP/FP/FN pairs er_loss consumes. pixel_sums accompany predictions.
inline std::vector<DetectionPair> match_detections(
    const std::vector<PlumeInstance>& preds,
    const std::vector<double>& pred_rates,
    const std::vector<double>& pred_pixel_sums,
    const std::vector<PlumeInstance>& truths,
    const std::vector<double>& true_rates, double iou_threshold = 0.5) {
  if (preds.size() != pred_rates.size() ||
      preds.size() != pred_pixel_sums.size() ||
      truths.size() != true_rates.size())
    throw ShapeError("match_detections: parallel array size mismatch");
  struct Cand {
    double iou;
    std::size_t p, t;
  };
  std::vector<Cand> cands;
  for (std::size_t p = 0; p < preds.size(); ++p)
    for (std::size_t t = 0; t < truths.size(); ++t) {
      const double v = mask_iou(preds[p], truths[t]);
      if (v >= iou_threshold) cands.push_back({v, p, t});
    }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Cand& a, const Cand& b) { return a.iou > b.iou; });
  std::vector<bool> p_used(preds.size(), false), t_used(truths.size(), false);
  std::vector<DetectionPair> pairs;
  for (const Cand& c : cands) {
    if (p_used[c.p] || t_used[c.t]) continue;
    p_used[c.p] = true;
    t_used[c.t] = true;
    pairs.push_back({MatchKind::TP, pred_rates[c.p], true_rates[c.t],
                     pred_pixel_sums[c.p]});
  }
  for (std::size_t p = 0; p < preds.size(); ++p)
    if (!p_used[p])
      pairs.push_back(
          {MatchKind::FP, pred_rates[p], std::nullopt, pred_pixel_sums[p]});
  for (std::size_t t = 0; t < truths.size(); ++t)
    if (!t_used[t])
      pairs.push_back({MatchKind::FN, std::nullopt, true_rates[t], 0.0});
  return pairs;
}

// ---------------------------------------------------------------------------
// Multi-task combinations
// ---------------------------------------------------------------------------

inline double mtl01_loss(double maskrcnn, double er, double lambda = 0.1) {
  if (!std::isfinite(maskrcnn) || !std::isfinite(er) || !std::isfinite(lambda))
    throw InputError("mtl01_loss: non-finite input");
  return maskrcnn + lambda * er;
}

inline double mtl02_loss(double unet, double maskrcnn, double w1, double w2) {
  if (w1 < 0.0 || w2 < 0.0)
    throw InputError("mtl02_loss: weights must be non-negative");
  return w1 * unet + w2 * maskrcnn;
}

/// Per-task sequences of epoch-averaged losses, oldest first.
struct LossHistory {
  std::vector<std::vector<double>> tasks;
};

/// Dynamic weighted average: w_k = L_k(t-1)/L_k(t-2), lambda_k = K *
/// softmax(w/T)_k. Large T drives every weight to 1.
inline std::vector<double> dwa_weights(const LossHistory& history,
                                       double temperature) {
  if (!(temperature > 0.0))
    throw InputError("dwa_weights: temperature must be positive");
  const std::size_t k = history.tasks.size();
  if (k == 0) throw InputError("dwa_weights: no tasks");
  std::vector<double> w(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& seq = history.tasks[i];
    if (seq.size() < 2)
      throw InputError("dwa_weights: need at least two epochs per task");
    const double prev = seq[seq.size() - 1];
    const double prev2 = seq[seq.size() - 2];
    if (!(prev > 0.0) || !(prev2 > 0.0))
      throw NumericError("dwa_weights: historical losses must be positive");
    w[i] = prev / prev2;
  }
  const double wmax = *std::max_element(w.begin(), w.end());
  double denom = 0.0;
  std::vector<double> e(k);
  for (std::size_t i = 0; i < k; ++i) {
    e[i] = std::exp((w[i] - wmax) / temperature);
    denom += e[i];
  }
  std::vector<double> lambda(k);
  for (std::size_t i = 0; i < k; ++i) lambda[i] = double(k) * e[i] / denom;
  return lambda;
}

}  // namespace plumekit::losses
