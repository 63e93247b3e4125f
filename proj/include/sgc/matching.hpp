#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sgc/core.hpp"
#include "sgc/error.hpp"

namespace sgc::eval {

struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  void validate() const {
    if (!(std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2)))
      throw Error(Errc::InvalidBox, "box coordinates must be finite");
    if (!(x1 < x2 && y1 < y2))
      throw Error(Errc::InvalidBox, "box must satisfy x1 < x2 and y1 < y2");
  }

  double area() const { return (x2 - x1) * (y2 - y1); }
};

struct HoiPrediction {
  BBox human_box;
  BBox object_box;
  Vec class_scores;        // one entry per category, aligned with the category list
  double box_score = 1.0;  // in [0, 1]
};

struct GroundTruthInstance {
  BBox human_box;
  BBox object_box;
  int category_id = 0;  // index into the category list
};

struct MatchCostWeights {
  double lambda_b = 5.0;
  double lambda_iou = 5.0;
  double lambda_cls = 2.0;

  void validate() const {
    if (lambda_b < 0 || lambda_iou < 0 || lambda_cls < 0)
      throw Error(Errc::ParseError, "cost weights must be non-negative");
    if (lambda_b == 0 && lambda_iou == 0 && lambda_cls == 0)
      throw Error(Errc::ParseError, "cost weights must not all be zero");
  }
};

inline double iou(const BBox& a, const BBox& b) {
  a.validate();
  b.validate();
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

/// 1 - GIoU, in [0, 2]. GIoU subtracts the fraction of the enclosing box
/// not covered by the union.
inline double giou_loss(const BBox& a, const BBox& b) {
  a.validate();
  b.validate();
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  const double ew = std::max(a.x2, b.x2) - std::min(a.x1, b.x1);
  const double eh = std::max(a.y2, b.y2) - std::min(a.y1, b.y1);
  const double enclose = ew * eh;
  const double giou = inter / uni - (enclose - uni) / enclose;
  return 1.0 - giou;
}

struct ImageSize {
  double width = 1.0;
  double height = 1.0;
};

namespace detail {

// (cx, cy, w, h) scaled into [0, 1] by the image size
inline std::array<double, 4> cxcywh_norm(const BBox& b, const ImageSize& img) {
  return {(b.x1 + b.x2) * 0.5 / img.width, (b.y1 + b.y2) * 0.5 / img.height,
          (b.x2 - b.x1) / img.width, (b.y2 - b.y1) / img.height};
}

inline double log_softmax_at(const Vec& logits, std::size_t idx) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  return logits[idx] - mx - std::log(sum);
}

}  // namespace detail

struct MatchCostTerms {
  double box = 0.0;  // L1 over normalized center-size coords, human + object
  double iou = 0.0;  // GIoU losses, human + object
  double cls = 0.0;  // negative log-softmax at the target category
  double total = 0.0;
};

/// Composite matching cost: weighted box regression, overlap and
/// classification terms between one prediction and one ground truth.
inline MatchCostTerms match_cost_terms(const HoiPrediction& pred,
                                       const GroundTruthInstance& gt,
                                       const MatchCostWeights& w,
                                       const ImageSize& img = {}) {
  w.validate();
  if (gt.category_id < 0 ||
      static_cast<std::size_t>(gt.category_id) >= pred.class_scores.size())
    throw Error(Errc::UnknownCategory,
                "category " + std::to_string(gt.category_id) + " outside score vector");
  MatchCostTerms t;
  for (const auto& [pb, gb] : {std::pair{&pred.human_box, &gt.human_box},
                               std::pair{&pred.object_box, &gt.object_box}}) {
    const auto p = detail::cxcywh_norm(*pb, img);
    const auto g = detail::cxcywh_norm(*gb, img);
    for (int i = 0; i < 4; ++i) t.box += std::abs(p[i] - g[i]);
    t.iou += giou_loss(*pb, *gb);
  }
  t.cls = -detail::log_softmax_at(pred.class_scores,
                                  static_cast<std::size_t>(gt.category_id));
  t.total = w.lambda_b * t.box + w.lambda_iou * t.iou + w.lambda_cls * t.cls;
  return t;
}

inline double match_cost(const HoiPrediction& pred, const GroundTruthInstance& gt,
                         const MatchCostWeights& w, const ImageSize& img = {}) {
  return match_cost_terms(pred, gt, w, img).total;
}

// ---------------------------------------------------------------------------
// Hungarian assignment
// ---------------------------------------------------------------------------

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col), row ascending
  double total_cost = 0.0;
};

/// Optimal one-to-one assignment minimizing total cost. Rectangular
/// matrices are padded with zero-cost dummies; min(rows, cols) real pairs
/// are returned.
inline Assignment hungarian(const Mat& costs) {
  if (costs.rows == 0 || costs.cols == 0)
    throw Error(Errc::DimMismatch, "empty cost matrix");
  if (!all_finite(costs))
    throw Error(Errc::NonFiniteCost, "cost matrix contains NaN/Inf");
  const int n = static_cast<int>(std::max(costs.rows, costs.cols));
  auto at = [&](int r, int c) -> double {
    if (r < static_cast<int>(costs.rows) && c < static_cast<int>(costs.cols))
      return costs(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
    return 0.0;
  };

  // shortest augmenting path formulation with potentials, 1-indexed
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<double> v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<int> p(static_cast<std::size_t>(n + 1), 0);
  std::vector<int> way(static_cast<std::size_t>(n + 1), 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(n + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = at(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0);
  }

  Assignment a;
  for (int j = 1; j <= n; ++j) {
    const int i = p[static_cast<std::size_t>(j)];
    if (i >= 1 && i <= static_cast<int>(costs.rows) && j <= static_cast<int>(costs.cols)) {
      a.pairs.emplace_back(i - 1, j - 1);
      a.total_cost += costs(static_cast<std::size_t>(i - 1), static_cast<std::size_t>(j - 1));
    }
  }
  std::sort(a.pairs.begin(), a.pairs.end());
  return a;
}

/// Hungarian matching of predictions to ground truth under the composite
/// cost.
inline Assignment assign_predictions(const std::vector<HoiPrediction>& preds,
                                     const std::vector<GroundTruthInstance>& gts,
                                     const MatchCostWeights& w,
                                     const ImageSize& img = {}) {
  if (preds.empty() || gts.empty())
    throw Error(Errc::EmptyInput, "need at least one prediction and one ground truth");
  Mat costs(preds.size(), gts.size());
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (std::size_t j = 0; j < gts.size(); ++j)
      costs(i, j) = match_cost(preds[i], gts[j], w, img);
  return hungarian(costs);
}

/// Final detection confidence, discounted by the box score raised to
/// gamma to suppress overconfident boxes.
inline double inference_score(double s_hat, double c_hat, double gamma) {
  if (!(gamma > 1.0)) throw Error(Errc::BadGamma, "gamma must be > 1");
  return s_hat * std::pow(c_hat, gamma);
}

// ---------------------------------------------------------------------------
// mAP evaluation
// ---------------------------------------------------------------------------

struct ImagePredictions {
  std::int64_t image_id = 0;
  std::vector<HoiPrediction> preds;
};

struct ImageGroundTruth {
  std::int64_t image_id = 0;
  std::vector<GroundTruthInstance> instances;
};

struct EvalSettings {
  double iou_thresh = 0.5;
  double gamma = 2.0;
  bool eleven_point = false;  // 11-point interpolation instead of all-points
};

struct EvalReport {
  std::map<int, double> per_category_ap;  // keyed by category index
  double map = 0.0;
  std::size_t num_images = 0;
  std::vector<int> skipped_categories;  // no ground truth; excluded from the mean
  EvalSettings settings;
};

namespace detail {

struct Detection {
  std::int64_t image_id;
  int category;
  double score;
  const HoiPrediction* pred;
  std::size_t input_index;
};

inline double average_precision(const std::vector<char>& is_tp, std::size_t num_gt,
                                bool eleven_point) {
  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  precision.reserve(is_tp.size());
  recall.reserve(is_tp.size());
  for (char t : is_tp) {
    t ? ++tp : ++fp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
  }
  if (eleven_point) {
    double ap = 0.0;
    for (int i = 0; i <= 10; ++i) {
      const double level = i / 10.0;
      double best = 0.0;
      for (std::size_t j = 0; j < recall.size(); ++j)
        if (recall[j] >= level) best = std::max(best, precision[j]);
      ap += best / 11.0;
    }
    return ap;
  }
  // all-points: integrate the precision envelope over recall
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t j = 0; j < recall.size(); ++j) {
    if (!is_tp[j]) continue;
    double envelope = precision[j];
    for (std::size_t m = j; m < precision.size(); ++m)
      envelope = std::max(envelope, precision[m]);
    ap += (recall[j] - prev_recall) * envelope;
    prev_recall = recall[j];
  }
  return ap;
}

}  // namespace detail

/// Per-category average precision and its mean. A detection is a true
/// positive only when both the human and the object box clear the IoU
/// threshold against a not-yet-matched ground truth of its category.
inline EvalReport evaluate_map(const std::vector<ImagePredictions>& preds,
                               const std::vector<ImageGroundTruth>& gts,
                               std::size_t num_categories,
                               const EvalSettings& settings = {}) {
  if (!(settings.gamma > 1.0)) throw Error(Errc::BadGamma, "gamma must be > 1");
  if (num_categories == 0) throw Error(Errc::EmptyInput, "no categories");

  // flatten predictions; a prediction detects its argmax category
  std::vector<detail::Detection> dets;
  std::size_t index = 0;
  for (const ImagePredictions& ip : preds) {
    for (const HoiPrediction& p : ip.preds) {
      if (p.class_scores.size() != num_categories)
        throw Error(Errc::DimMismatch, "prediction score vector length mismatch");
      if (!all_finite(p.class_scores) || !std::isfinite(p.box_score))
        throw Error(Errc::NonFiniteValue, "prediction scores contain NaN/Inf");
      p.human_box.validate();
      p.object_box.validate();
      std::size_t best = 0;
      for (std::size_t c = 1; c < p.class_scores.size(); ++c)
        if (p.class_scores[c] > p.class_scores[best]) best = c;
      const double final_score =
          inference_score(p.class_scores[best], p.box_score, settings.gamma);
      dets.push_back({ip.image_id, static_cast<int>(best), final_score, &p, index++});
    }
  }

  // ground truth, bucketed per (image, category)
  struct GtRef {
    const GroundTruthInstance* inst;
    bool matched = false;
  };
  std::map<std::pair<std::int64_t, int>, std::vector<GtRef>> gt_buckets;
  std::vector<std::size_t> gt_count(num_categories, 0);
  for (const ImageGroundTruth& ig : gts) {
    for (const GroundTruthInstance& g : ig.instances) {
      if (g.category_id < 0 || static_cast<std::size_t>(g.category_id) >= num_categories)
        throw Error(Errc::UnknownCategory,
                    "ground-truth category " + std::to_string(g.category_id));
      g.human_box.validate();
      g.object_box.validate();
      gt_buckets[{ig.image_id, g.category_id}].push_back({&g});
      ++gt_count[static_cast<std::size_t>(g.category_id)];
    }
  }

  EvalReport report;
  report.settings = settings;
  report.num_images = gts.size();

  double ap_sum = 0.0;
  std::size_t evaluated = 0;
  for (std::size_t cat = 0; cat < num_categories; ++cat) {
    if (gt_count[cat] == 0) {
      report.skipped_categories.push_back(static_cast<int>(cat));
      continue;  // no positives to recall; recorded, not an error
    }
    std::vector<detail::Detection> cat_dets;
    for (const auto& d : dets)
      if (d.category == static_cast<int>(cat)) cat_dets.push_back(d);
    std::sort(cat_dets.begin(), cat_dets.end(),
              [](const detail::Detection& a, const detail::Detection& b) {
                if (a.score != b.score) return a.score > b.score;
                return a.input_index < b.input_index;
              });

    // reset matches for this category
    for (auto& [key, bucket] : gt_buckets)
      if (key.second == static_cast<int>(cat))
        for (GtRef& r : bucket) r.matched = false;

    std::vector<char> is_tp;
    is_tp.reserve(cat_dets.size());
    for (const auto& d : cat_dets) {
      auto it = gt_buckets.find({d.image_id, d.category});
      int best = -1;
      double best_overlap = -1.0;
      if (it != gt_buckets.end()) {
        for (std::size_t g = 0; g < it->second.size(); ++g) {
          GtRef& ref = it->second[g];
          if (ref.matched) continue;
          const double hi = iou(d.pred->human_box, ref.inst->human_box);
          const double oi = iou(d.pred->object_box, ref.inst->object_box);
          if (hi > settings.iou_thresh && oi > settings.iou_thresh) {
            const double overlap = std::min(hi, oi);
            if (overlap > best_overlap) {
              best_overlap = overlap;
              best = static_cast<int>(g);
            }
          }
        }
      }
      if (best >= 0) {
        it->second[static_cast<std::size_t>(best)].matched = true;
        is_tp.push_back(1);
      } else {
        is_tp.push_back(0);
      }
    }

    const double ap = detail::average_precision(is_tp, gt_count[cat], settings.eleven_point);
    report.per_category_ap[static_cast<int>(cat)] = ap;
    ap_sum += ap;
    ++evaluated;
  }
  report.map = evaluated ? ap_sum / static_cast<double>(evaluated) : 0.0;
  return report;
}

}  // namespace sgc::eval
