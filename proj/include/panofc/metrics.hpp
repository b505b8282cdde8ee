#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "panofc/panoptic.hpp"

namespace panofc {

// |a∩b| / |a∪b| over binary masks; 0 when both are empty.
inline double mask_iou(const Mask& a, const Mask& b) {
  if (!a.same_size(b))
    throw DimError(str("iou: mask sizes ", a.h(), "x", a.w(), " vs ", b.h(), "x", b.w()));
  long long inter = 0, uni = 0;
  for (size_t i = 0; i < a.data().size(); ++i) {
    bool av = a.data()[i] != 0, bv = b.data()[i] != 0;
    inter += (av && bv) ? 1 : 0;
    uni += (av || bv) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Per-class segment matching between two panoptic maps.  A segment is
// the full pixel set of one (class, instance) pair; stuff classes form
// one segment per class (instance 0).  Matches require the same class
// and IoU strictly above 0.5, which makes the matching unique.
struct MatchResult {
  struct ClassMatch {
    std::vector<std::pair<int32_t, int32_t>> tp;  // (pred segment, gt segment)
    std::vector<double> tp_iou;
    std::vector<int32_t> fp;  // unmatched predicted segments
    std::vector<int32_t> fn;  // unmatched ground-truth segments
  };
  std::map<int, ClassMatch> per_class;

  // Accumulates another frame's matches (counts and IoUs concatenate).
  void merge(const MatchResult& other) {
    for (const auto& [cls, m] : other.per_class) {
      ClassMatch& mine = per_class[cls];
      mine.tp.insert(mine.tp.end(), m.tp.begin(), m.tp.end());
      mine.tp_iou.insert(mine.tp_iou.end(), m.tp_iou.begin(), m.tp_iou.end());
      mine.fp.insert(mine.fp.end(), m.fp.begin(), m.fp.end());
      mine.fn.insert(mine.fn.end(), m.fn.begin(), m.fn.end());
    }
  }
};

inline MatchResult panoptic_match(const PanopticMap& pred, const PanopticMap& gt) {
  if (!pred.cls.same_size(gt.cls))
    throw DimError(str("panoptic_match: sizes ", pred.h(), "x", pred.w(), " vs ", gt.h(),
                       "x", gt.w()));
  using Key = std::pair<int16_t, int32_t>;  // (class, instance)
  std::map<Key, long long> pred_area, gt_area;
  std::map<std::pair<Key, Key>, long long> inter;
  const long long n = pred.cls.pixels();
  for (long long i = 0; i < n; ++i) {
    Key pk{pred.cls.data()[static_cast<size_t>(i)], pred.inst.data()[static_cast<size_t>(i)]};
    Key gk{gt.cls.data()[static_cast<size_t>(i)], gt.inst.data()[static_cast<size_t>(i)]};
    if (pk.first != kUnknownClass) ++pred_area[pk];
    if (gk.first != kUnknownClass) ++gt_area[gk];
    if (pk.first != kUnknownClass && gk.first != kUnknownClass) ++inter[{pk, gk}];
  }
  MatchResult out;
  std::map<Key, bool> pred_matched, gt_matched;
  for (const auto& [keys, i] : inter) {
    const auto& [pk, gk] = keys;
    if (pk.first != gk.first) continue;  // class must agree
    double iou = static_cast<double>(i) /
                 static_cast<double>(pred_area[pk] + gt_area[gk] - i);
    if (iou > 0.5) {
      auto& m = out.per_class[pk.first];
      m.tp.emplace_back(pk.second, gk.second);
      m.tp_iou.push_back(iou);
      pred_matched[pk] = true;
      gt_matched[gk] = true;
    }
  }
  for (const auto& [pk, area] : pred_area)
    if (!pred_matched.count(pk)) out.per_class[pk.first].fp.push_back(pk.second);
  for (const auto& [gk, area] : gt_area)
    if (!gt_matched.count(gk)) out.per_class[gk.first].fn.push_back(gk.second);
  return out;
}

struct PanopticScore {
  struct ClassScore {
    double pq = 0.0, sq = 0.0, rq = 0.0;
    long long tp = 0, fp = 0, fn = 0;
  };
  std::map<int, ClassScore> per_class;
  // Averages over classes that have any segment; n_* counts the classes
  // entering each average (0 means the average is undefined).
  double pq_all = 0.0, sq_all = 0.0, rq_all = 0.0;
  double pq_things = 0.0, sq_things = 0.0, rq_things = 0.0;
  double pq_stuff = 0.0, sq_stuff = 0.0, rq_stuff = 0.0;
  int n_all = 0, n_things = 0, n_stuff = 0;
};

// Classes >= c_stuff are thing classes; classes with no segments on
// either side never appear and are skipped from all averages.
inline PanopticScore panoptic_quality(const MatchResult& match, int c_stuff) {
  PanopticScore out;
  for (const auto& [cls, m] : match.per_class) {
    PanopticScore::ClassScore s;
    s.tp = static_cast<long long>(m.tp.size());
    s.fp = static_cast<long long>(m.fp.size());
    s.fn = static_cast<long long>(m.fn.size());
    if (s.tp + s.fp + s.fn == 0) continue;
    double iou_sum = 0.0;
    for (double v : m.tp_iou) iou_sum += v;
    s.sq = s.tp > 0 ? iou_sum / static_cast<double>(s.tp) : 0.0;
    double den = static_cast<double>(s.tp) + 0.5 * s.fp + 0.5 * s.fn;
    s.rq = den > 0.0 ? static_cast<double>(s.tp) / den : 0.0;
    s.pq = s.sq * s.rq;
    out.per_class[cls] = s;
    out.pq_all += s.pq;
    out.sq_all += s.sq;
    out.rq_all += s.rq;
    ++out.n_all;
    if (cls >= c_stuff) {
      out.pq_things += s.pq;
      out.sq_things += s.sq;
      out.rq_things += s.rq;
      ++out.n_things;
    } else {
      out.pq_stuff += s.pq;
      out.sq_stuff += s.sq;
      out.rq_stuff += s.rq;
      ++out.n_stuff;
    }
  }
  auto avg = [](double& acc, int n) { acc = n > 0 ? acc / n : 0.0; };
  avg(out.pq_all, out.n_all);
  avg(out.sq_all, out.n_all);
  avg(out.rq_all, out.n_all);
  avg(out.pq_things, out.n_things);
  avg(out.sq_things, out.n_things);
  avg(out.rq_things, out.n_things);
  avg(out.pq_stuff, out.n_stuff);
  avg(out.sq_stuff, out.n_stuff);
  avg(out.rq_stuff, out.n_stuff);
  return out;
}

// Accumulates pixelwise per-class intersections/unions across frames.
class MiouAccumulator {
 public:
  void add(const SemanticMap& pred, const SemanticMap& gt) {
    if (!pred.same_size(gt))
      throw DimError(str("miou: sizes ", pred.h(), "x", pred.w(), " vs ", gt.h(), "x",
                         gt.w()));
    for (size_t i = 0; i < pred.data().size(); ++i) {
      int16_t p = pred.data()[i], g = gt.data()[i];
      if (p == g && p != kUnknownClass) ++inter_[p];
      if (p != kUnknownClass) ++area_pred_[p];
      if (g != kUnknownClass) ++area_gt_[g];
    }
  }

  // Mean IoU over the listed classes that are present in pred or GT;
  // absent when no listed class is present at all.
  std::optional<double> mean_iou(const std::vector<int>& classes) const {
    double acc = 0.0;
    int n = 0;
    for (int c : classes) {
      long long inter = value(inter_, c);
      long long uni = value(area_pred_, c) + value(area_gt_, c) - inter;
      if (uni <= 0) continue;
      acc += static_cast<double>(inter) / static_cast<double>(uni);
      ++n;
    }
    if (n == 0) return std::nullopt;
    return acc / n;
  }

 private:
  static long long value(const std::map<int, long long>& m, int key) {
    auto it = m.find(key);
    return it == m.end() ? 0 : it->second;
  }
  std::map<int, long long> inter_, area_pred_, area_gt_;
};

inline std::optional<double> miou(const SemanticMap& pred, const SemanticMap& gt,
                                  const std::vector<int>& classes) {
  MiouAccumulator acc;
  acc.add(pred, gt);
  return acc.mean_iou(classes);
}

// ---------------------------------------------------------------------------
// Instance-segmentation average precision
// ---------------------------------------------------------------------------

struct ApPrediction {
  int image = 0;
  int class_id = 0;
  double confidence = 0.0;
  Mask mask;
};

struct ApGroundTruth {
  int image = 0;
  int class_id = 0;
  Mask mask;
};

struct ApScore {
  std::optional<double> ap;    // mean over taus {0.50,...,0.95} and classes
  std::optional<double> ap50;  // tau = 0.5 slice
  std::map<int, double> per_class_ap50;
};

// Greedy confidence-ordered matching at IoU >= tau with all-point PR
// interpolation.  Classes with no ground truth are skipped; no ground
// truth at all makes both scores absent.
inline ApScore instance_ap(const std::vector<ApPrediction>& preds,
                           const std::vector<ApGroundTruth>& gts) {
  std::map<int, std::vector<size_t>> gt_by_class;
  for (size_t i = 0; i < gts.size(); ++i) gt_by_class[gts[i].class_id].push_back(i);
  if (gt_by_class.empty()) return {};

  std::map<int, std::vector<size_t>> pred_by_class;
  for (size_t i = 0; i < preds.size(); ++i) pred_by_class[preds[i].class_id].push_back(i);

  ApScore out;
  double ap_acc = 0.0, ap50_acc = 0.0;
  int n_classes = 0;
  for (const auto& [cls, gt_idx] : gt_by_class) {
    std::vector<size_t> pred_idx;
    if (auto it = pred_by_class.find(cls); it != pred_by_class.end()) pred_idx = it->second;
    std::stable_sort(pred_idx.begin(), pred_idx.end(), [&](size_t a, size_t b) {
      return preds[a].confidence > preds[b].confidence;
    });
    // IoU of each prediction against each same-image GT, computed once.
    std::vector<std::vector<double>> iou(pred_idx.size(),
                                         std::vector<double>(gt_idx.size(), 0.0));
    for (size_t p = 0; p < pred_idx.size(); ++p)
      for (size_t g = 0; g < gt_idx.size(); ++g)
        if (preds[pred_idx[p]].image == gts[gt_idx[g]].image)
          iou[p][g] = mask_iou(preds[pred_idx[p]].mask, gts[gt_idx[g]].mask);

    double class_ap_acc = 0.0, class_ap50 = 0.0;
    for (int ti = 0; ti < 10; ++ti) {
      const double tau = 0.50 + 0.05 * ti;
      std::vector<bool> gt_used(gt_idx.size(), false);
      std::vector<bool> is_tp(pred_idx.size(), false);
      for (size_t p = 0; p < pred_idx.size(); ++p) {
        int best = -1;
        double best_iou = 0.0;
        for (size_t g = 0; g < gt_idx.size(); ++g) {
          if (gt_used[g]) continue;
          if (iou[p][g] >= tau && iou[p][g] > best_iou) {
            best = static_cast<int>(g);
            best_iou = iou[p][g];
          }
        }
        if (best >= 0) {
          gt_used[static_cast<size_t>(best)] = true;
          is_tp[p] = true;
        }
      }
      // All-point interpolated area under the PR curve.
      const double n_gt = static_cast<double>(gt_idx.size());
      std::vector<double> precision, recall;
      long long tp = 0, fp = 0;
      for (size_t p = 0; p < pred_idx.size(); ++p) {
        if (is_tp[p]) ++tp; else ++fp;
        precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
        recall.push_back(static_cast<double>(tp) / n_gt);
      }
      double ap_tau = 0.0;
      double env = 0.0;  // running max precision from the right
      for (size_t p = precision.size(); p-- > 0;) {
        env = std::max(env, precision[p]);
        double prev_recall = p == 0 ? 0.0 : recall[p - 1];
        ap_tau += env * (recall[p] - prev_recall);
      }
      class_ap_acc += ap_tau;
      if (ti == 0) class_ap50 = ap_tau;
    }
    ap_acc += class_ap_acc / 10.0;
    ap50_acc += class_ap50;
    out.per_class_ap50[cls] = class_ap50;
    ++n_classes;
  }
  out.ap = ap_acc / n_classes;
  out.ap50 = ap50_acc / n_classes;
  return out;
}

}  // namespace panofc
