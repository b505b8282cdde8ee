#include <catch2/catch_amalgamated.hpp>

#include "panofc/metrics.hpp"
#include "panofc/random.hpp"

using namespace panofc;

namespace {

Mask rect_mask(int h, int w, int y0, int x0, int y1, int x1) {
  Mask m(h, w);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.at(y, x) = 1;
  return m;
}

PanopticMap random_panoptic(Rng& r, int h, int w, int c_stuff, int c_total,
                            int max_inst) {
  PanopticMap m(h, w);
  for (auto& v : m.cls.data()) v = static_cast<int16_t>(r.below(static_cast<uint64_t>(c_stuff)));
  int n = static_cast<int>(r.below(static_cast<uint64_t>(max_inst + 1)));
  for (int i = 1; i <= n; ++i) {
    int y0 = r.range(0, h - 2), x0 = r.range(0, w - 2);
    int y1 = r.range(y0 + 1, h), x1 = r.range(x0 + 1, w);
    int16_t cls = static_cast<int16_t>(r.range(c_stuff, c_total - 1));
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        m.cls.at(y, x) = cls;
        m.inst.at(y, x) = i;
      }
  }
  return m;
}

// Brute-force matcher: enumerates every same-class segment pair and
// keeps pairs with IoU > 0.5, then checks the pairing is unique.
struct OracleCounts {
  long long tp = 0, fp = 0, fn = 0;
  double iou_sum = 0.0;
};

std::map<int, OracleCounts> match_oracle(const PanopticMap& pred, const PanopticMap& gt) {
  using Key = std::pair<int16_t, int32_t>;
  std::map<Key, std::vector<long long>> pred_pix, gt_pix;
  for (long long i = 0; i < pred.cls.pixels(); ++i) {
    pred_pix[{pred.cls.data()[static_cast<size_t>(i)],
              pred.inst.data()[static_cast<size_t>(i)]}].push_back(i);
    gt_pix[{gt.cls.data()[static_cast<size_t>(i)],
            gt.inst.data()[static_cast<size_t>(i)]}].push_back(i);
  }
  std::map<int, OracleCounts> out;
  std::map<Key, bool> pm, gm;
  for (const auto& [pk, ppix] : pred_pix) {
    for (const auto& [gk, gpix] : gt_pix) {
      if (pk.first != gk.first) continue;
      std::vector<long long> both;
      std::set_intersection(ppix.begin(), ppix.end(), gpix.begin(), gpix.end(),
                            std::back_inserter(both));
      double iou = static_cast<double>(both.size()) /
                   static_cast<double>(ppix.size() + gpix.size() - both.size());
      if (iou > 0.5) {
        // Uniqueness guaranteed by the threshold; assert it.
        REQUIRE_FALSE(pm.count(pk));
        REQUIRE_FALSE(gm.count(gk));
        pm[pk] = gm[gk] = true;
        out[pk.first].tp += 1;
        out[pk.first].iou_sum += iou;
      }
    }
  }
  for (const auto& [pk, v] : pred_pix)
    if (!pm.count(pk)) out[pk.first].fp += 1;
  for (const auto& [gk, v] : gt_pix)
    if (!gm.count(gk)) out[gk.first].fn += 1;
  return out;
}

}  // namespace

TEST_CASE("mask iou basics", "[metrics]") {
  Mask a = rect_mask(10, 20, 0, 0, 10, 10);
  CHECK(mask_iou(a, a) == 1.0);
  Mask b = rect_mask(10, 20, 0, 10, 10, 20);
  CHECK(mask_iou(a, b) == 0.0);
  // |a| = |b| = 100, overlap 80 -> 80/120.
  Mask c = rect_mask(10, 20, 0, 2, 10, 12);
  CHECK(mask_iou(a, c) == Catch::Approx(2.0 / 3.0).margin(1e-15));
  CHECK(mask_iou(Mask(4, 4), Mask(4, 4)) == 0.0);
  CHECK_THROWS_AS(mask_iou(a, Mask(3, 3)), DimError);
}

TEST_CASE("panoptic_match: self match is all TP at IoU 1", "[metrics]") {
  Rng rng(5);
  PanopticMap m = random_panoptic(rng, 16, 16, 3, 5, 3);
  MatchResult r = panoptic_match(m, m);
  for (const auto& [cls, cm] : r.per_class) {
    CHECK(cm.fp.empty());
    CHECK(cm.fn.empty());
    for (double iou : cm.tp_iou) CHECK(iou == 1.0);
  }
  PanopticScore s = panoptic_quality(r, 3);
  CHECK(s.pq_all == 1.0);
  CHECK(s.sq_all == 1.0);
  CHECK(s.rq_all == 1.0);
}

TEST_CASE("panoptic_match: IoU exactly 0.5 stays unmatched", "[metrics]") {
  // pred segment = {(0,0)}, gt segment = {(0,0),(0,1)}: IoU = 1/2.
  PanopticMap pred(1, 2, 0), gt(1, 2, 0);
  pred.cls.at(0, 0) = 3;
  pred.inst.at(0, 0) = 1;
  pred.cls.at(0, 1) = 1;  // stuff elsewhere
  gt.cls.at(0, 0) = 3;
  gt.cls.at(0, 1) = 3;
  gt.inst.at(0, 0) = 1;
  gt.inst.at(0, 1) = 1;
  MatchResult r = panoptic_match(pred, gt);
  CHECK(r.per_class.at(3).tp.empty());
  CHECK(r.per_class.at(3).fp.size() == 1);
  CHECK(r.per_class.at(3).fn.size() == 1);
}

TEST_CASE("panoptic_match: IoU 2/3 is a TP", "[metrics]") {
  PanopticMap pred(10, 20, 0), gt(10, 20, 0);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 10; ++x) {
      pred.cls.at(y, x) = 4;
      pred.inst.at(y, x) = 1;
    }
    for (int x = 2; x < 12; ++x) {
      gt.cls.at(y, x) = 4;
      gt.inst.at(y, x) = 9;  // id numbering must not matter
    }
  }
  MatchResult r = panoptic_match(pred, gt);
  REQUIRE(r.per_class.at(4).tp.size() == 1);
  CHECK(r.per_class.at(4).tp_iou[0] == Catch::Approx(2.0 / 3.0).margin(1e-12));
  CHECK(r.per_class.at(4).fp.empty());
  CHECK(r.per_class.at(4).fn.empty());
  PanopticScore s = panoptic_quality(r, 3);
  CHECK(s.per_class.at(4).sq == Catch::Approx(2.0 / 3.0).margin(1e-12));
  CHECK(s.per_class.at(4).rq == 1.0);
  CHECK(s.per_class.at(4).pq == Catch::Approx(2.0 / 3.0).margin(1e-12));
}

TEST_CASE("panoptic_quality: 1 TP (IoU 0.8) + 1 FN", "[metrics]") {
  MatchResult r;
  auto& m = r.per_class[2];
  m.tp.emplace_back(1, 1);
  m.tp_iou.push_back(0.8);
  m.fn.push_back(2);
  PanopticScore s = panoptic_quality(r, 3);
  CHECK(s.per_class.at(2).rq == Catch::Approx(2.0 / 3.0).margin(1e-12));
  CHECK(s.per_class.at(2).sq == Catch::Approx(0.8).margin(1e-12));
  CHECK(s.per_class.at(2).pq == Catch::Approx(0.8 * 2.0 / 3.0).margin(1e-12));
}

TEST_CASE("panoptic_quality: PQ = SQ*RQ per class on random maps", "[metrics]") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    Rng r = rng.fork(static_cast<uint64_t>(trial));
    PanopticMap pred = random_panoptic(r, 16, 16, 3, 5, 3);
    PanopticMap gt = random_panoptic(r, 16, 16, 3, 5, 3);
    PanopticScore s = panoptic_quality(panoptic_match(pred, gt), 3);
    for (const auto& [cls, cs] : s.per_class) {
      CHECK(cs.pq == Catch::Approx(cs.sq * cs.rq).margin(1e-12));
      CHECK(cs.sq >= 0.0);
      CHECK(cs.sq <= 1.0);
      CHECK(cs.rq >= 0.0);
      CHECK(cs.rq <= 1.0);
    }
  }
}

TEST_CASE("panoptic_match agrees with the brute-force matcher", "[metrics][oracle]") {
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    Rng r = rng.fork(static_cast<uint64_t>(trial));
    PanopticMap pred = random_panoptic(r, 16, 16, 3, 5, 4);
    PanopticMap gt = random_panoptic(r, 16, 16, 3, 5, 4);
    MatchResult fast = panoptic_match(pred, gt);
    auto slow = match_oracle(pred, gt);
    for (const auto& [cls, oc] : slow) {
      const auto& cm = fast.per_class.at(cls);
      REQUIRE(static_cast<long long>(cm.tp.size()) == oc.tp);
      REQUIRE(static_cast<long long>(cm.fp.size()) == oc.fp);
      REQUIRE(static_cast<long long>(cm.fn.size()) == oc.fn);
      double iou_sum = 0.0;
      for (double v : cm.tp_iou) iou_sum += v;
      REQUIRE(iou_sum == Catch::Approx(oc.iou_sum).margin(1e-12));
    }
    REQUIRE(fast.per_class.size() == slow.size());
  }
}

TEST_CASE("metrics are invariant to instance id permutations", "[metrics]") {
  Rng rng(8);
  PanopticMap pred = random_panoptic(rng, 16, 16, 3, 5, 4);
  PanopticMap gt = random_panoptic(rng, 16, 16, 3, 5, 4);
  PanopticMap pred2 = pred;
  PanopticMap gt2 = gt;
  for (auto& v : pred2.inst.data()) v = v ? 100 - v : 0;
  for (auto& v : gt2.inst.data()) v = v ? v + 37 : 0;
  PanopticScore a = panoptic_quality(panoptic_match(pred, gt), 3);
  PanopticScore b = panoptic_quality(panoptic_match(pred2, gt2), 3);
  CHECK(a.pq_all == b.pq_all);
  CHECK(a.sq_all == b.sq_all);
  CHECK(a.rq_all == b.rq_all);
}

TEST_CASE("miou basics", "[metrics]") {
  SemanticMap gt(10, 20, 0);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 20; ++x) gt.at(y, x) = 1;
  CHECK(miou(gt, gt, {0, 1}).value() == 1.0);

  // class 1: 100 px GT, 100 px pred, 50 overlap -> IoU 1/3.
  SemanticMap pred(10, 20, 0);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 20; ++x)
      if ((y * 20 + x) >= 50 && (y * 20 + x) < 150) pred.at(y, x) = 1;
  auto v = miou(pred, gt, {1});
  CHECK(v.value() == Catch::Approx(1.0 / 3.0).margin(1e-12));

  // Subset with no present class is absent, not zero.
  CHECK_FALSE(miou(pred, gt, {7, 8}).has_value());
}

TEST_CASE("instance AP hand cases", "[metrics]") {
  // One pred, one GT, IoU 0.7.
  Mask gt_mask = rect_mask(10, 10, 0, 0, 10, 10);   // 100 px
  Mask pred_mask = rect_mask(10, 10, 0, 0, 10, 7);  // 70 px inside -> IoU 0.7
  std::vector<ApPrediction> preds{{0, 3, 0.9, pred_mask}};
  std::vector<ApGroundTruth> gts{{0, 3, gt_mask}};
  ApScore s = instance_ap(preds, gts);
  CHECK(s.ap50.value() == Catch::Approx(1.0).margin(1e-12));
  CHECK(s.ap.value() == Catch::Approx(0.5).margin(1e-12));

  // No predictions, one GT -> AP 0.
  ApScore none = instance_ap({}, gts);
  CHECK(none.ap.value() == 0.0);
  CHECK(none.ap50.value() == 0.0);

  // No ground truth at all -> absent.
  ApScore empty = instance_ap(preds, {});
  CHECK_FALSE(empty.ap.has_value());
}

TEST_CASE("instance AP ranks by confidence", "[metrics]") {
  Mask gt_mask = rect_mask(8, 8, 0, 0, 4, 4);
  Mask good = gt_mask;
  Mask bad = rect_mask(8, 8, 4, 4, 8, 8);
  // A confident wrong prediction ahead of a correct one caps precision.
  std::vector<ApPrediction> preds{{0, 3, 0.9, bad}, {0, 3, 0.5, good}};
  std::vector<ApGroundTruth> gts{{0, 3, gt_mask}};
  ApScore s = instance_ap(preds, gts);
  CHECK(s.ap50.value() == Catch::Approx(0.5).margin(1e-12));
  // Recall is reached at rank 2 with precision 1/2; the envelope is 1/2.
  std::vector<ApPrediction> flipped{{0, 3, 0.9, good}, {0, 3, 0.5, bad}};
  ApScore s2 = instance_ap(flipped, gts);
  CHECK(s2.ap50.value() == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("instance AP: predictions only match within their image", "[metrics]") {
  Mask m = rect_mask(8, 8, 0, 0, 4, 4);
  std::vector<ApPrediction> preds{{1, 3, 0.9, m}};
  std::vector<ApGroundTruth> gts{{0, 3, m}};
  ApScore s = instance_ap(preds, gts);
  CHECK(s.ap50.value() == 0.0);
}
