#include <catch2/catch_amalgamated.hpp>

#include "panofc/panoptic.hpp"
#include "panofc/random.hpp"

using namespace panofc;

namespace {

SemanticMap stripes(int h, int w, int n_classes) {
  SemanticMap m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.at(y, x) = static_cast<int16_t>(y % n_classes);
  return m;
}

Mask rect_mask(int h, int w, int y0, int x0, int y1, int x1) {
  Mask m(h, w);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.at(y, x) = 1;
  return m;
}

// Independent per-pixel oracle: the covering instance with minimum
// depth wins (ties -> smallest input index); otherwise background.
PanopticMap aggregate_oracle(const SemanticMap& bg,
                             const std::vector<InstanceForecast>& instances) {
  PanopticMap out(bg.h(), bg.w());
  out.cls = bg;
  for (int y = 0; y < bg.h(); ++y)
    for (int x = 0; x < bg.w(); ++x) {
      int best = -1;
      for (size_t i = 0; i < instances.size(); ++i) {
        if (!instances[i].mask.at(y, x)) continue;
        if (best < 0 || instances[i].depth < instances[static_cast<size_t>(best)].depth)
          best = static_cast<int>(i);
      }
      if (best >= 0) {
        out.cls.at(y, x) = static_cast<int16_t>(instances[static_cast<size_t>(best)].class_id);
        out.inst.at(y, x) = best + 1;
      }
    }
  return out;
}

}  // namespace

TEST_CASE("aggregate with no instances copies the background", "[panoptic]") {
  SemanticMap bg = stripes(4, 6, 3);
  PanopticMap out = aggregate(bg, {});
  CHECK(out.cls == bg);
  CHECK(out.inst.count(0) == out.inst.pixels());
}

TEST_CASE("aggregate: nearer instance wins the overlap", "[panoptic]") {
  SemanticMap bg(8, 8, 0);
  std::vector<InstanceForecast> inst;
  inst.push_back({rect_mask(8, 8, 0, 0, 5, 5), 4, 5.0, 1.0});
  inst.push_back({rect_mask(8, 8, 2, 2, 7, 7), 5, 10.0, 1.0});
  PanopticMap out = aggregate(bg, inst);
  // Overlap region [2,5)x[2,5) carries the depth-5 instance (id 1).
  for (int y = 2; y < 5; ++y)
    for (int x = 2; x < 5; ++x) {
      CHECK(out.inst.at(y, x) == 1);
      CHECK(out.cls.at(y, x) == 4);
    }
  CHECK(out.inst.at(6, 6) == 2);
  CHECK(out.cls.at(6, 6) == 5);
  CHECK(out.inst.at(0, 7) == 0);
}

TEST_CASE("aggregate: instances always beat stuff", "[panoptic]") {
  SemanticMap bg(4, 4, 2);
  std::vector<InstanceForecast> inst;
  inst.push_back({rect_mask(4, 4, 0, 0, 4, 4), 7, 1e6, 1.0});  // very far instance
  PanopticMap out = aggregate(bg, inst);
  CHECK(out.cls.count(7) == 16);
  CHECK(out.inst.count(1) == 16);
}

TEST_CASE("aggregate: errors", "[panoptic]") {
  SemanticMap bg(4, 4, 0);
  CHECK_THROWS_AS(aggregate(bg, {{Mask(3, 4), 1, 1.0, 1.0}}), UsageError);
  CHECK_THROWS_AS(aggregate(bg, {{Mask(4, 4), 1, 0.0, 1.0}}), InputError);
  CHECK_THROWS_AS(aggregate(bg, {{Mask(4, 4), 1, -3.0, 1.0}}), InputError);
}

TEST_CASE("aggregate matches the per-pixel min-depth oracle", "[panoptic][oracle]") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    Rng r = rng.fork(static_cast<uint64_t>(trial));
    const int h = 16, w = 16;
    SemanticMap bg(h, w);
    for (auto& v : bg.data()) v = static_cast<int16_t>(r.below(3));
    const int n = static_cast<int>(r.below(5));
    std::vector<InstanceForecast> inst;
    for (int i = 0; i < n; ++i) {
      int y0 = r.range(0, h - 2), x0 = r.range(0, w - 2);
      int y1 = r.range(y0 + 1, h), x1 = r.range(x0 + 1, w);
      // Depths from a tiny integer set to force plenty of ties.
      double depth = static_cast<double>(r.range(1, 3));
      inst.push_back({rect_mask(h, w, y0, x0, y1, x1), 3 + static_cast<int>(r.below(2)),
                      depth, 1.0});
    }
    PanopticMap fast = aggregate(bg, inst);
    PanopticMap slow = aggregate_oracle(bg, inst);
    REQUIRE(fast == slow);
  }
}

TEST_CASE("permuting instances only renumbers ids (distinct depths)", "[panoptic]") {
  Rng rng(31337);
  const int h = 12, w = 12;
  SemanticMap bg(h, w, 1);
  std::vector<InstanceForecast> inst;
  for (int i = 0; i < 4; ++i) {
    int y0 = rng.range(0, h - 2), x0 = rng.range(0, w - 2);
    inst.push_back({rect_mask(h, w, y0, x0, rng.range(y0 + 1, h), rng.range(x0 + 1, w)),
                    3 + i % 2, 1.0 + i * 0.25, 1.0});
  }
  PanopticMap a = aggregate(bg, inst);
  std::vector<InstanceForecast> perm{inst[2], inst[0], inst[3], inst[1]};
  PanopticMap b = aggregate(bg, perm);
  CHECK(a.cls == b.cls);
  // Ownership sets agree modulo the relabeling 1->2, 2->4, 3->1, 4->3.
  const int relabel[5] = {0, 2, 4, 1, 3};
  for (long long i = 0; i < a.inst.pixels(); ++i)
    CHECK(relabel[a.inst.data()[static_cast<size_t>(i)]] ==
          b.inst.data()[static_cast<size_t>(i)]);
}
