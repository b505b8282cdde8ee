#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "panofc/things.hpp"
#include "testutil.hpp"

using namespace panofc;
using Catch::Approx;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

ThingsConfig toy_config() {
  ThingsConfig c;
  c.mask_channels = 2;
  c.mask_h = 3;
  c.mask_w = 3;
  c.gru_hidden = 4;
  c.convlstm_channels = 3;
  c.bfeat_channels = 2;
  c.mfeat_hidden = 2;
  c.mfeat_dim = 3;
  c.mask_out = 4;
  c.thing_classes = 2;
  return c;
}

void identity_stats(ThingsModel& m) {
  m.box_stats.mean.assign(10, 0.0);
  m.box_stats.stdev.assign(10, 1.0);
  m.ego_stats.mean.assign(5, 0.0);
  m.ego_stats.stdev.assign(5, 1.0);
}

TrackFrame random_frame(const ThingsConfig& cfg, Rng& rng) {
  TrackFrame f;
  f.present = true;
  f.box = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.5, 1.5),
           rng.uniform(0.5, 1.5), rng.uniform(0.5, 2),
           rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.1, 0.1),
           rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)};
  f.mask = MaskFeature(cfg.mask_channels, cfg.mask_h, cfg.mask_w);
  for (double& v : f.mask.v) v = rng.uniform(0, 1);
  return f;
}

Track random_track(const ThingsConfig& cfg, int frames, Rng& rng) {
  Track t;
  t.instance_id = 1;
  t.class_id = 4;
  for (int i = 0; i < frames; ++i) t.frames.push_back(random_frame(cfg, rng));
  return t;
}

std::vector<EgoVector> random_ego(int n, Rng& rng) {
  std::vector<EgoVector> out;
  for (int i = 0; i < n; ++i)
    out.push_back({rng.uniform(0, 2), rng.uniform(-0.2, 0.2), rng.uniform(-0.5, 0.5),
                   rng.uniform(-0.5, 0.5), rng.uniform(-0.2, 0.2)});
  return out;
}

void zero_params(ThingsModel& m) {
  for (auto& [name, t] : m.params.tensors())
    for (double& v : t.values()) v = 0.0;
}

}  // namespace

TEST_CASE("things config validates every field") {
  ThingsConfig c = toy_config();
  c.validate();
  c.gru_hidden = 0;
  REQUIRE_THROWS_MATCHES(c.validate(), ConfigError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("gru_hidden")));
  c = toy_config();
  c.mask_out = -3;
  REQUIRE_THROWS_MATCHES(c.validate(), ConfigError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("mask_out")));

  SECTION("round-trips through doubles") {
    ThingsConfig d = ThingsConfig::from_doubles(toy_config().to_doubles());
    REQUIRE(d.to_doubles() == toy_config().to_doubles());
    REQUIRE_THROWS_AS(ThingsConfig::from_doubles({1, 2, 3}), FormatError);
  }
}

TEST_CASE("things model initialization is deterministic per seed") {
  ThingsModel a = ThingsModel::init(toy_config(), 9);
  ThingsModel b = ThingsModel::init(toy_config(), 9);
  ThingsModel c = ThingsModel::init(toy_config(), 10);
  bool same = true, diff = false;
  for (auto& [name, t] : a.params.tensors()) {
    same = same && (t.values() == b.params.at(name).values());
    diff = diff || (t.values() != c.params.at(name).values());
  }
  REQUIRE(same);
  REQUIRE(diff);
  for (auto& [name, t] : a.params.tensors()) REQUIRE(t.requires_grad());
}

TEST_CASE("zero parameters give zero estimates and a constant decoder") {
  ThingsModel m = ThingsModel::init(toy_config(), 3);
  identity_stats(m);
  zero_params(m);
  Rng rng(17);
  Track track = random_track(m.config, 3, rng);
  std::vector<EgoVector> ego = random_ego(3, rng);

  ThingsState s = m.encode(track, ego);
  for (double v : s.h_b.values()) REQUIRE(v == 0.0);
  for (double v : s.x_hat.values()) REQUIRE(v == 0.0);
  for (double v : s.r_hat.values()) REQUIRE(v == 0.0);

  std::vector<ThingsPrediction> preds = m.decode(s, random_ego(2, rng));
  REQUIRE(preds.size() == 2);
  for (const ThingsPrediction& p : preds) {
    for (double v : p.x.values()) REQUIRE(v == 0.0);
    for (double v : p.r.values()) REQUIRE(v == 0.0);
  }
}

TEST_CASE("absent frames feed zeros and present frames normalize") {
  ThingsModel m = ThingsModel::init(toy_config(), 3);
  m.box_stats.mean.assign(10, 2.0);
  m.box_stats.stdev.assign(10, 4.0);
  m.ego_stats.mean.assign(5, 1.0);
  m.ego_stats.stdev.assign(5, 2.0);

  TrackFrame absent;
  Tensor bx = m.box_input(absent);
  REQUIRE(bx.shape() == Shape{1, 10});
  for (double v : bx.values()) REQUIRE(v == 0.0);
  Tensor mx = m.mask_input(absent);
  for (double v : mx.values()) REQUIRE(v == 0.0);

  TrackFrame present;
  present.present = true;
  present.box = {6, 6, 6, 6, 6, 6, 6, 6, 6, 6};
  present.mask = MaskFeature(2, 3, 3);
  present.mask.at(1, 2, 0) = 0.75;
  Tensor bp = m.box_input(present);
  for (double v : bp.values()) REQUIRE(v == Approx(1.0));  // (6-2)/4
  Tensor mp = m.mask_input(present);
  REQUIRE(mp.shape() == Shape{1, 2, 3, 3});
  REQUIRE(mp.at(0, 1, 2, 0) == 0.75);

  Tensor eg = m.ego_input({3, 3, 3, 3, 3});
  for (double v : eg.values()) REQUIRE(v == Approx(1.0));  // (3-1)/2
}

TEST_CASE("encoder and rollout validate their inputs") {
  ThingsModel m = ThingsModel::init(toy_config(), 3);
  identity_stats(m);
  Rng rng(5);
  Track track = random_track(m.config, 3, rng);
  std::vector<EgoVector> ego = random_ego(3, rng);

  Track empty;
  REQUIRE_THROWS_AS(m.encode(empty, {}), UsageError);
  REQUIRE_THROWS_AS(m.encode(track, random_ego(2, rng)), UsageError);

  std::vector<EgoVector> two = random_ego(2, rng);
  REQUIRE_THROWS_AS(m.rollout(track, two, 0), UsageError);
  REQUIRE_THROWS_AS(m.rollout(track, two, 3), UsageError);  // no forecast step left
  REQUIRE_THROWS_AS(m.rollout(track, random_ego(3, rng), 2), UsageError);

  Track bad = track;
  bad.frames[1].mask = MaskFeature(2, 5, 5);
  REQUIRE_THROWS_AS(m.encode(bad, ego), DimError);
}

TEST_CASE("rollout emits the filled-in estimate plus one prediction per forecast step") {
  ThingsModel m = ThingsModel::init(toy_config(), 11);
  identity_stats(m);
  Rng rng(23);
  Track track = random_track(m.config, 5, rng);
  std::vector<EgoVector> ego = random_ego(4, rng);

  std::vector<ThingsPrediction> preds = m.rollout(track, ego, 2);
  REQUIRE(preds.size() == 4);  // estimate at step 1 plus forecasts for steps 2..4
  for (const ThingsPrediction& p : preds) {
    REQUIRE(p.x.shape() == Shape{1, 10});
    REQUIRE(p.r.shape() == Shape{1, 2, 3, 3});
  }

  SECTION("matches a hand-assembled encode plus decode") {
    Track obs;
    obs.frames.assign(track.frames.begin(), track.frames.begin() + 2);
    ThingsState s = m.encode(obs, {ego[0], ego[1]});
    REQUIRE(s.x_hat.values() == preds[0].x.values());
    REQUIRE(s.r_hat.values() == preds[0].r.values());
    // The decoder reuses the last observed interval's ego vector.
    std::vector<ThingsPrediction> dec = m.decode(s, {ego[1], ego[2], ego[3]});
    for (size_t i = 0; i < dec.size(); ++i) {
      REQUIRE(dec[i].x.values() == preds[i + 1].x.values());
      REQUIRE(dec[i].r.values() == preds[i + 1].r.values());
    }
  }

  SECTION("single observed step works") {
    Track two;
    two.frames = {track.frames[0], track.frames[1]};
    std::vector<ThingsPrediction> p = m.rollout(two, {ego[0]}, 1);
    REQUIRE(p.size() == 2);
  }
}

TEST_CASE("decoding in chunks matches decoding in one call") {
  ThingsModel m = ThingsModel::init(toy_config(), 13);
  identity_stats(m);
  Rng rng(31);
  Track track = random_track(m.config, 2, rng);
  std::vector<EgoVector> ego = random_ego(2, rng);
  std::vector<EgoVector> fut = random_ego(3, rng);

  ThingsState whole = m.encode(track, ego);
  std::vector<ThingsPrediction> full = m.decode(whole, fut);

  ThingsState split = m.encode(track, ego);
  std::vector<ThingsPrediction> first = m.decode(split, {fut[0]});
  std::vector<ThingsPrediction> rest = m.decode(split, {fut[1], fut[2]});
  REQUIRE(first.size() == 1);
  REQUIRE(rest.size() == 2);
  REQUIRE(first[0].x.values() == full[0].x.values());
  REQUIRE(rest[0].x.values() == full[1].x.values());
  REQUIRE(rest[1].x.values() == full[2].x.values());
  REQUIRE(rest[1].r.values() == full[2].r.values());
}

TEST_CASE("encoder gradients match finite differences") {
  ThingsModel m = ThingsModel::init(toy_config(), 5);
  identity_stats(m);
  Rng rng(41);
  Track track = random_track(m.config, 2, rng);
  std::vector<EgoVector> ego = random_ego(2, rng);
  double err = testutil::max_grad_rel_err(
      m.params,
      [&] {
        ThingsState s = m.encode(track, ego);
        return add(sum(s.x_hat), sum(s.r_hat));
      },
      1e-4);
  REQUIRE(err < 1e-4);
}

TEST_CASE("full rollout loss gradients match finite differences") {
  ThingsModel m = ThingsModel::init(toy_config(), 7);
  identity_stats(m);
  Rng rng(43);
  Track track = random_track(m.config, 4, rng);
  std::vector<EgoVector> ego = random_ego(3, rng);
  std::vector<ThingsTargetStep> targets = things_targets(m, track, 2);
  REQUIRE(targets.size() == 3);
  double err = testutil::max_grad_rel_err(
      m.params,
      [&] {
        std::vector<ThingsPrediction> preds = m.rollout(track, ego, 2);
        return *things_loss(preds, targets);
      },
      1e-4);
  REQUIRE(err < 1e-4);
}

TEST_CASE("mask synthesis gradients match finite differences") {
  ThingsModel m = ThingsModel::init(toy_config(), 19);
  Rng rng(47);
  Tensor r = testutil::random_tensor(Shape{1, 2, 3, 3}, rng, -1, 1);
  std::vector<double> target(16);
  for (double& v : target) v = rng.uniform(0, 1);
  double err = testutil::max_grad_rel_err(
      m.params, [&] { return maskout_loss(m, r, 1, target); });
  REQUIRE(err < 1e-4);
}

TEST_CASE("prediction loss hand values") {
  Tensor box(Shape{1, 10}, 0.25);
  Tensor mask(Shape{1, 2, 3, 3}, 0.5);

  ThingsTargetStep target;
  target.present = true;
  target.box = box;
  target.mask = mask;

  SECTION("perfect prediction scores exactly zero") {
    std::vector<ThingsPrediction> preds{{box, mask}};
    REQUIRE(things_loss(preds, {target})->value() == 0.0);
  }

  SECTION("box off by 0.5 everywhere adds lambda * 0.125") {
    Tensor off(Shape{1, 10}, 0.75);
    std::vector<ThingsPrediction> preds{{off, mask}};
    REQUIRE(things_loss(preds, {target})->value() == Approx(0.0125).epsilon(1e-12));
  }

  SECTION("mask off by 2 everywhere adds MSE 4") {
    Tensor off(Shape{1, 2, 3, 3}, 2.5);
    std::vector<ThingsPrediction> preds{{box, off}};
    REQUIRE(things_loss(preds, {target})->value() == Approx(4.0).epsilon(1e-12));
  }

  SECTION("absent steps are skipped and averaged out") {
    ThingsTargetStep absent;
    Tensor off(Shape{1, 2, 3, 3}, 2.5);
    std::vector<ThingsPrediction> preds{{box, off}, {box, mask}};
    // Only the first (present) step counts; Z = 1.
    double v = things_loss(preds, {target, absent})->value();
    REQUIRE(v == Approx(4.0).epsilon(1e-12));
    // Two present steps average.
    double w = things_loss(preds, {target, target})->value();
    REQUIRE(w == Approx(2.0).epsilon(1e-12));
  }

  SECTION("no present target signals nothing to learn") {
    ThingsTargetStep absent;
    std::vector<ThingsPrediction> preds{{box, mask}};
    REQUIRE_FALSE(things_loss(preds, {absent}).has_value());
  }

  SECTION("length mismatch throws") {
    std::vector<ThingsPrediction> preds{{box, mask}};
    REQUIRE_THROWS_AS(things_loss(preds, {target, target}), UsageError);
  }
}

TEST_CASE("targets cover the last observed step through the end") {
  ThingsModel m = ThingsModel::init(toy_config(), 3);
  identity_stats(m);
  Rng rng(53);
  Track track = random_track(m.config, 5, rng);
  track.frames[3].present = false;

  std::vector<ThingsTargetStep> targets = things_targets(m, track, 2);
  REQUIRE(targets.size() == 4);
  REQUIRE(targets[0].present);
  REQUIRE_FALSE(targets[2].present);
  REQUIRE(targets[0].box.values() == m.box_input(track.frames[1]).values());
  REQUIRE(targets[3].mask.values() == m.mask_input(track.frames[4]).values());
  REQUIRE_THROWS_AS(things_targets(m, track, 9), UsageError);
}

TEST_CASE("mask head paints thresholded probabilities into the predicted box") {
  ThingsModel m = ThingsModel::init(toy_config(), 3);
  identity_stats(m);
  zero_params(m);
  Rng rng(59);
  Tensor r = testutil::random_tensor(Shape{1, 2, 3, 3}, rng, -1, 1);

  SECTION("confident head fills the box exactly") {
    for (double& v : m.params.at("things.maskout.out.b").values()) v = 10.0;
    BoxFeature box{4.5, 3.0, 3, 2, 7.25, 0, 0, 0, 0, 0};
    MaskHeadResult res = mask_head(m, r, box, 0, 8, 10);
    REQUIRE(res.depth == 7.25);
    REQUIRE(res.confidence == Approx(1.0 / (1.0 + std::exp(-10.0))));
    int set = 0;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 10; ++x) set += res.mask.at(y, x) ? 1 : 0;
    REQUIRE(set == 6);  // rows [2,4) x cols [3,6)
    for (int y = 2; y < 4; ++y)
      for (int x = 3; x < 6; ++x) REQUIRE(res.mask.at(y, x) == 1);
  }

  SECTION("diffident head leaves the mask empty") {
    for (double& v : m.params.at("things.maskout.out.b").values()) v = -10.0;
    BoxFeature box{4.5, 3.0, 3, 2, 7.25, 0, 0, 0, 0, 0};
    MaskHeadResult res = mask_head(m, r, box, 0, 8, 10);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 10; ++x) REQUIRE(res.mask.at(y, x) == 0);
  }

  SECTION("boxes outside the frame clip to empty") {
    for (double& v : m.params.at("things.maskout.out.b").values()) v = 10.0;
    BoxFeature box{-50.0, 3.0, 3, 2, 7.25, 0, 0, 0, 0, 0};
    MaskHeadResult res = mask_head(m, r, box, 0, 8, 10);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 10; ++x) REQUIRE(res.mask.at(y, x) == 0);
  }

  SECTION("partially visible boxes clip to the frame") {
    for (double& v : m.params.at("things.maskout.out.b").values()) v = 10.0;
    BoxFeature box{0.0, 0.0, 4, 4, 1.0, 0, 0, 0, 0, 0};
    MaskHeadResult res = mask_head(m, r, box, 0, 8, 10);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 10; ++x)
        REQUIRE(static_cast<int>(res.mask.at(y, x)) == ((y < 2 && x < 2) ? 1 : 0));
  }

  SECTION("set pixels always stay inside the clipped box") {
    ThingsModel r2 = ThingsModel::init(toy_config(), 77);
    identity_stats(r2);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor rr = testutil::random_tensor(Shape{1, 2, 3, 3}, rng, -2, 2);
      BoxFeature box{rng.uniform(-2, 12), rng.uniform(-2, 10), rng.uniform(0.5, 6),
                     rng.uniform(0.5, 6), 1.0, 0, 0, 0, 0, 0};
      MaskHeadResult res = mask_head(r2, rr, box, trial % 2, 8, 10);
      long y0 = std::lround(box.cy - 0.5 * box.h), y1 = std::lround(box.cy + 0.5 * box.h);
      long x0 = std::lround(box.cx - 0.5 * box.w), x1 = std::lround(box.cx + 0.5 * box.w);
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 10; ++x)
          if (res.mask.at(y, x))
            REQUIRE((y >= y0 && y < y1 && x >= x0 && x < x1));
    }
  }

  SECTION("invalid thing class throws") {
    REQUIRE_THROWS_AS(m.mask_probs(r, 2), UsageError);
    REQUIRE_THROWS_AS(m.mask_probs(r, -1), UsageError);
  }
}

TEST_CASE("maskout pretraining learns a box-shaped target") {
  ThingsModel m = ThingsModel::init(toy_config(), 29);
  identity_stats(m);
  Rng rng(61);
  // One fixed latent, one box-like occupancy target on the 4x4 grid.
  Tensor r = testutil::random_tensor(Shape{1, 2, 3, 3}, rng, -1, 1);
  std::vector<double> target(16, 0.0);
  for (int y = 1; y < 3; ++y)
    for (int x = 1; x < 4; ++x) target[static_cast<size_t>(y * 4 + x)] = 1.0;

  AdamConfig ac;
  ac.lr = 3e-2;
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 150; ++step) {
    m.params.zero_grad();
    Tensor loss = maskout_loss(m, r, 0, target);
    if (step == 0) first = loss.value();
    last = loss.value();
    loss.backward();
    adam_step(m.params, ac);
  }
  REQUIRE(last < 0.25 * first);

  SECTION("frozen maskout parameters stop moving") {
    freeze_maskout(m);
    std::vector<double> before = m.params.at("things.maskout.c1.w").values();
    for (int step = 0; step < 3; ++step) {
      m.params.zero_grad();
      Tensor loss = maskout_loss(m, r, 0, target);
      loss.backward();
      adam_step(m.params, ac);
    }
    REQUIRE(m.params.at("things.maskout.c1.w").values() == before);
    freeze_maskout(m, false);
    REQUIRE(m.params.at("things.maskout.c1.w").requires_grad());
  }
}

TEST_CASE("training reduces the rollout loss on synthetic tracks") {
  ThingsConfig cfg = toy_config();
  ThingsModel m = ThingsModel::init(cfg, 101);
  identity_stats(m);
  Rng rng(103);

  // Constant-velocity tracks with a fixed mask feature: 4 observed
  // steps, 2 forecast steps.
  std::vector<Track> tracks;
  std::vector<std::vector<EgoVector>> egos;
  for (int i = 0; i < 8; ++i) {
    Track t;
    t.instance_id = i + 1;
    t.class_id = 4;
    double cx = rng.uniform(-1, 1), cy = rng.uniform(-1, 1);
    double vx = rng.uniform(-0.2, 0.2), vy = rng.uniform(-0.2, 0.2);
    MaskFeature mf(cfg.mask_channels, cfg.mask_h, cfg.mask_w);
    for (double& v : mf.v) v = rng.uniform(0, 1);
    for (int s = 0; s < 6; ++s) {
      TrackFrame f;
      f.present = true;
      f.box = {cx + vx * s, cy + vy * s, 1.0, 1.0, 1.0, vx, vy, 0, 0, 0};
      f.mask = mf;
      t.frames.push_back(f);
    }
    tracks.push_back(t);
    egos.push_back(std::vector<EgoVector>(5));  // static camera
  }

  AdamConfig ac;
  ac.lr = 1e-2;
  ac.clip_norm = 5.0;
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 120; ++step) {
    m.params.zero_grad();
    Tensor total = Tensor::scalar(0.0);
    for (size_t i = 0; i < tracks.size(); ++i) {
      std::vector<ThingsPrediction> preds = m.rollout(tracks[i], egos[i], 4);
      std::vector<ThingsTargetStep> targets = things_targets(m, tracks[i], 4);
      total = add(total, *things_loss(preds, targets));
    }
    total = scale(total, 1.0 / static_cast<double>(tracks.size()));
    if (step == 0) first = total.value();
    last = total.value();
    total.backward();
    adam_step(m.params, ac);
  }
  REQUIRE(last < 0.5 * first);
}

TEST_CASE("linear baseline extrapolates the last present box") {
  Track t;
  t.frames.resize(3);
  t.frames[0].present = true;
  t.frames[0].box = {1, 1, 2, 2, 5, 9, 9, 9, 9, 9};
  t.frames[1].present = true;
  t.frames[1].box = {3, 4, 2, 2, 5, 2, 0.5, 0, 0, -1};
  t.frames[1].mask = MaskFeature(1, 2, 2);
  t.frames[1].mask.at(0, 0, 0) = 1.0;
  t.frames[2].present = false;  // absent tail is ignored

  auto preds = linear_baseline(t, 3);
  REQUIRE(preds.size() == 3);
  REQUIRE(preds[0].first.cx == Approx(5.0));
  REQUIRE(preds[1].first.cx == Approx(7.0));
  REQUIRE(preds[2].first.cx == Approx(9.0));
  REQUIRE(preds[2].first.cy == Approx(5.5));
  REQUIRE(preds[0].first.d == Approx(4.0));
  REQUIRE(preds[2].first.d == Approx(2.0));
  REQUIRE(preds[2].second.at(0, 0, 0) == 1.0);  // mask frozen

  SECTION("zero deltas hold the box constant") {
    Track s;
    s.frames.resize(1);
    s.frames[0].present = true;
    s.frames[0].box = {4, 5, 2, 3, 6, 0, 0, 0, 0, 0};
    auto p = linear_baseline(s, 2);
    REQUIRE(p[0].first == s.frames[0].box);
    REQUIRE(p[1].first == s.frames[0].box);
  }

  SECTION("sizes and depth stay in range") {
    Track s;
    s.frames.resize(1);
    s.frames[0].present = true;
    s.frames[0].box = {0, 0, 1, 1, 0.5, 0, 0, -3, -3, -4};
    auto p = linear_baseline(s, 2);
    REQUIRE(p[1].first.w == 0.0);
    REQUIRE(p[1].first.h == 0.0);
    REQUIRE(p[1].first.d == 1e-3);
  }

  SECTION("no present frame throws") {
    Track s;
    s.frames.resize(2);
    REQUIRE_THROWS_AS(linear_baseline(s, 1), UsageError);
  }
}

TEST_CASE("copy-last baseline reuses the chosen frame verbatim") {
  SceneSpec spec;
  spec.seed = 19;
  spec.height = 16;
  spec.width = 16;
  spec.focal = 8;
  spec.frames = 4;
  spec.min_objects = 1;
  spec.max_objects = 2;
  spec.object_dist_min = 2;
  spec.object_dist_max = 6;
  SceneSequence seq = generate(spec);

  PanopticMap base = copy_last_baseline(seq, 2);
  REQUIRE(base == seq.panoptic(2));
  REQUIRE(base.cls.at(15, 7) >= 0);
}

TEST_CASE("things model save/load round-trips") {
  ThingsModel m = ThingsModel::init(toy_config(), 67);
  m.box_stats.mean.assign(10, 1.5);
  m.box_stats.stdev.assign(10, 2.5);
  m.ego_stats.mean.assign(5, -0.5);
  m.ego_stats.stdev.assign(5, 3.0);
  std::string path = tmp_path("panofc_things_test.pfw");
  save_things(m, path);

  ThingsModel r = load_things(path);
  REQUIRE(r.config.to_doubles() == m.config.to_doubles());
  REQUIRE(r.box_stats.mean == m.box_stats.mean);
  REQUIRE(r.ego_stats.stdev == m.ego_stats.stdev);
  for (auto& [name, t] : m.params.tensors())
    REQUIRE(r.params.at(name).values() == t.values());

  SECTION("loaded model reproduces the saved model's outputs") {
    identity_stats(m);
    identity_stats(r);
    Rng rng(71);
    Track track = random_track(m.config, 3, rng);
    std::vector<EgoVector> ego = random_ego(2, rng);
    auto a = m.rollout(track, ego, 2);
    auto b = r.rollout(track, ego, 2);
    REQUIRE(a.back().x.values() == b.back().x.values());
    REQUIRE(a.back().r.values() == b.back().r.values());
  }

  std::remove(path.c_str());
}
