#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "panofc/optim.hpp"
#include "panofc/panoptic.hpp"
#include "panofc/rnn.hpp"
#include "panofc/scenesim.hpp"
#include "panofc/tensor.hpp"
#include "panofc/track.hpp"

namespace panofc {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ThingsConfig {
  int box_dim = 10;
  int ego_dim = 5;
  int mask_channels = 8;  // Cf
  int mask_h = 7;
  int mask_w = 7;
  int gru_hidden = 32;
  int convlstm_channels = 16;
  int bfeat_channels = 4;   // broadcast box-state channels fed to the ConvLSTM
  int mfeat_hidden = 4;     // 1x1-conv channels inside f_mfeat
  int mfeat_dim = 16;       // f_mfeat output width fed to the GRU
  int mask_out = 14;        // MaskOut probability grid (square)
  int thing_classes = 2;

  void validate() const {
    auto pos = [](int v, const char* what) {
      if (v < 1) throw ConfigError(str("things config: ", what, " must be >= 1, got ", v));
    };
    pos(box_dim, "box_dim");
    pos(ego_dim, "ego_dim");
    pos(mask_channels, "mask_channels");
    pos(mask_h, "mask_h");
    pos(mask_w, "mask_w");
    pos(gru_hidden, "gru_hidden");
    pos(convlstm_channels, "convlstm_channels");
    pos(bfeat_channels, "bfeat_channels");
    pos(mfeat_hidden, "mfeat_hidden");
    pos(mfeat_dim, "mfeat_dim");
    pos(mask_out, "mask_out");
    pos(thing_classes, "thing_classes");
  }

  std::vector<double> to_doubles() const {
    return {static_cast<double>(box_dim),        static_cast<double>(ego_dim),
            static_cast<double>(mask_channels),  static_cast<double>(mask_h),
            static_cast<double>(mask_w),         static_cast<double>(gru_hidden),
            static_cast<double>(convlstm_channels), static_cast<double>(bfeat_channels),
            static_cast<double>(mfeat_hidden),   static_cast<double>(mfeat_dim),
            static_cast<double>(mask_out),       static_cast<double>(thing_classes)};
  }

  static ThingsConfig from_doubles(const std::vector<double>& v) {
    if (v.size() != 12)
      throw FormatError(str("things config: expected 12 values, got ", v.size()));
    ThingsConfig c;
    int* fields[12] = {&c.box_dim,       &c.ego_dim,          &c.mask_channels,
                       &c.mask_h,        &c.mask_w,           &c.gru_hidden,
                       &c.convlstm_channels, &c.bfeat_channels, &c.mfeat_hidden,
                       &c.mfeat_dim,     &c.mask_out,         &c.thing_classes};
    for (int i = 0; i < 12; ++i) *fields[i] = static_cast<int>(v[static_cast<size_t>(i)]);
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

// Encoder/decoder state: GRU hidden, ConvLSTM (h, c), and the current
// normalized box estimate plus mask-feature estimate.
struct ThingsState {
  Tensor h_b;        // [1, gru_hidden]
  ConvLstmState m;   // [1, convlstm_channels, mask_h, mask_w]
  Tensor x_hat;      // [1, box_dim], normalized units
  Tensor r_hat;      // [1, mask_channels, mask_h, mask_w]
};

struct ThingsPrediction {
  Tensor x;  // [1, box_dim], normalized
  Tensor r;  // [1, mask_channels, mask_h, mask_w]
};

struct ThingsModel {
  ThingsConfig config;
  ParamStore params;
  FeatureStats box_stats;  // 10-dim
  FeatureStats ego_stats;  // 5-dim

  int gru_input() const { return config.box_dim + config.ego_dim + config.mfeat_dim; }
  int clstm_input() const { return config.mask_channels + config.bfeat_channels; }

  static ThingsModel init(const ThingsConfig& cfg, uint64_t seed) {
    cfg.validate();
    ThingsModel m;
    m.config = cfg;
    Rng rng = Rng(seed).fork(401);
    auto bound = [](int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
    auto make_gru = [&](const std::string& prefix, int in, int hid) {
      const double b = bound(in + hid);
      for (const char* gate : {"wz", "wr", "wn"})
        m.params.create_uniform(prefix + "." + gate, Shape{in + hid, hid}, b, rng);
      for (const char* gate : {"bz", "br", "bn"}) m.params.create(prefix + "." + gate,
                                                                  Shape{hid});
    };
    make_gru("things.enc_gru", m.gru_input(), cfg.gru_hidden);
    make_gru("things.dec_gru", m.gru_input(), cfg.gru_hidden);
    const int ch = cfg.convlstm_channels;
    m.params.create_uniform("things.enc_clstm.k", Shape{4 * ch, m.clstm_input() + ch, 3, 3},
                            bound((m.clstm_input() + ch) * 9), rng);
    m.params.create("things.enc_clstm.b", Shape{4 * ch});
    m.params.create_uniform("things.dec_clstm.k", Shape{4 * ch, m.clstm_input() + ch, 3, 3},
                            bound((m.clstm_input() + ch) * 9), rng);
    m.params.create("things.dec_clstm.b", Shape{4 * ch});

    m.params.create_uniform("things.mfeat.conv.w",
                            Shape{cfg.mfeat_hidden, cfg.mask_channels, 1, 1},
                            bound(cfg.mask_channels), rng);
    m.params.create("things.mfeat.conv.b", Shape{cfg.mfeat_hidden});
    const int mflat = cfg.mfeat_hidden * cfg.mask_h * cfg.mask_w;
    m.params.create_uniform("things.mfeat.lin.w", Shape{mflat, cfg.mfeat_dim},
                            bound(mflat), rng);
    m.params.create("things.mfeat.lin.b", Shape{cfg.mfeat_dim});

    m.params.create_uniform("things.bfeat.w", Shape{cfg.gru_hidden, cfg.bfeat_channels},
                            bound(cfg.gru_hidden), rng);
    m.params.create("things.bfeat.b", Shape{cfg.bfeat_channels});

    auto make_mlp = [&](const std::string& prefix) {
      m.params.create_uniform(prefix + ".l1.w", Shape{cfg.gru_hidden, cfg.gru_hidden},
                              bound(cfg.gru_hidden), rng);
      m.params.create(prefix + ".l1.b", Shape{cfg.gru_hidden});
      m.params.create_uniform(prefix + ".l2.w", Shape{cfg.gru_hidden, cfg.box_dim},
                              bound(cfg.gru_hidden), rng);
      m.params.create(prefix + ".l2.b", Shape{cfg.box_dim});
    };
    make_mlp("things.encb");
    make_mlp("things.bbox");

    m.params.create_uniform("things.encm.w", Shape{cfg.mask_channels, ch, 1, 1}, bound(ch),
                            rng);
    m.params.create("things.encm.b", Shape{cfg.mask_channels});
    m.params.create_uniform("things.fmask.w", Shape{cfg.mask_channels, ch, 1, 1}, bound(ch),
                            rng);
    m.params.create("things.fmask.b", Shape{cfg.mask_channels});

    m.params.create_uniform("things.maskout.c1.w", Shape{16, cfg.mask_channels, 3, 3},
                            bound(cfg.mask_channels * 9), rng);
    m.params.create("things.maskout.c1.b", Shape{16});
    m.params.create_uniform("things.maskout.c2.w", Shape{16, 16, 3, 3}, bound(16 * 9), rng);
    m.params.create("things.maskout.c2.b", Shape{16});
    m.params.create_uniform("things.maskout.out.w", Shape{cfg.thing_classes, 16, 1, 1},
                            bound(16), rng);
    m.params.create("things.maskout.out.b", Shape{cfg.thing_classes});
    return m;
  }

  GruParams gru(const std::string& prefix) const {
    return {params.at(prefix + ".wz"), params.at(prefix + ".bz"),
            params.at(prefix + ".wr"), params.at(prefix + ".br"),
            params.at(prefix + ".wn"), params.at(prefix + ".bn")};
  }

  ConvLstmParams clstm(const std::string& prefix) const {
    return {params.at(prefix + ".k"), params.at(prefix + ".b")};
  }

  // ---- feature plumbing -------------------------------------------------

  Tensor box_input(const TrackFrame& f) const {
    if (!f.present) return Tensor(Shape{1, config.box_dim}, 0.0);
    auto arr = f.box.to_array();
    std::vector<double> v = box_stats.normalize({arr.begin(), arr.end()});
    return Tensor(Shape{1, config.box_dim}, std::move(v));
  }

  Tensor mask_input(const TrackFrame& f) const {
    if (!f.present)
      return Tensor(Shape{1, config.mask_channels, config.mask_h, config.mask_w}, 0.0);
    if (f.mask.c != config.mask_channels || f.mask.h != config.mask_h ||
        f.mask.w != config.mask_w)
      throw DimError(str("things: mask feature is ", f.mask.c, "x", f.mask.h, "x",
                         f.mask.w, ", model expects ", config.mask_channels, "x",
                         config.mask_h, "x", config.mask_w));
    return Tensor(Shape{1, config.mask_channels, config.mask_h, config.mask_w}, f.mask.v);
  }

  Tensor ego_input(const EgoVector& e) const {
    auto arr = e.to_array();
    std::vector<double> v = ego_stats.normalize({arr.begin(), arr.end()});
    return Tensor(Shape{1, config.ego_dim}, std::move(v));
  }

  // ---- submodules --------------------------------------------------------

  // f_mfeat: 1x1 conv + ReLU, flattened through a linear layer.
  Tensor mfeat(const Tensor& r) const {
    Tensor h = relu(conv2d(r, params.at("things.mfeat.conv.w"),
                           params.at("things.mfeat.conv.b")));
    Tensor flat = reshape(h, Shape{1, config.mfeat_hidden * config.mask_h * config.mask_w});
    return matmul_add(flat, params.at("things.mfeat.lin.w"), params.at("things.mfeat.lin.b"));
  }

  // f_bfeat: linear map of the GRU state, broadcast across the mask grid.
  Tensor bfeat(const Tensor& h_b) const {
    Tensor v = matmul_add(h_b, params.at("things.bfeat.w"), params.at("things.bfeat.b"));
    return broadcast_spatial(v, config.mask_h, config.mask_w);
  }

  Tensor mlp(const std::string& prefix, const Tensor& h) const {
    Tensor h1 = relu(matmul_add(h, params.at(prefix + ".l1.w"), params.at(prefix + ".l1.b")));
    return matmul_add(h1, params.at(prefix + ".l2.w"), params.at(prefix + ".l2.b"));
  }

  Tensor conv1x1(const std::string& prefix, const Tensor& x) const {
    return conv2d(x, params.at(prefix + ".w"), params.at(prefix + ".b"));
  }

  ThingsState zero_state() const {
    ThingsState s;
    s.h_b = Tensor(Shape{1, config.gru_hidden}, 0.0);
    s.m.h = Tensor(Shape{1, config.convlstm_channels, config.mask_h, config.mask_w}, 0.0);
    s.m.c = Tensor(Shape{1, config.convlstm_channels, config.mask_h, config.mask_w}, 0.0);
    s.x_hat = Tensor(Shape{1, config.box_dim}, 0.0);
    s.r_hat = Tensor(Shape{1, config.mask_channels, config.mask_h, config.mask_w}, 0.0);
    return s;
  }

  // ---- encoder / decoder ---------------------------------------------------

  // Consumes the observed steps (absent frames feed zeros) paired with
  // the ego vector describing the motion out of each step, then emits
  // the filled-in estimate for the last observed step.
  ThingsState encode(const Track& obs, const std::vector<EgoVector>& ego) const {
    if (obs.frames.empty()) throw UsageError("things encode: empty track window");
    if (ego.size() != obs.frames.size())
      throw UsageError(str("things encode: ", obs.frames.size(), " observed steps but ",
                           ego.size(), " ego vectors"));
    ThingsState s = zero_state();
    const GruParams g = gru("things.enc_gru");
    const ConvLstmParams cl = clstm("things.enc_clstm");
    for (size_t t = 0; t < obs.frames.size(); ++t) {
      Tensor x = box_input(obs.frames[t]);
      Tensor r = mask_input(obs.frames[t]);
      Tensor o = ego_input(ego[t]);
      Tensor gin = concat_dim1(concat_dim1(x, o), mfeat(r));
      s.h_b = gru_cell(g, gin, s.h_b);
      s.m = convlstm_cell(cl, concat_dim1(r, bfeat(s.h_b)), s.m);
    }
    s.x_hat = mlp("things.encb", s.h_b);
    s.r_hat = conv1x1("things.encm", s.m.h);
    return s;
  }

  // Runs the four decoder equations once per ego vector, advancing the
  // state in place and returning every intermediate prediction.
  std::vector<ThingsPrediction> decode(ThingsState& s,
                                       const std::vector<EgoVector>& ego_future) const {
    const GruParams g = gru("things.dec_gru");
    const ConvLstmParams cl = clstm("things.dec_clstm");
    std::vector<ThingsPrediction> out;
    for (const EgoVector& e : ego_future) {
      Tensor o = ego_input(e);
      Tensor gin = concat_dim1(concat_dim1(s.x_hat, o), mfeat(s.r_hat));
      s.h_b = gru_cell(g, gin, s.h_b);
      s.x_hat = add(s.x_hat, mlp("things.bbox", s.h_b));
      s.m = convlstm_cell(cl, concat_dim1(s.r_hat, bfeat(s.h_b)), s.m);
      s.r_hat = conv1x1("things.fmask", s.m.h);
      out.push_back({s.x_hat, s.r_hat});
    }
    return out;
  }

  // Encoder estimate followed by F decoder steps.  `track` covers the
  // whole schedule (input_steps observations plus F >= 1 targets);
  // `ego` has one entry per schedule interval.  The last observed
  // interval's ego vector feeds both the encoder's final step and the
  // decoder's first step.
  std::vector<ThingsPrediction> rollout(const Track& track,
                                        const std::vector<EgoVector>& ego,
                                        int input_steps) const {
    const int total = static_cast<int>(track.frames.size());
    if (input_steps < 1 || input_steps >= total)
      throw UsageError(str("things rollout: ", input_steps, " input steps for a ", total,
                           "-frame schedule (need at least one forecast step)"));
    if (ego.size() + 1 != static_cast<size_t>(total))
      throw UsageError(str("things rollout: ", ego.size(), " ego vectors for ", total,
                           " schedule frames"));
    Track obs;
    obs.instance_id = track.instance_id;
    obs.class_id = track.class_id;
    obs.frames.assign(track.frames.begin(), track.frames.begin() + input_steps);
    std::vector<EgoVector> ego_in(ego.begin(), ego.begin() + input_steps);
    ThingsState s = encode(obs, ego_in);
    std::vector<ThingsPrediction> preds{{s.x_hat, s.r_hat}};
    std::vector<EgoVector> ego_fut(ego.begin() + input_steps - 1, ego.end());
    std::vector<ThingsPrediction> dec = decode(s, ego_fut);
    preds.insert(preds.end(), dec.begin(), dec.end());
    return preds;
  }

  // ---- mask synthesis ------------------------------------------------------

  // MaskOut head: two 3x3 conv layers with ReLU, upsampling to the
  // output grid, then a 1x1 conv producing one logit map per thing
  // class.  Returns [1, thing_classes, mask_out, mask_out].
  Tensor maskout_logits(const Tensor& r_hat) const {
    Tensor h1 = relu(conv2d(r_hat, params.at("things.maskout.c1.w"),
                            params.at("things.maskout.c1.b")));
    Tensor h2 = relu(conv2d(h1, params.at("things.maskout.c2.w"),
                            params.at("things.maskout.c2.b")));
    Tensor up = bilinear_resize(h2, config.mask_out, config.mask_out);
    return conv2d(up, params.at("things.maskout.out.w"),
                  params.at("things.maskout.out.b"));
  }

  // Probability grid for one thing class (sigmoid of the selected
  // logit channel).
  Tensor mask_probs(const Tensor& r_hat, int thing_class) const {
    if (thing_class < 0 || thing_class >= config.thing_classes)
      throw UsageError(str("mask_probs: thing class ", thing_class, " outside [0,",
                           config.thing_classes, ")"));
    Tensor probs = sigmoid(slice_dim1(maskout_logits(r_hat), thing_class, thing_class + 1));
    return reshape(probs, Shape{config.mask_out, config.mask_out});
  }

  BoxFeature denormalize_box(const Tensor& x_hat) const {
    std::vector<double> raw =
        box_stats.denormalize({x_hat.values().begin(), x_hat.values().end()});
    std::array<double, 10> arr{};
    for (size_t i = 0; i < 10 && i < raw.size(); ++i) arr[i] = raw[i];
    return BoxFeature::from_array(arr);
  }
};

// Rasterized instance forecast: binary mask painted into the predicted
// box, plus the depth estimate and a confidence score.
struct MaskHeadResult {
  Mask mask;
  double depth = 0.0;
  double confidence = 0.0;
  BoxFeature box;
};

// Paints the MaskOut probabilities into the clipped predicted box:
// bilinear resize to the box size, threshold at 0.5, zeros elsewhere.
inline MaskHeadResult mask_head(const ThingsModel& model, const Tensor& r_hat,
                                const BoxFeature& box, int thing_class, int frame_h,
                                int frame_w) {
  MaskHeadResult out;
  out.mask = Mask(frame_h, frame_w, 0);
  out.box = box;
  out.depth = box.d;
  Tensor probs = model.mask_probs(r_hat, thing_class);
  double acc = 0.0;
  for (double v : probs.values()) acc += v;
  out.confidence = acc / static_cast<double>(probs.size());

  long y0 = std::lround(box.cy - 0.5 * box.h), y1 = std::lround(box.cy + 0.5 * box.h);
  long x0 = std::lround(box.cx - 0.5 * box.w), x1 = std::lround(box.cx + 0.5 * box.w);
  y0 = std::max(y0, 0L);
  x0 = std::max(x0, 0L);
  y1 = std::min(y1, static_cast<long>(frame_h));
  x1 = std::min(x1, static_cast<long>(frame_w));
  if (y1 <= y0 || x1 <= x0) return out;  // empty after clipping

  const int g = model.config.mask_out;
  Tensor grid = reshape(probs, Shape{1, g, g});
  Tensor sized = bilinear_resize(grid, static_cast<int>(y1 - y0), static_cast<int>(x1 - x0));
  for (long y = y0; y < y1; ++y)
    for (long x = x0; x < x1; ++x) {
      double p = sized[(y - y0) * (x1 - x0) + (x - x0)];
      if (p >= 0.5) out.mask.at(static_cast<int>(y), static_cast<int>(x)) = 1;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

struct ThingsTargetStep {
  bool present = false;
  Tensor box;   // [1, box_dim] normalized, constant
  Tensor mask;  // [1, Cf, h, w]
};

// Presence-weighted mix of box SmoothL1 and mask-feature MSE, averaged
// over the supervised steps.  No supervised step -> nothing to learn
// from this instance (signalled as empty).
inline std::optional<Tensor> things_loss(const std::vector<ThingsPrediction>& preds,
                                         const std::vector<ThingsTargetStep>& targets,
                                         double lambda = 0.1) {
  if (preds.size() != targets.size())
    throw UsageError(str("things_loss: ", preds.size(), " predictions vs ", targets.size(),
                         " targets"));
  int z = 0;
  for (const ThingsTargetStep& t : targets) z += t.present ? 1 : 0;
  if (z == 0) return std::nullopt;
  Tensor acc = Tensor::scalar(0.0);
  for (size_t i = 0; i < preds.size(); ++i) {
    if (!targets[i].present) continue;
    Tensor step = add(scale(smooth_l1_loss(preds[i].x, targets[i].box), lambda),
                      mse_loss(preds[i].r, targets[i].mask));
    acc = add(acc, step);
  }
  return scale(acc, 1.0 / static_cast<double>(z));
}

// Target tensors for the supervised steps (the last observed step plus
// every decode step) of a full-schedule track.
inline std::vector<ThingsTargetStep> things_targets(const ThingsModel& model,
                                                    const Track& track, int input_steps) {
  if (input_steps < 1 || input_steps > static_cast<int>(track.frames.size()))
    throw UsageError(str("things_targets: ", input_steps, " input steps for a ",
                         track.frames.size(), "-frame track"));
  std::vector<ThingsTargetStep> out;
  for (size_t s = static_cast<size_t>(input_steps) - 1; s < track.frames.size(); ++s) {
    const TrackFrame& f = track.frames[s];
    ThingsTargetStep t;
    t.present = f.present;
    if (f.present) {
      t.box = model.box_input(f);
      t.mask = model.mask_input(f);
    }
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// MaskOut pretraining
// ---------------------------------------------------------------------------

// BCE between the class channel of the MaskOut head and a target
// occupancy grid (fractions in [0,1], mask_out x mask_out).
inline Tensor maskout_loss(const ThingsModel& model, const Tensor& r_hat, int thing_class,
                           const std::vector<double>& target_grid) {
  const int g = model.config.mask_out;
  if (static_cast<int>(target_grid.size()) != g * g)
    throw DimError(str("maskout_loss: target has ", target_grid.size(), " cells, expected ",
                       g * g));
  if (thing_class < 0 || thing_class >= model.config.thing_classes)
    throw UsageError(str("maskout_loss: thing class ", thing_class, " outside [0,",
                         model.config.thing_classes, ")"));
  Tensor logits = slice_dim1(model.maskout_logits(r_hat), thing_class, thing_class + 1);
  return bce_logits_loss(reshape(logits, Shape{1, g * g}), target_grid);
}

// Freezes (or thaws) the MaskOut parameters so forecaster training
// leaves the pretrained mask synthesis untouched.
inline void freeze_maskout(ThingsModel& model, bool frozen = true) {
  for (const char* n : {"c1.w", "c1.b", "c2.w", "c2.b", "out.w", "out.b"})
    model.params.at(std::string("things.maskout.") + n).set_requires_grad(!frozen);
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

// Extrapolates the last observed box linearly with its own deltas and
// freezes the mask feature.  Returns F forecast steps.
inline std::vector<std::pair<BoxFeature, MaskFeature>> linear_baseline(const Track& obs,
                                                                       int f_steps) {
  const TrackFrame* last = nullptr;
  for (const TrackFrame& f : obs.frames)
    if (f.present) last = &f;
  if (last == nullptr)
    throw UsageError("linear_baseline: no present frame in the observation window");
  std::vector<std::pair<BoxFeature, MaskFeature>> out;
  for (int k = 1; k <= f_steps; ++k) {
    BoxFeature b = last->box;
    b.cx += k * last->box.dcx;
    b.cy += k * last->box.dcy;
    b.w = std::max(0.0, b.w + k * last->box.dw);
    b.h = std::max(0.0, b.h + k * last->box.dh);
    b.d = std::max(1e-3, b.d + k * last->box.dd);
    out.emplace_back(b, last->mask);
  }
  return out;
}

// Frame-T ground truth reused verbatim as the forecast.
inline PanopticMap copy_last_baseline(const SceneSequence& seq, int frame) {
  return seq.panoptic(frame);
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline void save_things(const ThingsModel& m, const std::string& path) {
  std::map<std::string, Tensor> meta;
  meta.emplace("meta.things.config", Tensor(Shape{12}, m.config.to_doubles()));
  auto stat = [&](const std::string& name, const std::vector<double>& v) {
    meta.emplace(name, Tensor(Shape{static_cast<int>(v.size())}, v));
  };
  stat("meta.things.box_mean", m.box_stats.mean);
  stat("meta.things.box_std", m.box_stats.stdev);
  stat("meta.things.ego_mean", m.ego_stats.mean);
  stat("meta.things.ego_std", m.ego_stats.stdev);
  save_weights(m.params, path, meta);
}

inline ThingsModel load_things(const std::string& path) {
  std::map<std::string, Tensor> loaded = load_tensors(path);
  auto need = [&](const std::string& name) -> const Tensor& {
    auto it = loaded.find(name);
    if (it == loaded.end())
      throw FormatError(str("things weights: missing tensor '", name, "'"));
    return it->second;
  };
  ThingsConfig cfg = ThingsConfig::from_doubles(need("meta.things.config").values());
  ThingsModel m = ThingsModel::init(cfg, 0);
  load_params_into(m.params, loaded, "things weights");
  m.box_stats.mean = need("meta.things.box_mean").values();
  m.box_stats.stdev = need("meta.things.box_std").values();
  m.ego_stats.mean = need("meta.things.ego_mean").values();
  m.ego_stats.stdev = need("meta.things.ego_std").values();
  return m;
}

}  // namespace panofc
