#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "panofc/config.hpp"
#include "panofc/metrics.hpp"
#include "panofc/odom.hpp"
#include "panofc/panoptic.hpp"
#include "panofc/scenesim.hpp"
#include "panofc/stuff.hpp"
#include "panofc/things.hpp"

namespace panofc {

// ---------------------------------------------------------------------------
// Dataset generation and on-disk layout
// ---------------------------------------------------------------------------

struct Dataset {
  std::vector<SceneSequence> train;
  std::vector<SceneSequence> val;
};

inline SceneSpec sequence_spec(const RunConfig& cfg, bool val, int index) {
  SceneSpec spec = cfg.scene;
  spec.seed = Rng(cfg.run_seed).fork(val ? 12 : 11).fork(static_cast<uint64_t>(index))
                  .next_u64();
  return spec;
}

inline Dataset generate_dataset(const RunConfig& cfg) {
  cfg.validate();
  Dataset out;
  for (int i = 0; i < cfg.train_sequences; ++i)
    out.train.push_back(generate(sequence_spec(cfg, false, i)));
  for (int i = 0; i < cfg.val_sequences; ++i)
    out.val.push_back(generate(sequence_spec(cfg, true, i)));
  return out;
}

// Writes train_###.pfd / val_###.pfd plus a manifest listing them.
inline void write_dataset(const Dataset& data, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(str("cannot create dataset directory '", dir, "': ", ec.message()));
  auto name = [](const char* split, size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%03zu.pfd", split, i);
    return std::string(buf);
  };
  std::string manifest = "PFM1\n";
  for (size_t i = 0; i < data.train.size(); ++i) {
    save_sequence(data.train[i], (fs::path(dir) / name("train", i)).string());
    manifest += "train " + name("train", i) + "\n";
  }
  for (size_t i = 0; i < data.val.size(); ++i) {
    save_sequence(data.val[i], (fs::path(dir) / name("val", i)).string());
    manifest += "val " + name("val", i) + "\n";
  }
  std::ofstream out(fs::path(dir) / "manifest.txt", std::ios::binary);
  if (!out) throw IoError(str("cannot write manifest in '", dir, "'"));
  out << manifest;
}

inline Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "manifest.txt");
  if (!in) throw IoError(str("cannot read '", dir, "/manifest.txt'"));
  std::string header;
  std::getline(in, header);
  if (header != "PFM1") throw FormatError(str("manifest in '", dir, "': bad header"));
  Dataset out;
  std::string split, file;
  while (in >> split >> file) {
    SceneSequence seq = load_sequence((fs::path(dir) / file).string());
    if (split == "train") out.train.push_back(std::move(seq));
    else if (split == "val") out.val.push_back(std::move(seq));
    else throw FormatError(str("manifest in '", dir, "': unknown split '", split, "'"));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared schedule plumbing
// ---------------------------------------------------------------------------

inline TrackOptions track_options(const RunConfig& cfg, const std::vector<int>& frames,
                                  uint64_t stream) {
  TrackOptions opt;
  opt.frame_indices = frames;
  opt.dropout_rate = cfg.dropout_rate;
  opt.feature_noise = cfg.feature_noise;
  opt.seed = Rng(cfg.run_seed).fork(21).fork(stream).next_u64();
  opt.mask_channels = cfg.mask_channels;
  opt.mask_h = cfg.mask_grid;
  opt.mask_w = cfg.mask_grid;
  return opt;
}

// Ego vector for one schedule interval from per-frame readings
// starting at the interval's first frame.
inline EgoVector ego_from_readings(const std::vector<Odometry>& odo, int f0, int f1) {
  if (f0 < 0 || f1 <= f0 || f1 > static_cast<int>(odo.size()))
    throw UsageError(str("ego_from_readings: bad interval ", f0, " -> ", f1));
  PlanarPose acc{};
  for (int f = f0; f < f1; ++f) acc = compose(acc, step_pose(odo[static_cast<size_t>(f)]));
  EgoVector e;
  e.v = odo[static_cast<size_t>(f0)].v;
  e.theta = odo[static_cast<size_t>(f0)].yaw_rate * odo[static_cast<size_t>(f0)].dt;
  e.x_next = acc.x;
  e.y_next = acc.y;
  e.theta_next = acc.theta;
  return e;
}

// ---------------------------------------------------------------------------
// Training drivers
// ---------------------------------------------------------------------------

struct TrainLog {
  std::vector<double> losses;

  std::string text() const {
    std::string out;
    for (size_t i = 0; i < losses.size(); ++i)
      out += str("step ", i, " loss ", losses[i], "\n");
    return out;
  }
};

// Fits normalization stats, pretrains the mask synthesis head against
// box-cropped ground-truth masks, freezes it, then trains the
// encoder/decoder on full-schedule tracks.
inline ThingsModel train_things_pipeline(const RunConfig& cfg,
                                         const std::vector<SceneSequence>& seqs,
                                         TrainLog* log = nullptr) {
  cfg.validate();
  if (seqs.empty()) throw UsageError("things training: empty dataset");
  ThingsModel model = ThingsModel::init(cfg.things_config(), cfg.run_seed);

  const std::vector<int> schedule = cfg.schedule_frames();
  struct SeqData {
    std::vector<Track> tracks;
    std::vector<EgoVector> ego;
  };
  std::vector<SeqData> data;
  std::vector<std::vector<double>> box_rows, ego_rows;
  for (size_t i = 0; i < seqs.size(); ++i) {
    SeqData d;
    d.tracks = derive_tracks(seqs[i], track_options(cfg, schedule, i));
    d.ego = ego_vectors(seqs[i], schedule);
    for (const Track& t : d.tracks)
      for (const TrackFrame& f : t.frames)
        if (f.present) {
          auto a = f.box.to_array();
          box_rows.push_back({a.begin(), a.end()});
        }
    for (const EgoVector& e : d.ego) {
      auto a = e.to_array();
      ego_rows.push_back({a.begin(), a.end()});
    }
    data.push_back(std::move(d));
  }
  if (box_rows.empty()) throw UsageError("things training: no visible instances in dataset");
  model.box_stats = FeatureStats::fit(box_rows);
  model.ego_stats = FeatureStats::fit(ego_rows);

  // Phase A: mask synthesis head on ground-truth masks.  Each sample
  // pairs a mask feature with the box-cropped occupancy grid it should
  // reproduce.
  struct MaskSample {
    Tensor r;
    int local_class = 0;
    std::vector<double> target;
  };
  std::vector<MaskSample> samples;
  for (const SceneSequence& seq : seqs) {
    for (int f : cfg.input_frames()) {
      for (const InstanceMask& im : seq.frames[static_cast<size_t>(f)].instances) {
        int y0 = seq.h(), y1 = -1, x0 = seq.w(), x1 = -1;
        for (int y = 0; y < seq.h(); ++y)
          for (int x = 0; x < seq.w(); ++x)
            if (im.mask.at(y, x)) {
              y0 = std::min(y0, y);
              y1 = std::max(y1, y);
              x0 = std::min(x0, x);
              x1 = std::max(x1, x);
            }
        if (y1 < 0) continue;
        MaskSample s;
        MaskFeature mf = make_mask_feature(im.mask, y0, x0, y1 + 1, x1 + 1,
                                           cfg.mask_channels, cfg.mask_grid, cfg.mask_grid);
        s.r = Tensor(Shape{1, cfg.mask_channels, cfg.mask_grid, cfg.mask_grid}, mf.v);
        s.local_class = im.class_id - cfg.scene.stuff_classes;
        s.target = box_mean_resample(im.mask, y0, x0, y1 + 1, x1 + 1, cfg.mask_out,
                                     cfg.mask_out);
        if (s.local_class >= 0 && s.local_class < cfg.scene.thing_classes)
          samples.push_back(std::move(s));
        if (samples.size() >= 64) break;
      }
      if (samples.size() >= 64) break;
    }
    if (samples.size() >= 64) break;
  }
  AdamConfig ac;
  ac.lr = cfg.lr;
  ac.clip_norm = cfg.clip_norm;
  if (!samples.empty()) {
    for (int step = 0; step < cfg.maskout_steps; ++step) {
      model.params.zero_grad();
      Tensor total = Tensor::scalar(0.0);
      for (const MaskSample& s : samples)
        total = add(total, maskout_loss(model, s.r, s.local_class, s.target));
      total = scale(total, 1.0 / static_cast<double>(samples.size()));
      total.backward();
      adam_step(model.params, ac);
    }
  }
  freeze_maskout(model);

  // Phase B: encoder/decoder on rollout losses, round-robin batches.
  for (int step = 0; step < cfg.things_steps; ++step) {
    model.params.zero_grad();
    Tensor total = Tensor::scalar(0.0);
    int contributing = 0;
    for (int b = 0; b < cfg.batch; ++b) {
      const SeqData& d = data[(static_cast<size_t>(step) * cfg.batch + b) % data.size()];
      for (const Track& t : d.tracks) {
        std::vector<ThingsPrediction> preds = model.rollout(t, d.ego, cfg.inputs);
        std::optional<Tensor> loss =
            things_loss(preds, things_targets(model, t, cfg.inputs), cfg.lambda);
        if (!loss) continue;
        total = add(total, *loss);
        ++contributing;
      }
    }
    if (contributing == 0) {
      if (log) log->losses.push_back(0.0);
      continue;
    }
    total = scale(total, 1.0 / static_cast<double>(contributing));
    if (log) log->losses.push_back(total.value());
    total.backward();
    adam_step(model.params, ac);
  }
  return model;
}

// Background projections from every input frame to the target frame.
// `future_steps` supplies the camera motion for intervals past the
// last input (ground truth in active mode, forecast in passive mode).
inline std::vector<SparseProjection> project_inputs(
    const RunConfig& cfg, const SceneSequence& seq,
    const std::vector<RigidTransform>& future_steps) {
  const int last = cfg.last_input_frame();
  const int target = cfg.target_frame();
  if (static_cast<int>(future_steps.size()) != target - last)
    throw UsageError(str("project_inputs: ", future_steps.size(), " future steps, need ",
                         target - last));
  std::vector<RigidTransform> steps;
  for (int f = 0; f < last; ++f) steps.push_back(seq.step_cam[static_cast<size_t>(f)]);
  steps.insert(steps.end(), future_steps.begin(), future_steps.end());

  std::vector<SparseProjection> projs;
  for (int f : cfg.input_frames()) {
    RigidTransform h = chain(std::span<const RigidTransform>(
        steps.data() + f, static_cast<size_t>(target - f)));
    const SceneFrame& fr = seq.frames[static_cast<size_t>(f)];
    projs.push_back(project_background(fr.semantics, fr.depth, seq.intrinsics, h,
                                       seq.background(f)));
  }
  return projs;
}

// Trains the refinement net on ground-truth-motion projections,
// supervised by the target frame's background semantics.
inline StuffRefiner train_stuff_pipeline(const RunConfig& cfg,
                                         const std::vector<SceneSequence>& seqs,
                                         TrainLog* log = nullptr) {
  cfg.validate();
  if (seqs.empty()) throw UsageError("stuff training: empty dataset");
  StuffRefiner refiner =
      StuffRefiner::init(cfg.scene.stuff_classes, cfg.inputs, cfg.run_seed, cfg.stuff_hidden);
  refiner.depth_scale = 1.0 / cfg.scene.depth_max;

  const int last = cfg.last_input_frame();
  const int target = cfg.target_frame();
  struct Example {
    std::vector<SparseProjection> projs;
    SemanticMap target_sem;
    Mask fg;
  };
  std::vector<Example> examples;
  for (const SceneSequence& seq : seqs) {
    std::vector<RigidTransform> future(seq.step_cam.begin() + last,
                                       seq.step_cam.begin() + target);
    Example e{project_inputs(cfg, seq, future),
              seq.frames[static_cast<size_t>(target)].semantics, seq.foreground(target)};
    examples.push_back(std::move(e));
  }

  AdamConfig ac;
  ac.lr = cfg.lr;
  ac.clip_norm = cfg.clip_norm;
  for (int step = 0; step < cfg.stuff_steps; ++step) {
    refiner.params.zero_grad();
    Tensor total = Tensor::scalar(0.0);
    for (int b = 0; b < cfg.batch; ++b) {
      const Example& e =
          examples[(static_cast<size_t>(step) * cfg.batch + b) % examples.size()];
      total = add(total, stuff_loss(refiner.logits(e.projs), e.target_sem, e.fg));
    }
    total = scale(total, 1.0 / static_cast<double>(cfg.batch));
    if (log) log->losses.push_back(total.value());
    total.backward();
    adam_step(refiner.params, ac);
  }
  return refiner;
}

inline OdomModel train_odom_pipeline(const RunConfig& cfg,
                                     const std::vector<SceneSequence>& seqs,
                                     TrainLog* log = nullptr) {
  cfg.validate();
  if (seqs.empty()) throw UsageError("odometry training: empty dataset");
  if (cfg.last_input_frame() < 1)
    throw UsageError("odometry training: need at least two input frames (horizon.inputs "
                     "and horizon.stride too small)");
  std::vector<std::vector<Odometry>> dataset;
  for (const SceneSequence& seq : seqs) {
    std::vector<Odometry> readings;
    for (const SceneFrame& f : seq.frames) readings.push_back(f.odom);
    dataset.push_back(std::move(readings));
  }
  OdomModel model = OdomModel::init(cfg.odom_hidden, cfg.run_seed);
  OdomTrainConfig oc;
  oc.input_steps = cfg.last_input_frame();
  oc.forecast_steps = cfg.forecast_frames;
  oc.steps = cfg.odom_steps;
  oc.lr = cfg.lr;
  oc.clip_norm = cfg.clip_norm;
  std::vector<double> losses = train_odom(model, dataset, oc);
  if (log) log->losses = std::move(losses);
  return model;
}

// ---------------------------------------------------------------------------
// Forecasting
// ---------------------------------------------------------------------------

enum class BaselineMode { none, copy_last, linear };

struct PipelineModels {
  std::optional<ThingsModel> things;
  std::optional<StuffRefiner> stuff;
  std::optional<OdomModel> odom;
};

struct SequenceForecast {
  PanopticMap map;
  std::vector<InstanceForecast> instances;  // as aggregated (ids 1..N)
};

namespace detail {

// Per-frame odometry covering intervals [0, target): ground truth up to
// the last input, then ground truth (active) or model forecast
// (passive).
inline std::vector<Odometry> future_odometry(const RunConfig& cfg, const SceneSequence& seq,
                                             const PipelineModels& models) {
  const int last = cfg.last_input_frame();
  const int target = cfg.target_frame();
  std::vector<Odometry> odo;
  for (int f = 0; f < last; ++f) odo.push_back(seq.frames[static_cast<size_t>(f)].odom);
  if (cfg.odometry == OdomMode::active) {
    for (int f = last; f < target; ++f) odo.push_back(seq.frames[static_cast<size_t>(f)].odom);
    return odo;
  }
  if (!models.odom)
    throw UsageError("forecast: passive odometry needs odometry weights (--odom)");
  if (last < 1)
    throw UsageError("forecast: passive odometry needs at least one observed interval");
  std::vector<Odometry> observed(odo.begin(), odo.end());
  std::vector<double> dts(static_cast<size_t>(target - last), cfg.scene.dt);
  std::vector<Odometry> preds = models.odom->forecast(observed, dts);
  odo.insert(odo.end(), preds.begin(), preds.end());
  return odo;
}

inline SemanticMap background_fill(const SceneSequence& seq, int frame) {
  const SceneFrame& fr = seq.frames[static_cast<size_t>(frame)];
  SparseProjection proj(fr.semantics.h(), fr.semantics.w());
  Mask bg = seq.background(frame);
  for (int y = 0; y < bg.h(); ++y)
    for (int x = 0; x < bg.w(); ++x)
      if (bg.at(y, x)) {
        proj.cls.at(y, x) = fr.semantics.at(y, x);
        proj.depth.at(y, x) = fr.depth.at(y, x);
      }
  return fuse_and_refine({proj}, RefineMode::nearest_fill);
}

inline Mask translate_mask(const Mask& m, long dy, long dx) {
  Mask out(m.h(), m.w(), 0);
  for (int y = 0; y < m.h(); ++y)
    for (int x = 0; x < m.w(); ++x)
      if (m.at(y, x)) {
        long ny = y + dy, nx = x + dx;
        if (ny >= 0 && ny < m.h() && nx >= 0 && nx < m.w())
          out.at(static_cast<int>(ny), static_cast<int>(nx)) = 1;
      }
  return out;
}

}  // namespace detail

// Runs the full forecast for one sequence: things through the
// encoder/decoder, stuff through projection + refinement, aggregation
// by predicted depth.  Baselines replace the whole output (copy_last)
// or the instance forecasts (linear).
inline SequenceForecast forecast_sequence(const RunConfig& cfg, const SceneSequence& seq,
                                          const PipelineModels& models,
                                          BaselineMode baseline = BaselineMode::none,
                                          uint64_t track_stream = 0) {
  cfg.validate();
  const int last = cfg.last_input_frame();
  const int target = cfg.target_frame();
  if (static_cast<int>(seq.frames.size()) <= target)
    throw UsageError(str("forecast: sequence has ", seq.frames.size(),
                         " frames, horizon needs ", target + 1));

  if (baseline == BaselineMode::copy_last) {
    SequenceForecast out;
    out.map = seq.panoptic(last);
    for (const InstanceMask& im : seq.frames[static_cast<size_t>(last)].instances) {
      double depth = 0.0;
      std::vector<double> ds;
      for (int y = 0; y < seq.h(); ++y)
        for (int x = 0; x < seq.w(); ++x)
          if (im.mask.at(y, x))
            ds.push_back(seq.frames[static_cast<size_t>(last)].depth.at(y, x));
      depth = ds.empty() ? 1.0 : median(ds);
      out.instances.push_back({im.mask, im.class_id, depth, 1.0});
    }
    return out;
  }

  if (baseline == BaselineMode::linear) {
    const std::vector<int> in_frames = cfg.input_frames();
    std::vector<Track> tracks = derive_tracks(seq, track_options(cfg, in_frames, track_stream));
    std::vector<InstanceForecast> insts;
    for (const Track& t : tracks) {
      int last_present = -1;
      for (int i = 0; i < static_cast<int>(t.frames.size()); ++i)
        if (t.frames[static_cast<size_t>(i)].present) last_present = i;
      if (last_present < 0) continue;
      if (cfg.filter_last_frame_presence && last_present + 1 != cfg.inputs) continue;
      // Steps from the last present observation to the target frame, in
      // schedule units.
      const int steps = cfg.decoder_steps() + (cfg.inputs - 1 - last_present);
      auto preds = linear_baseline(t, steps);
      const BoxFeature& fut = preds.back().first;
      const TrackFrame& obs = t.frames[static_cast<size_t>(last_present)];
      const InstanceMask* im = nullptr;
      const SceneFrame& sf =
          seq.frames[static_cast<size_t>(in_frames[static_cast<size_t>(last_present)])];
      for (const InstanceMask& cand : sf.instances)
        if (cand.instance_id == t.instance_id) im = &cand;
      if (im == nullptr) continue;  // dropout hid it; nothing to paste
      Mask moved = detail::translate_mask(im->mask, std::lround(fut.cy - obs.box.cy),
                                          std::lround(fut.cx - obs.box.cx));
      insts.push_back({std::move(moved), t.class_id, std::max(fut.d, 1e-3), 1.0});
    }
    SequenceForecast out;
    out.instances = std::move(insts);
    out.map = aggregate(detail::background_fill(seq, last), out.instances);
    return out;
  }

  // Full pipeline.
  if (!models.things) throw UsageError("forecast: missing things weights (--things)");
  if (cfg.refine == RefineMode::learned && !models.stuff)
    throw UsageError("forecast: missing stuff weights (--stuff)");
  std::vector<Odometry> odo = detail::future_odometry(cfg, seq, models);

  // Stuff branch.
  std::vector<RigidTransform> future_steps;
  for (int f = last; f < target; ++f)
    future_steps.push_back(cfg.odometry == OdomMode::active
                               ? seq.step_cam[static_cast<size_t>(f)]
                               : camera_step(odo[static_cast<size_t>(f)], seq.extrinsics));
  std::vector<SparseProjection> projs = project_inputs(cfg, seq, future_steps);
  SemanticMap bg = fuse_and_refine(projs, cfg.refine,
                                   models.stuff ? &*models.stuff : nullptr);

  // Things branch.
  const ThingsModel& tm = *models.things;
  const std::vector<int> schedule = cfg.schedule_frames();
  std::vector<EgoVector> ego;
  for (size_t s = 0; s + 1 < schedule.size(); ++s)
    ego.push_back(ego_from_readings(odo, schedule[s], schedule[s + 1]));
  TrackOptions topt = track_options(cfg, cfg.input_frames(), track_stream);
  topt.mask_channels = tm.config.mask_channels;
  topt.mask_h = tm.config.mask_h;
  topt.mask_w = tm.config.mask_w;
  std::vector<Track> tracks = derive_tracks(seq, topt);
  std::vector<InstanceForecast> insts;
  for (const Track& t : tracks) {
    bool any = false;
    for (const TrackFrame& f : t.frames) any = any || f.present;
    if (!any) continue;
    if (cfg.filter_last_frame_presence && !t.frames.back().present) continue;
    ThingsState state =
        tm.encode(t, std::vector<EgoVector>(ego.begin(), ego.begin() + cfg.inputs));
    std::vector<EgoVector> fut(ego.begin() + cfg.inputs - 1, ego.end());
    tm.decode(state, fut);
    BoxFeature box = tm.denormalize_box(state.x_hat);
    const int local = t.class_id - seq.stuff_classes;
    MaskHeadResult mh = mask_head(tm, state.r_hat, box, local, seq.h(), seq.w());
    double depth = std::isfinite(box.d) ? std::max(box.d, 1e-3) : 1e-3;
    insts.push_back({std::move(mh.mask), t.class_id, depth, mh.confidence});
  }
  SequenceForecast out;
  out.instances = std::move(insts);
  out.map = aggregate(bg, out.instances);
  return out;
}

// ---------------------------------------------------------------------------
// Forecast serialization ("PFP1")
// ---------------------------------------------------------------------------

inline void save_forecast(const SequenceForecast& fc, const std::string& path) {
  BinaryWriter w;
  w.magic("PFP1");
  w.u32(static_cast<uint32_t>(fc.map.h()));
  w.u32(static_cast<uint32_t>(fc.map.w()));
  for (int16_t c : fc.map.cls.data())
    w.u16(c < 0 ? uint16_t{0xFFFF} : static_cast<uint16_t>(c));
  for (int32_t i : fc.map.inst.data()) w.u32(static_cast<uint32_t>(i));
  w.u32(static_cast<uint32_t>(fc.instances.size()));
  for (const InstanceForecast& inst : fc.instances) {
    w.u16(static_cast<uint16_t>(inst.class_id));
    w.f64(inst.depth);
    w.f64(inst.confidence);
    std::vector<uint32_t> runs = rle_encode(inst.mask);
    w.u32(static_cast<uint32_t>(runs.size()));
    for (uint32_t r : runs) w.u32(r);
  }
  w.write_file(path);
}

inline SequenceForecast load_forecast(const std::string& path) {
  BinaryReader r = BinaryReader::from_file(path);
  r.magic("PFP1", "forecast file");
  const int h = static_cast<int>(r.u32());
  const int w = static_cast<int>(r.u32());
  if (h < 1 || w < 1 || static_cast<long long>(h) * w > 100'000'000)
    throw FormatError(str("forecast file: bad size ", h, "x", w));
  SequenceForecast fc;
  fc.map = PanopticMap(h, w);
  for (int16_t& c : fc.map.cls.data()) {
    uint16_t v = r.u16();
    c = v == 0xFFFF ? kUnknownClass : static_cast<int16_t>(v);
  }
  for (int32_t& i : fc.map.inst.data()) i = static_cast<int32_t>(r.u32());
  const uint32_t n = r.u32();
  for (uint32_t i = 0; i < n; ++i) {
    InstanceForecast inst;
    inst.class_id = r.u16();
    inst.depth = r.f64();
    inst.confidence = r.f64();
    const uint32_t runs_n = r.u32();
    std::vector<uint32_t> runs;
    for (uint32_t k = 0; k < runs_n; ++k) runs.push_back(r.u32());
    inst.mask = rle_decode(h, w, runs);
    fc.instances.push_back(std::move(inst));
  }
  r.expect_end("forecast file");
  return fc;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalReport {
  PanopticScore pq;
  std::optional<double> miou_all;
  std::optional<double> miou_mo;  // thing classes only
  std::optional<double> ap;
  std::optional<double> ap50;
  int sequences = 0;
};

// Scores forecasts against the target frame of each ground-truth
// sequence.  With `filter_last_frame_presence`, ground-truth instances
// absent from the last input frame are removed before scoring (the
// forecaster skips their tracks under the same flag): their pixels
// become a void region excluded from both maps.
inline EvalReport evaluate_forecasts(const RunConfig& cfg,
                                     const std::vector<SequenceForecast>& preds,
                                     const std::vector<SceneSequence>& gt) {
  if (preds.size() != gt.size())
    throw UsageError(str("evaluate: ", preds.size(), " forecasts vs ", gt.size(),
                         " ground-truth sequences"));
  if (preds.empty()) throw UsageError("evaluate: nothing to score");
  const int last = cfg.last_input_frame();
  const int target = cfg.target_frame();

  MatchResult matches;
  MiouAccumulator sem;
  std::vector<ApPrediction> ap_preds;
  std::vector<ApGroundTruth> ap_gts;
  for (size_t i = 0; i < preds.size(); ++i) {
    const SceneSequence& seq = gt[i];
    if (static_cast<int>(seq.frames.size()) <= target)
      throw UsageError(str("evaluate: sequence ", i, " has ", seq.frames.size(),
                           " frames, horizon needs ", target + 1));
    PanopticMap gt_map = seq.panoptic(target);
    PanopticMap pred_map = preds[i].map;
    if (pred_map.h() != gt_map.h() || pred_map.w() != gt_map.w())
      throw UsageError(str("evaluate: sequence ", i, " forecast is ", pred_map.h(), "x",
                           pred_map.w(), ", ground truth is ", gt_map.h(), "x",
                           gt_map.w()));
    std::vector<const InstanceMask*> gt_insts;
    for (const InstanceMask& im : seq.frames[static_cast<size_t>(target)].instances)
      gt_insts.push_back(&im);
    if (cfg.filter_last_frame_presence) {
      std::vector<const InstanceMask*> kept;
      for (const InstanceMask* im : gt_insts) {
        bool seen = false;
        for (const InstanceMask& prev : seq.frames[static_cast<size_t>(last)].instances)
          seen = seen || prev.instance_id == im->instance_id;
        if (seen) kept.push_back(im);
        else {
          // The unseen instance's pixels become void: excluded from the
          // target and from the forecast so neither side is penalized.
          for (int y = 0; y < gt_map.h(); ++y)
            for (int x = 0; x < gt_map.w(); ++x)
              if (im->mask.at(y, x)) {
                gt_map.cls.at(y, x) = kUnknownClass;
                gt_map.inst.at(y, x) = 0;
                pred_map.cls.at(y, x) = kUnknownClass;
                pred_map.inst.at(y, x) = 0;
              }
        }
      }
      gt_insts = std::move(kept);
    }
    matches.merge(panoptic_match(pred_map, gt_map));
    sem.add(pred_map.cls, gt_map.cls);
    for (const InstanceForecast& inst : preds[i].instances)
      ap_preds.push_back({static_cast<int>(i), inst.class_id, inst.confidence, inst.mask});
    for (const InstanceMask* im : gt_insts)
      ap_gts.push_back({static_cast<int>(i), im->class_id, im->mask});
  }

  EvalReport report;
  report.sequences = static_cast<int>(preds.size());
  report.pq = panoptic_quality(matches, cfg.scene.stuff_classes);
  std::vector<int> all_classes, thing_classes;
  for (int c = 0; c < cfg.scene.stuff_classes + cfg.scene.thing_classes; ++c) {
    all_classes.push_back(c);
    if (c >= cfg.scene.stuff_classes) thing_classes.push_back(c);
  }
  report.miou_all = sem.mean_iou(all_classes);
  report.miou_mo = sem.mean_iou(thing_classes);
  ApScore ap = instance_ap(ap_preds, ap_gts);
  report.ap = ap.ap;
  report.ap50 = ap.ap50;
  return report;
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

// Flat JSON object: per-class pq/sq/rq/tp/fp/fn plus the aggregate rows
// and the semantic/instance scores (absent scores stored as null).
inline std::string report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["sequences"] = r.sequences;
  for (const auto& [cls, s] : r.pq.per_class) {
    const std::string p = "class_" + std::to_string(cls) + "_";
    j[p + "pq"] = s.pq;
    j[p + "sq"] = s.sq;
    j[p + "rq"] = s.rq;
    j[p + "tp"] = s.tp;
    j[p + "fp"] = s.fp;
    j[p + "fn"] = s.fn;
  }
  j["pq_all"] = r.pq.pq_all;
  j["sq_all"] = r.pq.sq_all;
  j["rq_all"] = r.pq.rq_all;
  j["pq_things"] = r.pq.pq_things;
  j["sq_things"] = r.pq.sq_things;
  j["rq_things"] = r.pq.rq_things;
  j["pq_stuff"] = r.pq.pq_stuff;
  j["sq_stuff"] = r.pq.sq_stuff;
  j["rq_stuff"] = r.pq.rq_stuff;
  j["n_all"] = r.pq.n_all;
  j["n_things"] = r.pq.n_things;
  j["n_stuff"] = r.pq.n_stuff;
  auto opt = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
    else j[key] = nullptr;
  };
  opt("miou_all", r.miou_all);
  opt("miou_mo", r.miou_mo);
  opt("ap", r.ap);
  opt("ap50", r.ap50);
  return j.dump(2) + "\n";
}

inline EvalReport report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(str("report JSON: ", e.what()));
  }
  EvalReport r;
  try {
    r.sequences = j.at("sequences").get<int>();
    for (const auto& [key, val] : j.items()) {
      if (key.rfind("class_", 0) != 0 || key.size() < 9) continue;
      if (key.substr(key.size() - 3) != "_pq") continue;
      const int cls = std::stoi(key.substr(6, key.size() - 9));
      const std::string p = "class_" + std::to_string(cls) + "_";
      PanopticScore::ClassScore s;
      s.pq = val.get<double>();
      s.sq = j.at(p + "sq").get<double>();
      s.rq = j.at(p + "rq").get<double>();
      s.tp = j.at(p + "tp").get<long long>();
      s.fp = j.at(p + "fp").get<long long>();
      s.fn = j.at(p + "fn").get<long long>();
      r.pq.per_class[cls] = s;
    }
    r.pq.pq_all = j.at("pq_all").get<double>();
    r.pq.sq_all = j.at("sq_all").get<double>();
    r.pq.rq_all = j.at("rq_all").get<double>();
    r.pq.pq_things = j.at("pq_things").get<double>();
    r.pq.sq_things = j.at("sq_things").get<double>();
    r.pq.rq_things = j.at("rq_things").get<double>();
    r.pq.pq_stuff = j.at("pq_stuff").get<double>();
    r.pq.sq_stuff = j.at("sq_stuff").get<double>();
    r.pq.rq_stuff = j.at("rq_stuff").get<double>();
    r.pq.n_all = j.at("n_all").get<int>();
    r.pq.n_things = j.at("n_things").get<int>();
    r.pq.n_stuff = j.at("n_stuff").get<int>();
    auto opt = [&](const char* key) -> std::optional<double> {
      if (j.at(key).is_null()) return std::nullopt;
      return j.at(key).get<double>();
    };
    r.miou_all = opt("miou_all");
    r.miou_mo = opt("miou_mo");
    r.ap = opt("ap");
    r.ap50 = opt("ap50");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(str("report JSON: ", e.what()));
  }
  return r;
}

// Aligned text table: one row per class plus the all/things/stuff
// aggregates, then the semantic and instance scores.  Values are shown
// with four decimals; absent scores show as n/a.
inline std::string render_report(const EvalReport& r) {
  auto num = [](double v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%8.4f", v);
    return std::string(buf);
  };
  auto opt = [&](const std::optional<double>& v) {
    return v ? num(*v) : std::string("     n/a");
  };
  auto row = [&](const std::string& label, double pq, double sq, double rq) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%-10s", label.c_str());
    return std::string(buf) + num(pq) + "  " + num(sq) + "  " + num(rq) + "\n";
  };
  std::string out = "segment         PQ        SQ        RQ\n";
  for (const auto& [cls, s] : r.pq.per_class)
    out += row("class " + std::to_string(cls), s.pq, s.sq, s.rq);
  out += row("all", r.pq.pq_all, r.pq.sq_all, r.pq.rq_all);
  out += row("things", r.pq.pq_things, r.pq.sq_things, r.pq.rq_things);
  out += row("stuff", r.pq.pq_stuff, r.pq.sq_stuff, r.pq.rq_stuff);
  out += "\n";
  out += "mIoU (all)" + opt(r.miou_all) + "\n";
  out += "mIoU (MO) " + opt(r.miou_mo) + "\n";
  out += "AP        " + opt(r.ap) + "\n";
  out += "AP50      " + opt(r.ap50) + "\n";
  out += "sequences " + std::to_string(r.sequences) + "\n";
  return out;
}

}  // namespace panofc
