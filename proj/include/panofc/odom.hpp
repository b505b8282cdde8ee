#pragma once

#include <string>
#include <vector>

#include "panofc/geometry.hpp"
#include "panofc/optim.hpp"
#include "panofc/rnn.hpp"
#include "panofc/tensor.hpp"
#include "panofc/track.hpp"

namespace panofc {

// Ego-motion forecaster: a GRU reads the observed (speed, yaw step)
// sequence, then rolls forward feeding its own predictions back in.
struct OdomModel {
  int hidden = 16;
  ParamStore params;
  FeatureStats stats;  // over [v, yaw_rate * dt]

  static OdomModel init(int hidden, uint64_t seed) {
    if (hidden < 1) throw ConfigError(str("odom model: hidden must be >= 1, got ", hidden));
    OdomModel m;
    m.hidden = hidden;
    m.stats.mean.assign(2, 0.0);
    m.stats.stdev.assign(2, 1.0);
    Rng rng = Rng(seed).fork(601);
    const double b = 1.0 / std::sqrt(static_cast<double>(2 + hidden));
    for (const char* gate : {"wz", "wr", "wn"})
      m.params.create_uniform(std::string("odom.gru.") + gate, Shape{2 + hidden, hidden}, b,
                              rng);
    for (const char* gate : {"bz", "br", "bn"})
      m.params.create(std::string("odom.gru.") + gate, Shape{hidden});
    m.params.create_uniform("odom.fcam.w", Shape{hidden, 2},
                            1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    m.params.create("odom.fcam.b", Shape{2});
    return m;
  }

  GruParams gru() const {
    return {params.at("odom.gru.wz"), params.at("odom.gru.bz"),
            params.at("odom.gru.wr"), params.at("odom.gru.br"),
            params.at("odom.gru.wn"), params.at("odom.gru.bn")};
  }

  Tensor reading_input(const Odometry& o) const {
    std::vector<double> v = stats.normalize({o.v, o.yaw_rate * o.dt});
    return Tensor(Shape{1, 2}, std::move(v));
  }

  // Normalized predictions for F future readings: teacher inputs over
  // the observed steps, the model's own outputs thereafter.
  std::vector<Tensor> forecast_normalized(const std::vector<Odometry>& observed,
                                          int f_steps) const {
    if (observed.empty()) throw UsageError("odom forecast: need at least one observed step");
    if (f_steps < 0) throw UsageError(str("odom forecast: negative step count ", f_steps));
    const GruParams g = gru();
    Tensor h(Shape{1, hidden}, 0.0);
    for (const Odometry& o : observed) h = gru_cell(g, reading_input(o), h);
    std::vector<Tensor> preds;
    for (int k = 0; k < f_steps; ++k) {
      Tensor p = matmul_add(h, params.at("odom.fcam.w"), params.at("odom.fcam.b"));
      preds.push_back(p);
      if (k + 1 < f_steps) h = gru_cell(g, p, h);
    }
    return preds;
  }

  // Denormalized forecast; dt for each future frame comes from the
  // caller's schedule.
  std::vector<Odometry> forecast(const std::vector<Odometry>& observed,
                                 const std::vector<double>& future_dts) const {
    std::vector<Tensor> preds =
        forecast_normalized(observed, static_cast<int>(future_dts.size()));
    std::vector<Odometry> out;
    for (size_t k = 0; k < preds.size(); ++k) {
      std::vector<double> raw =
          stats.denormalize({preds[k].values()[0], preds[k].values()[1]});
      const double dt = future_dts[k];
      if (dt <= 0.0) throw UsageError(str("odom forecast: future dt ", dt, " must be > 0"));
      out.push_back({raw[0], raw[1] / dt, dt});
    }
    return out;
  }
};

struct OdomTrainConfig {
  int input_steps = 0;     // observed readings per sequence
  int forecast_steps = 0;  // supervised future readings
  int steps = 500;
  double lr = 5e-4;
  double clip_norm = 5.0;
};

// Full-batch Adam on the MSE between normalized forecasts and
// normalized future readings.  Fits the normalization stats on every
// reading in the dataset first.
inline std::vector<double> train_odom(OdomModel& model,
                                      const std::vector<std::vector<Odometry>>& dataset,
                                      const OdomTrainConfig& cfg) {
  if (dataset.empty()) throw UsageError("odom training: empty dataset");
  if (cfg.input_steps < 1 || cfg.forecast_steps < 1)
    throw UsageError(str("odom training: need input_steps >= 1 and forecast_steps >= 1, got ",
                         cfg.input_steps, " and ", cfg.forecast_steps));
  const size_t need = static_cast<size_t>(cfg.input_steps) + cfg.forecast_steps;
  std::vector<std::vector<double>> rows;
  for (size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].size() < need)
      throw UsageError(str("odom training: sequence ", i, " has ", dataset[i].size(),
                           " readings, need ", need));
    for (const Odometry& o : dataset[i]) rows.push_back({o.v, o.yaw_rate * o.dt});
  }
  if (cfg.steps == 0) return {};  // validated but untouched
  model.stats = FeatureStats::fit(rows);

  AdamConfig ac;
  ac.lr = cfg.lr;
  ac.clip_norm = cfg.clip_norm;
  std::vector<double> losses;
  for (int step = 0; step < cfg.steps; ++step) {
    model.params.zero_grad();
    Tensor total = Tensor::scalar(0.0);
    for (const std::vector<Odometry>& seq : dataset) {
      std::vector<Odometry> obs(seq.begin(), seq.begin() + cfg.input_steps);
      std::vector<Tensor> preds = model.forecast_normalized(obs, cfg.forecast_steps);
      for (int k = 0; k < cfg.forecast_steps; ++k) {
        const Odometry& tgt = seq[static_cast<size_t>(cfg.input_steps) + k];
        Tensor target(Shape{1, 2}, model.stats.normalize({tgt.v, tgt.yaw_rate * tgt.dt}));
        total = add(total, mse_loss(preds[static_cast<size_t>(k)], target));
      }
    }
    total = scale(total, 1.0 / static_cast<double>(dataset.size() * cfg.forecast_steps));
    losses.push_back(total.value());
    total.backward();
    adam_step(model.params, ac);
  }
  return losses;
}

// Normalized F-step forecast MSE of a model over a dataset.
inline double odom_forecast_mse(const OdomModel& model,
                                const std::vector<std::vector<Odometry>>& dataset,
                                int input_steps, int forecast_steps) {
  if (dataset.empty()) throw UsageError("odom evaluation: empty dataset");
  double acc = 0.0;
  long n = 0;
  for (const std::vector<Odometry>& seq : dataset) {
    std::vector<Odometry> obs(seq.begin(), seq.begin() + input_steps);
    std::vector<Tensor> preds = model.forecast_normalized(obs, forecast_steps);
    for (int k = 0; k < forecast_steps; ++k) {
      const Odometry& tgt = seq[static_cast<size_t>(input_steps) + k];
      std::vector<double> t = model.stats.normalize({tgt.v, tgt.yaw_rate * tgt.dt});
      for (int j = 0; j < 2; ++j) {
        const double d = preds[static_cast<size_t>(k)].values()[static_cast<size_t>(j)] -
                         t[static_cast<size_t>(j)];
        acc += d * d;
        n += 2;
      }
    }
  }
  return acc / static_cast<double>(n);
}

// Hold-last baseline in the same normalized units, for comparison.
inline double hold_last_mse(const OdomModel& model,
                            const std::vector<std::vector<Odometry>>& dataset,
                            int input_steps, int forecast_steps) {
  if (dataset.empty()) throw UsageError("odom evaluation: empty dataset");
  double acc = 0.0;
  long n = 0;
  for (const std::vector<Odometry>& seq : dataset) {
    const Odometry& last = seq[static_cast<size_t>(input_steps) - 1];
    std::vector<double> p = model.stats.normalize({last.v, last.yaw_rate * last.dt});
    for (int k = 0; k < forecast_steps; ++k) {
      const Odometry& tgt = seq[static_cast<size_t>(input_steps) + k];
      std::vector<double> t = model.stats.normalize({tgt.v, tgt.yaw_rate * tgt.dt});
      for (int j = 0; j < 2; ++j) {
        const double d = p[static_cast<size_t>(j)] - t[static_cast<size_t>(j)];
        acc += d * d;
        n += 2;
      }
    }
  }
  return acc / static_cast<double>(n);
}

inline void save_odom(const OdomModel& m, const std::string& path) {
  std::map<std::string, Tensor> meta;
  meta.emplace("meta.odom.hidden", Tensor::scalar(static_cast<double>(m.hidden)));
  meta.emplace("meta.odom.mean", Tensor(Shape{2}, m.stats.mean));
  meta.emplace("meta.odom.std", Tensor(Shape{2}, m.stats.stdev));
  save_weights(m.params, path, meta);
}

inline OdomModel load_odom(const std::string& path) {
  std::map<std::string, Tensor> loaded = load_tensors(path);
  auto need = [&](const std::string& name) -> const Tensor& {
    auto it = loaded.find(name);
    if (it == loaded.end())
      throw FormatError(str("odom weights: missing tensor '", name, "'"));
    return it->second;
  };
  const int hidden = static_cast<int>(need("meta.odom.hidden").values()[0]);
  if (hidden < 1) throw FormatError(str("odom weights: bad hidden size ", hidden));
  OdomModel m = OdomModel::init(hidden, 0);
  load_params_into(m.params, loaded, "odom weights");
  m.stats.mean = need("meta.odom.mean").values();
  m.stats.stdev = need("meta.odom.std").values();
  return m;
}

}  // namespace panofc
