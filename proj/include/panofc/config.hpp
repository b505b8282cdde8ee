#pragma once

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "panofc/scenesim.hpp"
#include "panofc/stuff.hpp"
#include "panofc/things.hpp"

namespace panofc {

enum class OdomMode { active, passive };

// One flat key=value document driving every command: scene generation,
// horizon arithmetic, model dimensions, training hyperparameters, and
// run modes.
struct RunConfig {
  SceneSpec scene;

  // Horizon: `inputs` observations spaced `stride` frames apart, then a
  // single evaluated target `forecast_frames` frames past the last
  // input.  forecast_frames must be a multiple of stride so the
  // forecaster advances in whole schedule steps.
  int inputs = 3;
  int stride = 3;
  int forecast_frames = 3;

  // Dataset
  int train_sequences = 6;
  int val_sequences = 3;
  double dropout_rate = 0.0;
  double feature_noise = 0.0;

  // Model dims
  int gru_hidden = 32;
  int convlstm_channels = 16;
  int mask_channels = 8;
  int mask_grid = 7;
  int mask_out = 14;
  int bfeat_channels = 4;
  int mfeat_hidden = 4;
  int mfeat_dim = 16;
  int stuff_hidden = 16;
  int odom_hidden = 16;

  // Training
  int things_steps = 300;
  int maskout_steps = 200;
  int stuff_steps = 200;
  int odom_steps = 400;
  int batch = 2;  // sequences per things/stuff training step
  double lr = 5e-4;
  double clip_norm = 5.0;
  double lambda = 0.1;

  // Modes
  uint64_t run_seed = 7;
  OdomMode odometry = OdomMode::active;
  RefineMode refine = RefineMode::learned;
  bool filter_last_frame_presence = false;

  // ---- horizon arithmetic -------------------------------------------------

  int last_input_frame() const { return (inputs - 1) * stride; }
  int target_frame() const { return last_input_frame() + forecast_frames; }
  int decoder_steps() const { return forecast_frames / stride; }

  std::vector<int> input_frames() const {
    std::vector<int> out;
    for (int i = 0; i < inputs; ++i) out.push_back(i * stride);
    return out;
  }

  // Inputs plus the forecast steps, all stride-spaced.
  std::vector<int> schedule_frames() const {
    std::vector<int> out = input_frames();
    for (int k = 1; k <= decoder_steps(); ++k) out.push_back(last_input_frame() + k * stride);
    return out;
  }

  ThingsConfig things_config() const {
    ThingsConfig c;
    c.mask_channels = mask_channels;
    c.mask_h = mask_grid;
    c.mask_w = mask_grid;
    c.gru_hidden = gru_hidden;
    c.convlstm_channels = convlstm_channels;
    c.bfeat_channels = bfeat_channels;
    c.mfeat_hidden = mfeat_hidden;
    c.mfeat_dim = mfeat_dim;
    c.mask_out = mask_out;
    c.thing_classes = scene.thing_classes;
    return c;
  }

  void validate() const {
    scene.validate();
    auto least = [](int v, int lo, const char* what) {
      if (v < lo) throw ConfigError(str("config: ", what, " must be >= ", lo, ", got ", v));
    };
    least(inputs, 1, "horizon.inputs");
    least(stride, 1, "horizon.stride");
    least(forecast_frames, 1, "horizon.forecast_frames");
    if (forecast_frames % stride != 0)
      throw ConfigError(str("config: horizon.forecast_frames (", forecast_frames,
                            ") must be a multiple of horizon.stride (", stride, ")"));
    if (scene.frames < target_frame() + 1)
      throw ConfigError(str("config: scene.frames (", scene.frames, ") too short for the ",
                            "horizon; need at least ", target_frame() + 1));
    least(train_sequences, 0, "data.train_sequences");
    least(val_sequences, 0, "data.val_sequences");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw ConfigError(str("config: data.dropout_rate must be in [0,1), got ",
                            dropout_rate));
    if (feature_noise < 0.0)
      throw ConfigError(str("config: data.feature_noise must be >= 0, got ", feature_noise));
    things_config().validate();
    least(stuff_hidden, 1, "model.stuff_hidden");
    least(odom_hidden, 1, "model.odom_hidden");
    least(things_steps, 0, "train.things_steps");
    least(maskout_steps, 0, "train.maskout_steps");
    least(stuff_steps, 0, "train.stuff_steps");
    least(odom_steps, 0, "train.odom_steps");
    least(batch, 1, "train.batch");
    if (lr <= 0.0) throw ConfigError(str("config: train.lr must be > 0, got ", lr));
    if (clip_norm <= 0.0)
      throw ConfigError(str("config: train.clip_norm must be > 0, got ", clip_norm));
    if (lambda <= 0.0)
      throw ConfigError(str("config: train.lambda must be > 0, got ", lambda));
  }
};

namespace detail {

struct ConfigField {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline long long parse_ll(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError(str("config: key '", key, "' needs an integer, got '", v, "'"));
  return out;
}

inline double parse_dbl(const std::string& key, const std::string& v) {
  try {
    size_t idx = 0;
    double out = std::stod(v, &idx);
    if (idx != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(str("config: key '", key, "' needs a number, got '", v, "'"));
  }
}

inline std::string fmt_dbl(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline const std::vector<ConfigField>& config_fields() {
  auto f_int = [](std::string key, int RunConfig::* m) {
    return ConfigField{
        key, [m](const RunConfig& c) { return std::to_string(c.*m); },
        [key, m](RunConfig& c, const std::string& v) {
          c.*m = static_cast<int>(parse_ll(key, v));
        }};
  };
  auto f_scene_int = [](std::string key, int SceneSpec::* m) {
    return ConfigField{
        key, [m](const RunConfig& c) { return std::to_string(c.scene.*m); },
        [key, m](RunConfig& c, const std::string& v) {
          c.scene.*m = static_cast<int>(parse_ll(key, v));
        }};
  };
  auto f_dbl = [](std::string key, double RunConfig::* m) {
    return ConfigField{key, [m](const RunConfig& c) { return fmt_dbl(c.*m); },
                       [key, m](RunConfig& c, const std::string& v) {
                         c.*m = parse_dbl(key, v);
                       }};
  };
  auto f_scene_dbl = [](std::string key, double SceneSpec::* m) {
    return ConfigField{key, [m](const RunConfig& c) { return fmt_dbl(c.scene.*m); },
                       [key, m](RunConfig& c, const std::string& v) {
                         c.scene.*m = parse_dbl(key, v);
                       }};
  };
  static const std::vector<ConfigField> fields = {
      f_scene_int("scene.height", &SceneSpec::height),
      f_scene_int("scene.width", &SceneSpec::width),
      f_scene_dbl("scene.focal", &SceneSpec::focal),
      f_scene_int("scene.stuff_classes", &SceneSpec::stuff_classes),
      f_scene_int("scene.thing_classes", &SceneSpec::thing_classes),
      f_scene_int("scene.min_objects", &SceneSpec::min_objects),
      f_scene_int("scene.max_objects", &SceneSpec::max_objects),
      f_scene_int("scene.frames", &SceneSpec::frames),
      f_scene_dbl("scene.dt", &SceneSpec::dt),
      f_scene_dbl("scene.depth_max", &SceneSpec::depth_max),
      f_scene_dbl("scene.camera_height", &SceneSpec::camera_height),
      f_scene_dbl("scene.road_half_width", &SceneSpec::road_half_width),
      f_scene_dbl("scene.wall_offset", &SceneSpec::wall_offset),
      f_scene_dbl("scene.wall_height", &SceneSpec::wall_height),
      f_scene_dbl("scene.cam_speed_min", &SceneSpec::cam_speed_min),
      f_scene_dbl("scene.cam_speed_max", &SceneSpec::cam_speed_max),
      f_scene_dbl("scene.cam_yaw_amp", &SceneSpec::cam_yaw_amp),
      f_scene_dbl("scene.object_speed_max", &SceneSpec::object_speed_max),
      f_scene_dbl("scene.object_turn_max", &SceneSpec::object_turn_max),
      f_scene_dbl("scene.object_dist_min", &SceneSpec::object_dist_min),
      f_scene_dbl("scene.object_dist_max", &SceneSpec::object_dist_max),
      f_int("horizon.inputs", &RunConfig::inputs),
      f_int("horizon.stride", &RunConfig::stride),
      f_int("horizon.forecast_frames", &RunConfig::forecast_frames),
      f_int("data.train_sequences", &RunConfig::train_sequences),
      f_int("data.val_sequences", &RunConfig::val_sequences),
      f_dbl("data.dropout_rate", &RunConfig::dropout_rate),
      f_dbl("data.feature_noise", &RunConfig::feature_noise),
      f_int("model.gru_hidden", &RunConfig::gru_hidden),
      f_int("model.convlstm_channels", &RunConfig::convlstm_channels),
      f_int("model.mask_channels", &RunConfig::mask_channels),
      f_int("model.mask_grid", &RunConfig::mask_grid),
      f_int("model.mask_out", &RunConfig::mask_out),
      f_int("model.bfeat_channels", &RunConfig::bfeat_channels),
      f_int("model.mfeat_hidden", &RunConfig::mfeat_hidden),
      f_int("model.mfeat_dim", &RunConfig::mfeat_dim),
      f_int("model.stuff_hidden", &RunConfig::stuff_hidden),
      f_int("model.odom_hidden", &RunConfig::odom_hidden),
      f_int("train.things_steps", &RunConfig::things_steps),
      f_int("train.maskout_steps", &RunConfig::maskout_steps),
      f_int("train.stuff_steps", &RunConfig::stuff_steps),
      f_int("train.odom_steps", &RunConfig::odom_steps),
      f_int("train.batch", &RunConfig::batch),
      f_dbl("train.lr", &RunConfig::lr),
      f_dbl("train.clip_norm", &RunConfig::clip_norm),
      f_dbl("train.lambda", &RunConfig::lambda),
      ConfigField{"run.seed",
                  [](const RunConfig& c) { return std::to_string(c.run_seed); },
                  [](RunConfig& c, const std::string& v) {
                    c.run_seed = static_cast<uint64_t>(parse_ll("run.seed", v));
                  }},
      ConfigField{"run.odometry",
                  [](const RunConfig& c) {
                    return c.odometry == OdomMode::active ? "active" : "passive";
                  },
                  [](RunConfig& c, const std::string& v) {
                    if (v == "active") c.odometry = OdomMode::active;
                    else if (v == "passive") c.odometry = OdomMode::passive;
                    else
                      throw ConfigError(str("config: run.odometry must be 'active' or ",
                                            "'passive', got '", v, "'"));
                  }},
      ConfigField{"run.refine",
                  [](const RunConfig& c) {
                    return c.refine == RefineMode::learned ? "learned" : "nearest_fill";
                  },
                  [](RunConfig& c, const std::string& v) {
                    if (v == "learned") c.refine = RefineMode::learned;
                    else if (v == "nearest_fill") c.refine = RefineMode::nearest_fill;
                    else
                      throw ConfigError(str("config: run.refine must be 'learned' or ",
                                            "'nearest_fill', got '", v, "'"));
                  }},
      ConfigField{"run.filter_last_frame_presence",
                  [](const RunConfig& c) {
                    return c.filter_last_frame_presence ? "true" : "false";
                  },
                  [](RunConfig& c, const std::string& v) {
                    if (v == "true") c.filter_last_frame_presence = true;
                    else if (v == "false") c.filter_last_frame_presence = false;
                    else
                      throw ConfigError(str("config: run.filter_last_frame_presence must be ",
                                            "'true' or 'false', got '", v, "'"));
                  }},
  };
  return fields;
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

// Applies `key = value` lines (# comments, blank lines allowed) on top
// of the defaults.  Unknown or repeated keys are errors.
inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, const detail::ConfigField*> by_key;
  for (const detail::ConfigField& f : detail::config_fields()) by_key[f.key] = &f;
  std::map<std::string, bool> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(str("config line ", line_no, ": expected 'key = value', got '", t,
                            "'"));
    std::string key = detail::trim(t.substr(0, eq));
    std::string value = detail::trim(t.substr(eq + 1));
    auto it = by_key.find(key);
    if (it == by_key.end())
      throw ConfigError(str("config line ", line_no, ": unknown key '", key, "'"));
    if (seen[key])
      throw ConfigError(str("config line ", line_no, ": duplicate key '", key, "'"));
    seen[key] = true;
    it->second->set(cfg, value);
  }
  return cfg;
}

inline std::string dump_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const detail::ConfigField& f : detail::config_fields()) {
    std::string sec = f.key.substr(0, f.key.find('.'));
    if (sec != section) {
      if (!out.empty()) out += "\n";
      out += "# " + sec + "\n";
      section = sec;
    }
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(str("cannot read config file '", path, "'"));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// Named horizon presets: `short` forecasts one schedule step ahead,
// `mid` three.
inline RunConfig config_preset(const std::string& name) {
  RunConfig cfg;
  if (name == "short") {
    cfg.forecast_frames = 3;
  } else if (name == "mid") {
    cfg.forecast_frames = 9;
  } else {
    throw ConfigError(str("unknown preset '", name, "' (expected 'short' or 'mid')"));
  }
  return cfg;
}

}  // namespace panofc
