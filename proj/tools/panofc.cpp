// panofc: synthetic panoptic-segmentation forecasting.
//
// Subcommands: gen (write a synthetic dataset), train (fit one model
// component), forecast (predict the target frame for every validation
// sequence), eval (score forecasts), print-config (dump the effective
// configuration).  Exit codes: 0 success, 2 usage/config error,
// 1 runtime error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "panofc/pipeline.hpp"

namespace {

using namespace panofc;

struct CommonFlags {
  std::string config_path;
  std::string preset;
  std::optional<uint64_t> seed;
  std::string odometry;
  std::string refine;
  std::string baseline;
  bool filter_last_frame_presence = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "configuration file (key = value lines)");
  cmd->add_option("--preset", f.preset, "named horizon preset: short | mid")
      ->check(CLI::IsMember({"short", "mid"}));
  cmd->add_option("--seed", f.seed, "override run.seed");
  cmd->add_option("--odometry", f.odometry, "override run.odometry: active | passive")
      ->check(CLI::IsMember({"active", "passive"}));
  cmd->add_option("--refine", f.refine, "override run.refine: learned | nearest_fill")
      ->check(CLI::IsMember({"learned", "nearest_fill"}));
  cmd->add_flag("--filter-last-frame-presence", f.filter_last_frame_presence,
                "score only ground-truth instances visible in the last input frame");
}

RunConfig resolve_config(const CommonFlags& f) {
  if (!f.preset.empty() && !f.config_path.empty())
    throw UsageError("--preset and --config are mutually exclusive");
  RunConfig cfg = f.preset.empty() ? RunConfig{} : config_preset(f.preset);
  if (!f.config_path.empty()) cfg = load_config(f.config_path);
  if (f.seed) cfg.run_seed = *f.seed;
  if (f.odometry == "active") cfg.odometry = OdomMode::active;
  if (f.odometry == "passive") cfg.odometry = OdomMode::passive;
  if (f.refine == "learned") cfg.refine = RefineMode::learned;
  if (f.refine == "nearest_fill") cfg.refine = RefineMode::nearest_fill;
  if (f.filter_last_frame_presence) cfg.filter_last_frame_presence = true;
  return cfg;
}

std::string forecast_name(size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "val_%03zu.pfp", i);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(str("cannot write '", path, "'"));
  out << text;
}

int cmd_gen(const CommonFlags& flags, const std::string& out_dir) {
  RunConfig cfg = resolve_config(flags);
  cfg.validate();
  Dataset data = generate_dataset(cfg);
  write_dataset(data, out_dir);
  std::printf("wrote %d train + %d val sequences to %s\n", cfg.train_sequences,
              cfg.val_sequences, out_dir.c_str());
  return 0;
}

int cmd_train(const CommonFlags& flags, const std::string& which, const std::string& data_dir,
              const std::string& out_path) {
  RunConfig cfg = resolve_config(flags);
  cfg.validate();
  Dataset data = load_dataset(data_dir);
  TrainLog log;
  if (which == "things") {
    ThingsModel m = train_things_pipeline(cfg, data.train, &log);
    save_things(m, out_path);
  } else if (which == "stuff") {
    StuffRefiner r = train_stuff_pipeline(cfg, data.train, &log);
    save_stuff(r, out_path);
  } else if (which == "odom") {
    OdomModel m = train_odom_pipeline(cfg, data.train, &log);
    save_odom(m, out_path);
  } else {
    throw UsageError(str("train: unknown component '", which,
                         "' (expected things, stuff, or odom)"));
  }
  write_text(out_path + ".log", log.text());
  std::printf("trained %s (%zu logged steps) -> %s\n", which.c_str(), log.losses.size(),
              out_path.c_str());
  return 0;
}

int cmd_forecast(const CommonFlags& flags, const std::string& data_dir,
                 const std::string& out_dir, const std::string& things_path,
                 const std::string& stuff_path, const std::string& odom_path) {
  RunConfig cfg = resolve_config(flags);
  cfg.validate();
  Dataset data = load_dataset(data_dir);

  BaselineMode baseline = BaselineMode::none;
  if (flags.baseline == "copy_last") baseline = BaselineMode::copy_last;
  else if (flags.baseline == "linear") baseline = BaselineMode::linear;
  else if (!flags.baseline.empty())
    throw UsageError(str("forecast: unknown baseline '", flags.baseline,
                         "' (expected copy_last or linear)"));

  PipelineModels models;
  if (!things_path.empty()) models.things = load_things(things_path);
  if (!stuff_path.empty()) models.stuff = load_stuff(stuff_path);
  if (!odom_path.empty()) models.odom = load_odom(odom_path);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError(str("cannot create output directory '", out_dir, "': ", ec.message()));
  for (size_t i = 0; i < data.val.size(); ++i) {
    SequenceForecast fc =
        forecast_sequence(cfg, data.val[i], models, baseline, 50000 + i);
    save_forecast(fc, (std::filesystem::path(out_dir) / forecast_name(i)).string());
  }
  std::printf("wrote %zu forecasts to %s\n", data.val.size(), out_dir.c_str());
  return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& data_dir,
             const std::string& pred_dir, const std::string& json_path) {
  RunConfig cfg = resolve_config(flags);
  cfg.validate();
  Dataset data = load_dataset(data_dir);
  std::vector<SequenceForecast> preds;
  for (size_t i = 0; i < data.val.size(); ++i) {
    std::filesystem::path p = std::filesystem::path(pred_dir) / forecast_name(i);
    if (!std::filesystem::exists(p))
      throw UsageError(str("eval: ", data.val.size(), " validation sequences but '",
                           p.string(), "' is missing"));
    preds.push_back(load_forecast(p.string()));
  }
  EvalReport report = evaluate_forecasts(cfg, preds, data.val);
  std::fputs(render_report(report).c_str(), stdout);
  if (!json_path.empty()) write_text(json_path, report_to_json(report));
  return 0;
}

int cmd_print_config(const CommonFlags& flags, const std::string& out_path) {
  RunConfig cfg = resolve_config(flags);
  cfg.validate();
  std::string text = dump_config(cfg);
  if (out_path.empty()) std::fputs(text.c_str(), stdout);
  else write_text(out_path, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic panoptic segmentation forecasting"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string out, data_dir, which, pred_dir, json_path;
  std::string things_path, stuff_path, odom_path;

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  add_common(gen, flags);
  gen->add_option("--out", out, "output dataset directory")->required();

  CLI::App* train = app.add_subcommand("train", "train one model component");
  add_common(train, flags);
  train->add_option("--which", which, "component: things | stuff | odom")
      ->required()
      ->check(CLI::IsMember({"things", "stuff", "odom"}));
  train->add_option("--data", data_dir, "dataset directory (from gen)")->required();
  train->add_option("--out", out, "weights output path")->required();

  CLI::App* forecast = app.add_subcommand("forecast", "forecast the validation sequences");
  add_common(forecast, flags);
  forecast->add_option("--data", data_dir, "dataset directory (from gen)")->required();
  forecast->add_option("--out", out, "forecast output directory")->required();
  forecast->add_option("--things", things_path, "things model weights");
  forecast->add_option("--stuff", stuff_path, "stuff refiner weights");
  forecast->add_option("--odom", odom_path, "odometry model weights");
  forecast->add_option("--baseline", flags.baseline, "replace the model: copy_last | linear")
      ->check(CLI::IsMember({"copy_last", "linear"}));

  CLI::App* eval = app.add_subcommand("eval", "score forecasts against ground truth");
  add_common(eval, flags);
  eval->add_option("--data", data_dir, "dataset directory (from gen)")->required();
  eval->add_option("--pred", pred_dir, "forecast directory (from forecast)")->required();
  eval->add_option("--json", json_path, "also write the report as JSON");

  CLI::App* print_config = app.add_subcommand("print-config", "dump the effective config");
  add_common(print_config, flags);
  print_config->add_option("--out", out, "write to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(flags, out);
    if (train->parsed()) return cmd_train(flags, which, data_dir, out);
    if (forecast->parsed())
      return cmd_forecast(flags, data_dir, out, things_path, stuff_path, odom_path);
    if (eval->parsed()) return cmd_eval(flags, data_dir, pred_dir, json_path);
    if (print_config->parsed()) return cmd_print_config(flags, out);
    std::fputs("panofc: no subcommand\n", stderr);
    return 2;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "panofc: %s\n", e.what());
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "panofc: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "panofc: %s\n", e.what());
    return 1;
  }
}
