#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "psloss/experiment.hpp"

namespace {

using namespace psloss;

/** Applies --seed / --out overrides on top of the config file. */
ExperimentConfig resolve_config(const std::string& config_path,
                                const std::uint64_t* seed,
                                const std::string& out) {
  ExperimentConfig cfg = load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.output_dir = out;
  return cfg;
}

std::string require_output_dir(const ExperimentConfig& cfg) {
  if (cfg.output_dir.empty())
    throw ConfigError("no output directory: set output_dir in the config "
                      "or pass --out");
  return cfg.output_dir;
}

void print_epoch(const EpochStats& e) {
  std::printf("epoch %3zu  train %.6f  val %.6f  lr %.2e  %.1fs\n", e.epoch,
              e.train_loss, e.val_mse, e.learning_rate, e.seconds);
  std::fflush(stdout);
}

void print_metrics(const MetricsReport& m) {
  std::printf("  mse %.6f  mae %.6f  dtw %.4f  tdi %.4f  pcc %.4f\n", m.mse,
              m.mae, m.dtw, m.tdi, m.pcc);
}

int cmd_train(const std::string& config_path, const std::uint64_t* seed,
              const std::string& out, bool no_predictions) {
  const ExperimentConfig cfg = resolve_config(config_path, seed, out);
  const std::string dir = require_output_dir(cfg);
  std::printf("training %s / %s on %s (seed %llu)\n",
              to_string(cfg.model_kind).c_str(),
              to_string(cfg.loss_mode).c_str(), cfg.dataset_path.c_str(),
              static_cast<unsigned long long>(cfg.seed));
  const RunResult r = train(cfg, print_epoch);
  std::printf("best epoch %zu (val mse %.6f); test metrics:\n", r.best_epoch,
              r.best_val_mse);
  print_metrics(r.test);
  write_artifacts(r, dir, !no_predictions);
  std::printf("artifacts written to %s\n", dir.c_str());
  return 0;
}

int cmd_evaluate(const std::string& config_path, const std::uint64_t* seed,
                 const std::string& out, const std::string& checkpoint,
                 bool dump_predictions) {
  const ExperimentConfig cfg = resolve_config(config_path, seed, out);
  const std::string dir = require_output_dir(cfg);

  RunResult r;
  r.config = cfg;
  r.model = ForecastModel::load(checkpoint);
  const RawDataset raw = load_csv(resolve_data_path(cfg.dataset_path));
  r.channel_names = raw.channel_names;
  r.data = prepare(raw, cfg.split, cfg.lookback);
  if (r.model.config().channels != r.data.channels ||
      r.model.config().lookback != cfg.lookback ||
      r.model.config().horizon != cfg.horizon)
    throw ConfigError("checkpoint layout does not match the config");

  r.test = evaluate_split(r.model, r.data, r.data.splits.test, cfg.lookback,
                          cfg.horizon);
  std::printf("test metrics for %s:\n", checkpoint.c_str());
  print_metrics(r.test);

  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json j;
  j["config"] = config_to_json(cfg);
  j["checkpoint"] = checkpoint;
  j["test"] = metrics_to_json(r.test);
  std::ofstream json_out(dir + "/evaluation.json");
  if (!json_out) throw ConfigError("cannot write " + dir + "/evaluation.json");
  json_out << j.dump(2) << "\n";
  if (dump_predictions) write_predictions_csv(r, dir + "/predictions.csv");
  std::printf("evaluation written to %s\n", dir.c_str());
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::uint64_t* seed,
               const std::string& out) {
  const ExperimentConfig cfg = resolve_config(config_path, seed, out);
  const std::string dir = require_output_dir(cfg);
  const auto rows = run_ablation(cfg);

  std::printf("%-14s %8s %10s %10s %8s %8s %8s\n", "variant", "epochs",
              "mse", "mae", "dtw", "tdi", "pcc");
  for (const auto& r : rows)
    std::printf("%-14s %8zu %10.6f %10.6f %8.4f %8.4f %8.4f\n",
                r.name.c_str(), r.epochs_run, r.test.mse, r.test.mae,
                r.test.dtw, r.test.tdi, r.test.pcc);

  std::filesystem::create_directories(dir);
  std::ofstream json_out(dir + "/ablation.json");
  if (!json_out) throw ConfigError("cannot write " + dir + "/ablation.json");
  json_out << ablation_to_json(rows).dump(2) << "\n";
  std::printf("ablation table written to %s/ablation.json\n", dir.c_str());
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::uint64_t* seed,
              const std::string& out, const std::string& param,
              const std::vector<double>& values) {
  const ExperimentConfig cfg = resolve_config(config_path, seed, out);
  const std::string dir = require_output_dir(cfg);
  const auto rows = run_sweep(cfg, param, values);

  std::printf("%-8s %10s %8s %10s %10s %8s %8s %8s\n", "param", "value",
              "epochs", "mse", "mae", "dtw", "tdi", "pcc");
  for (const auto& r : rows)
    std::printf("%-8s %10.4g %8zu %10.6f %10.6f %8.4f %8.4f %8.4f\n",
                r.param.c_str(), r.value, r.epochs_run, r.test.mse,
                r.test.mae, r.test.dtw, r.test.tdi, r.test.pcc);

  std::filesystem::create_directories(dir);
  std::ofstream json_out(dir + "/sweep.json");
  if (!json_out) throw ConfigError("cannot write " + dir + "/sweep.json");
  json_out << sweep_to_json(rows).dump(2) << "\n";
  std::printf("sweep table written to %s/sweep.json\n", dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "psloss: train and evaluate linear forecasters with a patch-wise "
      "structural loss.\nDataset paths resolve against $PSLOSS_DATA_DIR, "
      "then ./data."};
  app.require_subcommand(1);

  std::string config_path, out, checkpoint, param;
  std::uint64_t seed = 0;
  bool no_predictions = false, dump_predictions = false;
  std::vector<double> values;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "experiment config JSON")
        ->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("-o,--out", out, "override the config output_dir");
  };

  CLI::App* train_cmd = app.add_subcommand(
      "train", "train a model and write result.json, weights_trace.jsonl, "
               "checkpoint.json and predictions.csv");
  add_common(train_cmd);
  train_cmd->add_flag("--no-predictions", no_predictions,
                      "skip the predictions.csv dump");

  CLI::App* eval_cmd = app.add_subcommand(
      "evaluate", "score a saved checkpoint on the test split");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint JSON to load")
      ->required();
  eval_cmd->add_flag("--dump-predictions", dump_predictions,
                     "also write predictions.csv");

  CLI::App* ablate_cmd = app.add_subcommand(
      "ablate", "train the full loss and its five ablation variants");
  add_common(ablate_cmd);

  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep", "train one run per value of lambda or delta");
  add_common(sweep_cmd);
  sweep_cmd->add_option("--param", param, "hyperparameter: lambda or delta")
      ->required();
  sweep_cmd->add_option("--values", values, "comma-separated values")
      ->required()
      ->delimiter(',');

  CLI11_PARSE(app, argc, argv);
  const bool seed_set =
      train_cmd->count("--seed") || eval_cmd->count("--seed") ||
      ablate_cmd->count("--seed") || sweep_cmd->count("--seed");
  const std::uint64_t* seed_ptr = seed_set ? &seed : nullptr;

  try {
    if (train_cmd->parsed())
      return cmd_train(config_path, seed_ptr, out, no_predictions);
    if (eval_cmd->parsed())
      return cmd_evaluate(config_path, seed_ptr, out, checkpoint,
                          dump_predictions);
    if (ablate_cmd->parsed()) return cmd_ablate(config_path, seed_ptr, out);
    if (sweep_cmd->parsed())
      return cmd_sweep(config_path, seed_ptr, out, param, values);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
