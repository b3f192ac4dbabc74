#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "data.hpp"
#include "errors.hpp"
#include "gdw.hpp"
#include "loss.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "patching.hpp"
#include "tensor.hpp"

namespace psloss {

enum class LossMode { mse_only, mse_plus_ps };

inline std::string to_string(LossMode m) {
  return m == LossMode::mse_only ? "mse_only" : "mse_plus_ps";
}

inline LossMode loss_mode_from_string(const std::string& s) {
  if (s == "mse_only") return LossMode::mse_only;
  if (s == "mse_plus_ps") return LossMode::mse_plus_ps;
  throw ConfigError("unknown loss mode '" + s + "'");
}

/** Switches that disable individual pieces of the structural loss. */
struct AblationFlags {
  bool no_corr = false;
  bool no_var = false;
  bool no_mean = false;
  bool no_patching = false;   // single whole-horizon patch instead of FAP
  bool no_weighting = false;  // fixed weights instead of gradient balancing
};

/**
 * Full description of one training run. `config_from_json` fills it from
 * the JSON schema documented in the README; every field has a default
 * except the dataset path.
 */
struct ExperimentConfig {
  std::string dataset_path;
  SplitSpec split;
  std::size_t lookback = 336;
  std::size_t horizon = 96;

  ModelKind model_kind = ModelKind::dlinear;
  std::size_t kernel_size = 25;
  bool channel_shared = true;

  LossMode loss_mode = LossMode::mse_plus_ps;
  double lambda = 3.0;
  std::size_t delta = 48;
  AblationFlags ablation;
  std::array<double, 3> fixed_weights{1.0, 1.0, 1.0};

  double learning_rate = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lr_decay = 0.5;

  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::size_t patience = 3;      // 0 disables early stopping
  std::size_t log_interval = 50; // 0 disables the weight trace

  std::uint64_t seed = 2021;
  std::string output_dir;
};

namespace detail {

inline void check_keys(const nlohmann::json& j,
                       std::initializer_list<const char*> allowed,
                       const char* where) {
  if (!j.is_object())
    throw ConfigError(std::string(where) + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
T json_get(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("key '") + key + "' has the wrong type");
  }
}

inline std::size_t json_get_size(const nlohmann::json& j, const char* key,
                                 std::size_t fallback, std::size_t min_value) {
  const auto v = json_get<std::int64_t>(j, key,
                                        static_cast<std::int64_t>(fallback));
  if (v < static_cast<std::int64_t>(min_value))
    throw ConfigError(std::string("key '") + key + "' must be >= " +
                      std::to_string(min_value));
  return static_cast<std::size_t>(v);
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  detail::check_keys(j,
                     {"dataset", "lookback", "horizon", "model", "loss",
                      "optimizer", "training", "seed", "output_dir"},
                     "config");
  ExperimentConfig c;

  if (!j.contains("dataset"))
    throw ConfigError("config requires a 'dataset' section");
  const auto& jd = j.at("dataset");
  detail::check_keys(jd, {"path", "split", "train_ratio", "val_ratio"},
                     "dataset");
  c.dataset_path = detail::json_get<std::string>(jd, "path", "");
  if (c.dataset_path.empty())
    throw ConfigError("dataset.path must be a non-empty string");
  c.split.mode = split_mode_from_string(
      detail::json_get<std::string>(jd, "split", "ratio"));
  c.split.train_ratio =
      detail::json_get<double>(jd, "train_ratio", c.split.train_ratio);
  c.split.val_ratio =
      detail::json_get<double>(jd, "val_ratio", c.split.val_ratio);
  if (c.split.train_ratio <= 0.0 || c.split.val_ratio <= 0.0 ||
      c.split.train_ratio + c.split.val_ratio >= 1.0)
    throw ConfigError("split ratios must be positive and sum below 1");

  c.lookback = detail::json_get_size(j, "lookback", c.lookback, 1);
  c.horizon = detail::json_get_size(j, "horizon", c.horizon, 1);

  if (j.contains("model")) {
    const auto& jm = j.at("model");
    detail::check_keys(jm, {"type", "kernel_size", "channel_shared"}, "model");
    c.model_kind = model_kind_from_string(
        detail::json_get<std::string>(jm, "type", "dlinear"));
    c.kernel_size = detail::json_get_size(jm, "kernel_size", c.kernel_size, 1);
    c.channel_shared =
        detail::json_get<bool>(jm, "channel_shared", c.channel_shared);
  }

  if (j.contains("loss")) {
    const auto& jl = j.at("loss");
    detail::check_keys(
        jl, {"mode", "lambda", "delta", "ablation", "fixed_weights"}, "loss");
    c.loss_mode = loss_mode_from_string(
        detail::json_get<std::string>(jl, "mode", "mse_plus_ps"));
    c.lambda = detail::json_get<double>(jl, "lambda", c.lambda);
    if (c.lambda < 0.0) throw ConfigError("loss.lambda must be >= 0");
    c.delta = detail::json_get_size(jl, "delta", c.delta, 2);
    if (jl.contains("ablation")) {
      const auto& ja = jl.at("ablation");
      detail::check_keys(
          ja, {"no_corr", "no_var", "no_mean", "no_patching", "no_weighting"},
          "ablation");
      c.ablation.no_corr = detail::json_get<bool>(ja, "no_corr", false);
      c.ablation.no_var = detail::json_get<bool>(ja, "no_var", false);
      c.ablation.no_mean = detail::json_get<bool>(ja, "no_mean", false);
      c.ablation.no_patching = detail::json_get<bool>(ja, "no_patching", false);
      c.ablation.no_weighting =
          detail::json_get<bool>(ja, "no_weighting", false);
    }
    if (jl.contains("fixed_weights")) {
      const auto& jw = jl.at("fixed_weights");
      if (!jw.is_array() || jw.size() != 3)
        throw ConfigError("loss.fixed_weights must hold exactly 3 numbers");
      for (std::size_t i = 0; i < 3; ++i) {
        c.fixed_weights[i] = jw[i].get<double>();
        if (c.fixed_weights[i] < 0.0)
          throw ConfigError("loss.fixed_weights must be non-negative");
      }
    }
  }

  if (j.contains("optimizer")) {
    const auto& jo = j.at("optimizer");
    detail::check_keys(
        jo, {"learning_rate", "beta1", "beta2", "epsilon", "lr_decay"},
        "optimizer");
    c.learning_rate =
        detail::json_get<double>(jo, "learning_rate", c.learning_rate);
    c.beta1 = detail::json_get<double>(jo, "beta1", c.beta1);
    c.beta2 = detail::json_get<double>(jo, "beta2", c.beta2);
    c.epsilon = detail::json_get<double>(jo, "epsilon", c.epsilon);
    c.lr_decay = detail::json_get<double>(jo, "lr_decay", c.lr_decay);
    if (c.learning_rate <= 0.0)
      throw ConfigError("optimizer.learning_rate must be > 0");
    if (c.epsilon < 0.0) throw ConfigError("optimizer.epsilon must be >= 0");
    if (c.lr_decay <= 0.0 || c.lr_decay > 1.0)
      throw ConfigError("optimizer.lr_decay must be in (0, 1]");
  }

  if (j.contains("training")) {
    const auto& jt = j.at("training");
    detail::check_keys(
        jt, {"epochs", "batch_size", "patience", "log_interval"}, "training");
    c.epochs = detail::json_get_size(jt, "epochs", c.epochs, 1);
    c.batch_size = detail::json_get_size(jt, "batch_size", c.batch_size, 1);
    c.patience = detail::json_get_size(jt, "patience", c.patience, 0);
    c.log_interval =
        detail::json_get_size(jt, "log_interval", c.log_interval, 0);
  }

  c.seed = detail::json_get<std::uint64_t>(j, "seed", c.seed);
  c.output_dir = detail::json_get<std::string>(j, "output_dir", c.output_dir);
  return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["dataset"] = {{"path", c.dataset_path},
                  {"split", to_string(c.split.mode)},
                  {"train_ratio", c.split.train_ratio},
                  {"val_ratio", c.split.val_ratio}};
  j["lookback"] = c.lookback;
  j["horizon"] = c.horizon;
  j["model"] = {{"type", to_string(c.model_kind)},
                {"kernel_size", c.kernel_size},
                {"channel_shared", c.channel_shared}};
  j["loss"] = {{"mode", to_string(c.loss_mode)},
               {"lambda", c.lambda},
               {"delta", c.delta},
               {"ablation",
                {{"no_corr", c.ablation.no_corr},
                 {"no_var", c.ablation.no_var},
                 {"no_mean", c.ablation.no_mean},
                 {"no_patching", c.ablation.no_patching},
                 {"no_weighting", c.ablation.no_weighting}}},
               {"fixed_weights", c.fixed_weights}};
  j["optimizer"] = {{"learning_rate", c.learning_rate},
                    {"beta1", c.beta1},
                    {"beta2", c.beta2},
                    {"epsilon", c.epsilon},
                    {"lr_decay", c.lr_decay}};
  j["training"] = {{"epochs", c.epochs},
                   {"batch_size", c.batch_size},
                   {"patience", c.patience},
                   {"log_interval", c.log_interval}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

/** Parses a config file; see config_from_json for the schema. */
inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config JSON: " + std::string(e.what()));
  }
  return config_from_json(j);
}

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_mse = 0.0;
  double seconds = 0.0;
  double learning_rate = 0.0;
};

/**
 * Everything produced by one training run. The model carries the
 * best-validation parameters; `data` keeps the prepared dataset so
 * evaluation artifacts can be rebuilt without re-reading the CSV.
 */
struct RunResult {
  ExperimentConfig config;
  std::vector<std::string> channel_names;
  PreparedData data;
  ForecastModel model;
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 1-based epoch with the lowest val MSE
  double best_val_mse = 0.0;
  std::size_t total_steps = 0;
  MetricsReport test;
  std::vector<WeightState> weight_trace;
};

namespace detail {

/**
 * Fisher-Yates with an explicit modulo draw, so the permutation depends
 * only on the engine stream and stays stable across standard libraries.
 */
inline void shuffle_in_place(std::vector<std::size_t>& v,
                             std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng() % i]);
}

/**
 * Detached forecast over every window of a view, gathered in fixed-size
 * chunks. Returns (truth, prediction) as (B, C, horizon) tensors.
 */
inline std::pair<Tensor, Tensor> forecast_view(const ForecastModel& model,
                                               const PreparedData& data,
                                               const DatasetView& view,
                                               std::size_t lookback,
                                               std::size_t horizon) {
  const auto starts = window_starts(view, lookback, horizon);
  if (starts.empty())
    throw ConfigError("split yields no evaluation windows (rows " +
                      std::to_string(view.rows) + ", lookback " +
                      std::to_string(lookback) + ", horizon " +
                      std::to_string(horizon) + ")");
  const std::size_t b_dim = starts.size();
  const std::size_t c_dim = data.channels;
  std::vector<double> truth(b_dim * c_dim * horizon);
  std::vector<double> pred(b_dim * c_dim * horizon);

  const std::size_t chunk = 512;
  for (std::size_t off = 0; off < b_dim; off += chunk) {
    const std::size_t n = std::min(chunk, b_dim - off);
    const std::vector<std::size_t> part(starts.begin() +
                                            static_cast<std::ptrdiff_t>(off),
                                        starts.begin() +
                                            static_cast<std::ptrdiff_t>(off + n));
    auto [x, y] = gather_windows(data, view, part, lookback, horizon);
    const Tensor yhat = model.predict(x);
    std::copy(y.values().begin(), y.values().end(),
              truth.begin() +
                  static_cast<std::ptrdiff_t>(off * c_dim * horizon));
    std::copy(yhat.values().begin(), yhat.values().end(),
              pred.begin() +
                  static_cast<std::ptrdiff_t>(off * c_dim * horizon));
  }
  return {Tensor({b_dim, c_dim, horizon}, std::move(truth)),
          Tensor({b_dim, c_dim, horizon}, std::move(pred))};
}

/** Mean squared error of detached forecasts over a whole view. */
inline double view_mse(const ForecastModel& model, const PreparedData& data,
                       const DatasetView& view, std::size_t lookback,
                       std::size_t horizon) {
  auto [truth, pred] = forecast_view(model, data, view, lookback, horizon);
  const auto& tv = truth.values();
  const auto& pv = pred.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < tv.size(); ++i) {
    const double d = pv[i] - tv[i];
    acc += d * d;
  }
  return acc / static_cast<double>(tv.size());
}

/**
 * One optimizer step on a batch: forward, objective assembly (optionally
 * with the structural loss and dynamic weighting), backward, Adam update.
 * Returns the objective value.
 *
 * @throws TrainingError when the objective is non-finite
 */
inline double train_step(ForecastModel& model, Adam& opt, const Tensor& x,
                         const Tensor& y, const ExperimentConfig& cfg,
                         bool ps_active, std::size_t epoch, std::size_t step,
                         std::vector<WeightState>& trace) {
  Tape tape;
  const ForwardResult fw = model.forward(tape, x);
  const Tensor l_mse = mse_loss(y, fw.pred);
  Tensor objective = l_mse;

  if (ps_active) {
    const PatchPlan plan =
        cfg.ablation.no_patching
            ? single_patch_plan(cfg.horizon)
            : make_patch_plan(real_fft_amplitudes(y), cfg.horizon, cfg.delta);
    const PatchSet truth_patches = segment(y, plan);
    const PatchSet pred_patches = segment(fw.pred, plan);
    const Tensor l_corr = corr_loss(truth_patches.data, pred_patches.data);
    const Tensor l_var = var_loss(truth_patches.data, pred_patches.data);
    const Tensor l_mean = mean_loss(truth_patches.data, pred_patches.data);
    const std::array<bool, 3> active{!cfg.ablation.no_corr,
                                     !cfg.ablation.no_var,
                                     !cfg.ablation.no_mean};

    WeightState ws;
    ws.step = step;
    std::array<double, 3> w{};
    if (cfg.ablation.no_weighting) {
      w = cfg.fixed_weights;
      for (std::size_t i = 0; i < 3; ++i)
        if (!active[i]) w[i] = 0.0;
    } else {
      std::array<double, 3> norms{0.0, 0.0, 0.0};
      if (active[0]) norms[0] = grad_norm(tape, l_corr, fw.head_nodes);
      if (active[1]) norms[1] = grad_norm(tape, l_var, fw.head_nodes);
      if (active[2]) norms[2] = grad_norm(tape, l_mean, fw.head_nodes);
      const ScaleFactors sf = scale_factors(y, fw.pred);
      w = compute_weights(norms, sf.c, sf.v, active);
      double g_bar = 0.0;
      std::size_t n_active = 0;
      for (std::size_t i = 0; i < 3; ++i)
        if (active[i]) {
          g_bar += norms[i];
          ++n_active;
        }
      ws.g_corr = norms[0];
      ws.g_var = norms[1];
      ws.g_mean = norms[2];
      ws.g_bar = n_active ? g_bar / static_cast<double>(n_active) : 0.0;
      ws.c = sf.c;
      ws.v = sf.v;
    }
    ws.alpha = w[0];
    ws.beta = w[1];
    ws.gamma = w[2];
    if (cfg.log_interval > 0 && (step - 1) % cfg.log_interval == 0)
      trace.push_back(ws);

    const Tensor l_ps =
        add(add(mul(l_corr, Tensor::scalar(w[0])),
                mul(l_var, Tensor::scalar(w[1]))),
            mul(l_mean, Tensor::scalar(w[2])));
    TotalLossConfig tc;
    tc.lambda = cfg.lambda;
    tc.gdw_enabled = !cfg.ablation.no_weighting;
    tc.fixed_weights = cfg.fixed_weights;
    objective = total_loss(l_mse, l_ps, tc);
  }

  const double value = objective.value();
  if (!std::isfinite(value))
    throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                        ", step " + std::to_string(step));

  const auto grads = tape.backward(objective, fw.param_nodes);
  std::vector<std::vector<double>> grad_vecs;
  grad_vecs.reserve(fw.param_nodes.size());
  for (int node : fw.param_nodes)
    grad_vecs.push_back(grads.at(node).values());
  opt.step(model.params(), grad_vecs);
  return value;
}

}  // namespace detail

/** Full forecast-quality report for one view of a dataset. */
inline MetricsReport evaluate_split(const ForecastModel& model,
                                    const PreparedData& data,
                                    const DatasetView& view,
                                    std::size_t lookback,
                                    std::size_t horizon) {
  auto [truth, pred] =
      detail::forecast_view(model, data, view, lookback, horizon);
  return evaluate(truth, pred);
}

/**
 * Trains a model per the config: shuffled mini-batches with the last
 * partial batch kept, per-epoch learning-rate decay, early stopping on
 * validation MSE with the best parameters restored before the final test
 * evaluation. Deterministic for a fixed config and seed, except for the
 * per-epoch wall-clock seconds.
 *
 * @param on_epoch optional observer invoked after each epoch completes
 */
inline RunResult train(
    const ExperimentConfig& cfg,
    const std::function<void(const EpochStats&)>& on_epoch = {}) {
  RunResult res;
  res.config = cfg;

  const RawDataset raw = load_csv(resolve_data_path(cfg.dataset_path));
  res.channel_names = raw.channel_names;
  res.data = prepare(raw, cfg.split, cfg.lookback);
  const PreparedData& data = res.data;
  const std::size_t L = cfg.lookback, T = cfg.horizon;

  const auto train_starts = window_starts(data.splits.train, L, T);
  if (train_starts.empty())
    throw ConfigError("training split yields no windows (rows " +
                      std::to_string(data.splits.train.rows) + ", lookback " +
                      std::to_string(L) + ", horizon " + std::to_string(T) +
                      ")");

  ModelConfig mc;
  mc.kind = cfg.model_kind;
  mc.lookback = L;
  mc.horizon = T;
  mc.channels = data.channels;
  mc.kernel_size = cfg.kernel_size;
  mc.channel_shared = cfg.channel_shared;
  ForecastModel model = ForecastModel::init(mc, cfg.seed);
  Adam opt(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);

  const bool ps_active =
      cfg.loss_mode == LossMode::mse_plus_ps && cfg.lambda > 0.0;

  std::vector<Param> best_params = model.params();
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0, bad_epochs = 0, global_step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<std::size_t> order = train_starts;
    std::mt19937_64 rng(cfg.seed * 1000003ull + epoch);
    detail::shuffle_in_place(order, rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - off);
      const std::vector<std::size_t> idx(
          order.begin() + static_cast<std::ptrdiff_t>(off),
          order.begin() + static_cast<std::ptrdiff_t>(off + n));
      auto [x, y] = gather_windows(data, data.splits.train, idx, L, T);
      ++global_step;
      loss_sum += detail::train_step(model, opt, x, y, cfg, ps_active, epoch,
                                     global_step, res.weight_trace);
      ++batches;
    }

    const double lr_used = opt.learning_rate();
    opt.set_learning_rate(lr_used * cfg.lr_decay);

    const double val_mse = detail::view_mse(model, data, data.splits.val, L, T);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    res.epochs.push_back({epoch, loss_sum / static_cast<double>(batches),
                          val_mse, seconds, lr_used});
    if (on_epoch) on_epoch(res.epochs.back());

    if (val_mse < best_val) {
      best_val = val_mse;
      best_epoch = epoch;
      best_params = model.params();
      bad_epochs = 0;
    } else if (cfg.patience > 0 && ++bad_epochs >= cfg.patience) {
      break;
    }
  }

  model.params() = best_params;
  res.best_epoch = best_epoch;
  res.best_val_mse = best_val;
  res.total_steps = global_step;
  res.test = evaluate_split(model, data, data.splits.test, L, T);
  res.model = std::move(model);
  return res;
}

struct AblationRow {
  std::string name;
  std::size_t epochs_run = 0;
  double best_val_mse = 0.0;
  MetricsReport test;
};

/**
 * Trains the full structural loss plus its five single-switch ablations,
 * all from the same seed, and reports their test metrics side by side.
 */
inline std::vector<AblationRow> run_ablation(const ExperimentConfig& base) {
  if (base.loss_mode != LossMode::mse_plus_ps)
    throw ConfigError("ablation requires loss.mode = mse_plus_ps");
  std::vector<std::pair<std::string, AblationFlags>> variants{
      {"full", {}},
      {"no_corr", {.no_corr = true}},
      {"no_var", {.no_var = true}},
      {"no_mean", {.no_mean = true}},
      {"no_patching", {.no_patching = true}},
      {"no_weighting", {.no_weighting = true}}};
  std::vector<AblationRow> rows;
  rows.reserve(variants.size());
  for (const auto& [name, flags] : variants) {
    ExperimentConfig cfg = base;
    cfg.ablation = flags;
    const RunResult r = train(cfg);
    rows.push_back({name, r.epochs.size(), r.best_val_mse, r.test});
  }
  return rows;
}

struct SweepRow {
  std::string param;
  double value = 0.0;
  std::size_t epochs_run = 0;
  double best_val_mse = 0.0;
  MetricsReport test;
};

/**
 * Trains one run per value of a hyperparameter ("lambda" or "delta"),
 * holding everything else, including the seed, fixed.
 */
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& base,
                                       const std::string& param,
                                       const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep requires at least one value");
  if (param != "lambda" && param != "delta")
    throw ConfigError("sweep parameter must be 'lambda' or 'delta', got '" +
                      param + "'");
  std::vector<SweepRow> rows;
  rows.reserve(values.size());
  for (double v : values) {
    ExperimentConfig cfg = base;
    cfg.loss_mode = LossMode::mse_plus_ps;
    if (param == "lambda") {
      if (v < 0.0) throw ConfigError("lambda values must be >= 0");
      cfg.lambda = v;
    } else {
      if (v < 2.0 || std::floor(v) != v)
        throw ConfigError("delta values must be integers >= 2");
      cfg.delta = static_cast<std::size_t>(v);
    }
    const RunResult r = train(cfg);
    rows.push_back({param, v, r.epochs.size(), r.best_val_mse, r.test});
  }
  return rows;
}

inline nlohmann::json metrics_to_json(const MetricsReport& m) {
  return {{"mse", m.mse},
          {"mae", m.mae},
          {"dtw", m.dtw},
          {"tdi", m.tdi},
          {"pcc", m.pcc}};
}

inline nlohmann::json weight_state_to_json(const WeightState& ws) {
  return {{"step", ws.step}, {"g_corr", ws.g_corr}, {"g_var", ws.g_var},
          {"g_mean", ws.g_mean}, {"g_bar", ws.g_bar}, {"alpha", ws.alpha},
          {"beta", ws.beta},     {"gamma", ws.gamma}, {"c", ws.c},
          {"v", ws.v}};
}

inline nlohmann::json result_to_json(const RunResult& r) {
  nlohmann::json j;
  j["config"] = config_to_json(r.config);
  j["channels"] = r.channel_names;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : r.epochs)
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"val_mse", e.val_mse},
                           {"seconds", e.seconds},
                           {"learning_rate", e.learning_rate}});
  j["best_epoch"] = r.best_epoch;
  j["best_val_mse"] = r.best_val_mse;
  j["total_steps"] = r.total_steps;
  j["test"] = metrics_to_json(r.test);
  return j;
}

inline nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows)
    j.push_back({{"variant", r.name},
                 {"epochs_run", r.epochs_run},
                 {"best_val_mse", r.best_val_mse},
                 {"test", metrics_to_json(r.test)}});
  return j;
}

inline nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows)
    j.push_back({{"param", r.param},
                 {"value", r.value},
                 {"epochs_run", r.epochs_run},
                 {"best_val_mse", r.best_val_mse},
                 {"test", metrics_to_json(r.test)}});
  return j;
}

/**
 * Writes the per-window test forecasts as CSV: one row per (window, step)
 * with truth and prediction columns per channel, all on the normalized
 * scale the model was trained on.
 */
inline void write_predictions_csv(const RunResult& r, const std::string& path) {
  const std::size_t L = r.config.lookback, T = r.config.horizon;
  auto [truth, pred] =
      detail::forecast_view(r.model, r.data, r.data.splits.test, L, T);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write predictions to " + path);
  out << "window,step";
  for (const auto& name : r.channel_names)
    out << ",truth_" << name << ",pred_" << name;
  out << "\n";
  const std::size_t b_dim = truth.shape()[0];
  const std::size_t c_dim = truth.shape()[1];
  const auto& tv = truth.values();
  const auto& pv = pred.values();
  char buf[64];
  for (std::size_t b = 0; b < b_dim; ++b)
    for (std::size_t t = 0; t < T; ++t) {
      out << b << ',' << t;
      for (std::size_t c = 0; c < c_dim; ++c) {
        const std::size_t at = (b * c_dim + c) * T + t;
        std::snprintf(buf, sizeof(buf), ",%.12g,%.12g", tv[at], pv[at]);
        out << buf;
      }
      out << '\n';
    }
}

/**
 * Writes result.json, weights_trace.jsonl, checkpoint.json and (optionally)
 * predictions.csv into a directory, creating it if needed.
 */
inline void write_artifacts(const RunResult& r, const std::string& dir,
                            bool predictions = true) {
  namespace fs = std::filesystem;
  if (dir.empty()) throw ConfigError("output directory must not be empty");
  fs::create_directories(dir);

  {
    std::ofstream out(dir + "/result.json");
    if (!out) throw ConfigError("cannot write " + dir + "/result.json");
    out << result_to_json(r).dump(2) << "\n";
  }
  {
    std::ofstream out(dir + "/weights_trace.jsonl");
    if (!out) throw ConfigError("cannot write " + dir + "/weights_trace.jsonl");
    for (const auto& ws : r.weight_trace)
      out << weight_state_to_json(ws).dump() << "\n";
  }
  r.model.save(dir + "/checkpoint.json");
  if (predictions) write_predictions_csv(r, dir + "/predictions.csv");
}

}  // namespace psloss
