#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "tensor.hpp"

namespace psloss {

enum class ModelKind { dlinear, linear };

inline std::string to_string(ModelKind kind) {
  return kind == ModelKind::dlinear ? "dlinear" : "linear";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "dlinear") return ModelKind::dlinear;
  if (s == "linear") return ModelKind::linear;
  throw ConfigError("unknown model kind '" + s + "'");
}

struct ModelConfig {
  ModelKind kind = ModelKind::dlinear;
  std::size_t lookback = 336;
  std::size_t horizon = 96;
  std::size_t channels = 1;
  std::size_t kernel_size = 25;  // moving-average window; must be odd
  bool channel_shared = true;
};

/** Named parameter block with its own storage. */
struct Param {
  std::string name;
  Shape shape;
  std::vector<double> value;
};

/** Output of an attached forward pass. */
struct ForwardResult {
  Tensor pred;                  // (B, C, T)
  std::vector<int> param_nodes;  // node per parameter, aligned with params()
  std::vector<int> head_nodes;   // output-layer weight matrices only
};

/**
 * Moving-average trend / remainder decomposition along the last axis with
 * replicate padding of (kernel - 1) / 2 on each side. Returns detached
 * (trend, seasonal) tensors with seasonal = x - trend held exactly.
 *
 * @throws ConfigError when kernel is even or zero
 * @throws ShapeError  when x is not rank 3
 */
inline std::pair<Tensor, Tensor> decompose(const Tensor& x,
                                           std::size_t kernel) {
  if (kernel == 0 || kernel % 2 == 0)
    throw ConfigError("decomposition kernel must be odd, got " +
                      std::to_string(kernel));
  if (x.rank() != 3)
    throw ShapeError("decompose expects (batch, channel, time), got " +
                     shape_str(x.shape()));
  const std::size_t n_series = x.shape()[0] * x.shape()[1];
  const std::size_t len = x.shape()[2];
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(kernel / 2);

  const auto& v = x.values();
  std::vector<double> trend(v.size()), seasonal(v.size());
  for (std::size_t s = 0; s < n_series; ++s) {
    const double* src = v.data() + s * len;
    for (std::size_t t = 0; t < len; ++t) {
      double acc = 0.0;
      for (std::ptrdiff_t o = -half; o <= half; ++o) {
        std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(t) + o;
        idx = std::max<std::ptrdiff_t>(
            0, std::min(idx, static_cast<std::ptrdiff_t>(len) - 1));
        acc += src[static_cast<std::size_t>(idx)];
      }
      const std::size_t at = s * len + t;
      trend[at] = acc / static_cast<double>(kernel);
      seasonal[at] = v[at] - trend[at];
    }
  }
  return {Tensor(x.shape(), std::move(trend)),
          Tensor(x.shape(), std::move(seasonal))};
}

namespace detail {

/** Stacks C tensors of shape (B, T) into (B, C, T); gradients slice back. */
inline Tensor stack_channels(const std::vector<Tensor>& chans) {
  const std::size_t c_dim = chans.size();
  const std::size_t b_dim = chans[0].shape()[0];
  const std::size_t t_len = chans[0].shape()[1];

  Tape* tape = nullptr;
  for (const auto& ch : chans)
    if (ch.attached()) tape = ch.tape();

  std::vector<double> out(b_dim * c_dim * t_len);
  for (std::size_t c = 0; c < c_dim; ++c) {
    const auto& v = chans[c].values();
    for (std::size_t b = 0; b < b_dim; ++b)
      std::copy(v.begin() + static_cast<std::ptrdiff_t>(b * t_len),
                v.begin() + static_cast<std::ptrdiff_t>((b + 1) * t_len),
                out.begin() +
                    static_cast<std::ptrdiff_t>((b * c_dim + c) * t_len));
  }

  Shape shape{b_dim, c_dim, t_len};
  int node = -1;
  if (tape) {
    std::vector<int> inputs, ids(c_dim, -1);
    for (std::size_t c = 0; c < c_dim; ++c)
      if (chans[c].attached()) {
        ids[c] = chans[c].node();
        inputs.push_back(ids[c]);
      }
    node = tape->record(
        shape, std::move(inputs),
        [ids, b_dim, c_dim, t_len](const std::vector<double>& g, Tape& t) {
          for (std::size_t c = 0; c < c_dim; ++c) {
            if (ids[c] < 0) continue;
            double* ga = t.grad_buf(ids[c]).data();
            for (std::size_t b = 0; b < b_dim; ++b)
              for (std::size_t j = 0; j < t_len; ++j)
                ga[b * t_len + j] += g[(b * c_dim + c) * t_len + j];
          }
        });
  }
  return Tensor::from_op(std::move(shape), std::move(out), tape, node);
}

/** Extracts channel c of a (B, C, L) value block as a detached (B, L) tensor. */
inline Tensor slice_channel(const Tensor& x, std::size_t c) {
  const std::size_t b_dim = x.shape()[0];
  const std::size_t c_dim = x.shape()[1];
  const std::size_t len = x.shape()[2];
  std::vector<double> out(b_dim * len);
  const auto& v = x.values();
  for (std::size_t b = 0; b < b_dim; ++b)
    std::copy(v.begin() + static_cast<std::ptrdiff_t>((b * c_dim + c) * len),
              v.begin() + static_cast<std::ptrdiff_t>((b * c_dim + c + 1) * len),
              out.begin() + static_cast<std::ptrdiff_t>(b * len));
  return Tensor({b_dim, len}, std::move(out));
}

}  // namespace detail

/**
 * Direct linear forecaster, optionally with trend/seasonal decomposition
 * (the dlinear kind). Parameters live in plain storage; a forward pass
 * attaches them to a caller-provided tape, so the model itself stays const
 * during training steps.
 */
class ForecastModel {
 public:
  /** Fresh model with uniform(-1/sqrt(L), 1/sqrt(L)) parameters. */
  static ForecastModel init(const ModelConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    ForecastModel m;
    m.cfg_ = cfg;
    const double bound =
        1.0 / std::sqrt(static_cast<double>(cfg.lookback));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto fill = [&](const std::string& name, Shape shape) {
      Param p{name, std::move(shape), {}};
      p.value.resize(shape_size(p.shape));
      for (auto& x : p.value) x = dist(rng);
      m.params_.push_back(std::move(p));
    };

    const std::size_t groups = cfg.channel_shared ? 1 : cfg.channels;
    for (std::size_t g = 0; g < groups; ++g) {
      const std::string tag = cfg.channel_shared ? "" : "_c" + std::to_string(g);
      if (cfg.kind == ModelKind::dlinear) {
        fill("w_trend" + tag, {cfg.lookback, cfg.horizon});
        fill("b_trend" + tag, {1, cfg.horizon});
        fill("w_seasonal" + tag, {cfg.lookback, cfg.horizon});
        fill("b_seasonal" + tag, {1, cfg.horizon});
      } else {
        fill("w" + tag, {cfg.lookback, cfg.horizon});
        fill("b" + tag, {1, cfg.horizon});
      }
    }
    return m;
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  /** Forward pass recorded on a tape; gradients reach every parameter. */
  ForwardResult forward(Tape& tape, const Tensor& x) const {
    return run(&tape, x);
  }

  /** Inference-only forward pass; nothing is recorded. */
  Tensor predict(const Tensor& x) const { return run(nullptr, x).pred; }

  void save(const std::string& path) const {
    nlohmann::json j;
    j["format"] = "psloss-checkpoint";
    j["version"] = 1;
    j["model"] = to_string(cfg_.kind);
    j["lookback"] = cfg_.lookback;
    j["horizon"] = cfg_.horizon;
    j["channels"] = cfg_.channels;
    j["kernel_size"] = cfg_.kernel_size;
    j["channel_shared"] = cfg_.channel_shared;
    j["params"] = nlohmann::json::array();
    for (const auto& p : params_)
      j["params"].push_back(
          {{"name", p.name}, {"shape", p.shape}, {"values", p.value}});
    std::ofstream out(path);
    if (!out) throw CheckpointError("cannot write checkpoint to " + path);
    out << j.dump(2) << "\n";
  }

  static ForecastModel load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("cannot read checkpoint from " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError("malformed checkpoint: " + std::string(e.what()));
    }
    try {
      if (j.at("format") != "psloss-checkpoint")
        throw CheckpointError("not a checkpoint file: " + path);
      if (j.at("version") != 1)
        throw CheckpointError("unsupported checkpoint version");
      ModelConfig cfg;
      cfg.kind = model_kind_from_string(j.at("model"));
      cfg.lookback = j.at("lookback");
      cfg.horizon = j.at("horizon");
      cfg.channels = j.at("channels");
      cfg.kernel_size = j.at("kernel_size");
      cfg.channel_shared = j.at("channel_shared");
      validate(cfg);

      ForecastModel m;
      m.cfg_ = cfg;
      for (const auto& pj : j.at("params")) {
        Param p;
        p.name = pj.at("name");
        p.shape = pj.at("shape").get<Shape>();
        p.value = pj.at("values").get<std::vector<double>>();
        if (shape_size(p.shape) != p.value.size())
          throw CheckpointError("parameter '" + p.name +
                                "' has inconsistent shape");
        m.params_.push_back(std::move(p));
      }
      ForecastModel fresh = init(cfg, 0);
      if (fresh.params_.size() != m.params_.size())
        throw CheckpointError("parameter list does not match model layout");
      for (std::size_t i = 0; i < m.params_.size(); ++i)
        if (fresh.params_[i].name != m.params_[i].name ||
            fresh.params_[i].shape != m.params_[i].shape)
          throw CheckpointError("parameter list does not match model layout");
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError("malformed checkpoint: " + std::string(e.what()));
    }
  }

 private:
  static void validate(const ModelConfig& cfg) {
    if (cfg.lookback == 0 || cfg.horizon == 0 || cfg.channels == 0)
      throw ConfigError("model dimensions must be positive");
    if (cfg.kind == ModelKind::dlinear &&
        (cfg.kernel_size == 0 || cfg.kernel_size % 2 == 0))
      throw ConfigError("decomposition kernel must be odd, got " +
                        std::to_string(cfg.kernel_size));
  }

  ForwardResult run(Tape* tape, const Tensor& x) const {
    if (x.rank() != 3)
      throw ShapeError("forward expects (batch, channel, lookback), got " +
                       shape_str(x.shape()));
    if (x.shape()[1] != cfg_.channels || x.shape()[2] != cfg_.lookback)
      throw ShapeError("input " + shape_str(x.shape()) +
                       " does not match model (channels " +
                       std::to_string(cfg_.channels) + ", lookback " +
                       std::to_string(cfg_.lookback) + ")");
    const std::size_t b_dim = x.shape()[0];

    ForwardResult res;
    std::vector<Tensor> attached;
    attached.reserve(params_.size());
    for (const auto& p : params_) {
      Tensor t(p.shape, p.value);
      if (tape) {
        t = t.attach(*tape);
        res.param_nodes.push_back(t.node());
        if (p.name.rfind("w", 0) == 0) res.head_nodes.push_back(t.node());
      }
      attached.push_back(std::move(t));
    }

    Tensor trend, seasonal;
    if (cfg_.kind == ModelKind::dlinear) {
      auto parts = decompose(x.detached(), cfg_.kernel_size);
      trend = std::move(parts.first);
      seasonal = std::move(parts.second);
    }

    if (cfg_.channel_shared) {
      const Shape flat{b_dim * cfg_.channels, cfg_.lookback};
      Tensor pred2;
      if (cfg_.kind == ModelKind::dlinear) {
        Tensor head_t = add(matmul(reshape(trend, flat), attached[0]),
                            attached[1]);
        Tensor head_s = add(matmul(reshape(seasonal, flat), attached[2]),
                            attached[3]);
        pred2 = add(head_t, head_s);
      } else {
        pred2 = add(matmul(reshape(x.detached(), flat), attached[0]),
                    attached[1]);
      }
      res.pred = reshape(pred2, {b_dim, cfg_.channels, cfg_.horizon});
    } else {
      const std::size_t per = cfg_.kind == ModelKind::dlinear ? 4 : 2;
      std::vector<Tensor> chans;
      chans.reserve(cfg_.channels);
      for (std::size_t c = 0; c < cfg_.channels; ++c) {
        Tensor out_c;
        if (cfg_.kind == ModelKind::dlinear) {
          out_c = add(add(matmul(detail::slice_channel(trend, c),
                                 attached[c * per]),
                          attached[c * per + 1]),
                      add(matmul(detail::slice_channel(seasonal, c),
                                 attached[c * per + 2]),
                          attached[c * per + 3]));
        } else {
          out_c = add(matmul(detail::slice_channel(x.detached(), c),
                             attached[c * per]),
                      attached[c * per + 1]);
        }
        chans.push_back(std::move(out_c));
      }
      res.pred = detail::stack_channels(chans);
    }
    return res;
  }

  ModelConfig cfg_;
  std::vector<Param> params_;
};

/**
 * Adam optimizer with bias correction. Moment buffers are allocated on the
 * first step and keyed by parameter position.
 */
class Adam {
 public:
  explicit Adam(double lr = 0.005, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (lr < 0.0 || beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
      throw ConfigError("invalid optimizer hyperparameters");
  }

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  std::size_t steps() const { return t_; }

  /**
   * One update over all parameters; `grads` must align with `params`.
   *
   * @throws TrainingError on any non-finite gradient
   */
  void step(std::vector<Param>& params,
            const std::vector<std::vector<double>>& grads) {
    if (grads.size() != params.size())
      throw ShapeError("gradient list does not match parameter list");
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i].value.size(), 0.0);
        v_[i].assign(params[i].value.size(), 0.0);
      }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (grads[i].size() != params[i].value.size())
        throw ShapeError("gradient size does not match parameter '" +
                         params[i].name + "'");
      for (double g : grads[i])
        if (!std::isfinite(g))
          throw TrainingError("non-finite gradient in parameter '" +
                              params[i].name + "'");
    }

    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& w = params[i].value;
      const auto& g = grads[i];
      for (std::size_t k = 0; k < w.size(); ++k) {
        m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * g[k];
        v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * g[k] * g[k];
        const double mhat = m_[i][k] / bc1;
        const double vhat = v_[i][k] / bc2;
        w[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace psloss
