// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <iostream>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gdasjae/autodiff.hpp"
#include "gdasjae/random.hpp"
#include "gdasjae/tensor.hpp"

namespace gdasjae {

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

using WarningHandler = std::function<void(std::string_view)>;

/// Process-wide sink for non-fatal warnings; writes to stderr by default.
inline WarningHandler& warning_handler() {
  static WarningHandler handler = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
  return handler;
}

inline void warn(std::string_view msg) {
  if (warning_handler()) warning_handler()(msg);
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

/// Fully connected layer, y = act(x W + b). `activated == false` gives raw
/// outputs (the classifier head).
struct LinearLayer {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out
  double activation_slope = 0.01;
  bool activated = true;

  std::size_t in_width() const noexcept { return weight.value.rows(); }
  std::size_t out_width() const noexcept { return weight.value.cols(); }
  std::size_t parameter_count() const noexcept { return weight.value.size() + bias.value.size(); }
};

/// Weights uniform in [-sqrt(6/in), sqrt(6/in)], zero bias.
inline LinearLayer linear_init(std::size_t in_width, std::size_t out_width, Rng& rng, double slope = 0.01,
                               bool activated = true, const std::string& name = "linear") {
  if (in_width < 1 || out_width < 1) throw ConfigError("linear_init: widths must be >= 1");
  const double bound = std::sqrt(6.0 / static_cast<double>(in_width));
  Tensor w(in_width, out_width);
  for (double& v : w.values()) v = uniform(rng, -bound, bound);
  return LinearLayer{Parameter(name + ".weight", std::move(w)), Parameter(name + ".bias", Tensor(1, out_width)),
                     slope, activated};
}

inline Var linear_forward(Graph& g, LinearLayer& layer, Var x) {
  const Tensor& X = g.value(x);
  if (X.cols() != layer.in_width()) {
    throw DimensionError("linear_forward: input " + X.shape() + " into layer " + layer.weight.name + " expecting " +
                         std::to_string(layer.in_width()) + " columns");
  }
  Var y = add_bias(matmul(x, g.parameter(layer.weight)), g.parameter(layer.bias));
  return layer.activated ? leaky_relu(y, layer.activation_slope) : y;
}

/// Graph-free evaluation.
inline Tensor linear_forward(LinearLayer& layer, const Tensor& x) {
  Graph g;
  return g.value(linear_forward(g, layer, g.constant(x)));
}

// ---------------------------------------------------------------------------
// Optimizer configuration
// ---------------------------------------------------------------------------

enum class LrScheduler { cosine, constant };

/// Cell-weight SGD settings; defaults are the published cell-search values.
struct SgdConfig {
  double base_lr = 0.0005;
  double eta_min = 0.001;
  int epochs = 100;
  double weight_decay = 0.000001;
  double momentum = 0.9;
  bool nesterov = true;
  LrScheduler scheduler = LrScheduler::cosine;
  int batch_size = 32;

  void validate() const {
    if (!(base_lr > 0.0)) throw ConfigError("sgd: LR must be > 0");
    if (epochs <= 0) throw ConfigError("sgd: epochs must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd: momentum must lie in [0,1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("sgd: decay must be >= 0");
    if (!(eta_min >= 0.0)) throw ConfigError("sgd: eta_min must be >= 0");
    if (batch_size < 1) throw ConfigError("sgd: batch_size must be >= 1");
  }
};

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("adam: lr must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("adam: betas must lie in [0,1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("adam: epsilon must be > 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("adam: weight_decay must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Learning-rate schedule
// ---------------------------------------------------------------------------

/// eta_min + (base_lr - eta_min)(1 + cos(pi * epoch / epochs)) / 2, evaluated
/// literally; with eta_min > base_lr the schedule rises.
inline double cosine_lr(int epoch, const SgdConfig& cfg) {
  if (epoch < 0 || epoch > cfg.epochs) {
    throw ContractError("cosine_lr: epoch " + std::to_string(epoch) + " outside [0," + std::to_string(cfg.epochs) +
                        "]");
  }
  if (cfg.scheduler == LrScheduler::constant) return cfg.base_lr;
  if (epoch == 0) return cfg.base_lr;
  if (epoch == cfg.epochs) return cfg.eta_min;
  const double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs);
  return cfg.eta_min + 0.5 * (cfg.base_lr - cfg.eta_min) * (1.0 + std::cos(std::numbers::pi * t));
}

/// Human-readable problems with a schedule that is valid but probably unintended.
inline std::vector<std::string> schedule_warnings(const SgdConfig& cfg) {
  std::vector<std::string> out;
  if (cfg.scheduler == LrScheduler::cosine && cfg.eta_min > cfg.base_lr) {
    out.push_back("cosine schedule has eta_min (" + std::to_string(cfg.eta_min) + ") > LR (" +
                  std::to_string(cfg.base_lr) + "); the learning rate will increase over training");
  }
  return out;
}

/// Per-epoch schedule bound to a validated config. With `report` set,
/// construction passes schedule_warnings() to warn().
class LrSchedule {
 public:
  explicit LrSchedule(SgdConfig cfg, bool report = true) : cfg_(cfg) {
    cfg_.validate();
    if (report)
      for (const auto& w : schedule_warnings(cfg_)) warn(w);
  }

  double operator()(int epoch) const { return cosine_lr(epoch, cfg_); }
  const SgdConfig& config() const noexcept { return cfg_; }

 private:
  SgdConfig cfg_;
};

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

/// Moment buffers for one parameter group. Buffers are created on first step
/// and must line up with the parameter list from then on.
struct OptimizerState {
  std::vector<Tensor> first;   // momentum buffer / ADAM first moment
  std::vector<Tensor> second;  // ADAM second moment
  long step = 0;

  void ensure(std::span<Parameter* const> params, bool with_second) {
    if (first.empty()) {
      for (Parameter* p : params) {
        first.emplace_back(p->value.rows(), p->value.cols());
        if (with_second) second.emplace_back(p->value.rows(), p->value.cols());
      }
    }
    if (first.size() != params.size() || (with_second && second.size() != params.size())) {
      throw ContractError("optimizer state holds " + std::to_string(first.size()) + " buffers for " +
                          std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!first[i].same_shape(params[i]->value) || !params[i]->grad.same_shape(params[i]->value)) {
        throw ContractError("optimizer state shape mismatch for " + params[i]->name);
      }
    }
  }
};

/// g = grad + decay * p; v = momentum * v + g; p -= lr * (nesterov ? momentum * v + g : v).
inline void sgd_step(std::span<Parameter* const> params, OptimizerState& state, double lr, const SgdConfig& cfg) {
  state.ensure(params, false);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& v = state.first[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i] + cfg.weight_decay * p.value[i];
      v[i] = cfg.momentum * v[i] + g;
      const double update = cfg.nesterov ? cfg.momentum * v[i] + g : v[i];
      p.value[i] -= lr * update;
    }
  }
  ++state.step;
}

/// Bias-corrected ADAM with L2 weight decay folded into the gradient.
inline void adam_step(std::span<Parameter* const> params, OptimizerState& state, const AdamConfig& cfg) {
  state.ensure(params, true);
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& m = state.first[k];
    Tensor& v = state.second[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i] + cfg.weight_decay * p.value[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

inline void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace gdasjae
