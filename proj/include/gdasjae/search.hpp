// SPDX-License-Identifier: Apache-2.0
#pragma once

// GDAS cell search. Each epoch makes one pass over the training split, where
// every batch samples an architecture, then updates the supernet candidate
// weights with SGD and the skeleton with ADAM; then one pass over the
// validation split, where every batch samples an architecture and updates
// only the architecture logits with ADAM.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gdasjae/autodiff.hpp"
#include "gdasjae/dataio.hpp"
#include "gdasjae/evalharness.hpp"
#include "gdasjae/genotype.hpp"
#include "gdasjae/model.hpp"
#include "gdasjae/nn.hpp"
#include "gdasjae/random.hpp"

namespace gdasjae {

struct SearchConfig {
  SgdConfig sgd;              // supernet candidate weights
  AdamConfig adam_skeleton;   // encoders, fusion, classifier
  AdamConfig adam_arch;       // architecture logits
  double tau_start = 10.0;
  double tau_end = 0.1;
  int epochs = 100;
  std::uint64_t seed = 0;
  NoiseMode noise = NoiseMode::gumbel;  // NoiseMode::zero freezes the sampler (tests)
  bool record_logits = false;

  void validate() const {
    sgd.validate();
    adam_skeleton.validate();
    adam_arch.validate();
    if (!(tau_end > 0.0) || !(tau_start >= tau_end)) throw ConfigError("search: need tau_start >= tau_end > 0");
    if (epochs < 1) throw ConfigError("search: epochs must be >= 1");
    if (epochs != sgd.epochs) {
      throw ConfigError("search: epochs (" + std::to_string(epochs) + ") must equal sgd epochs (" +
                        std::to_string(sgd.epochs) + ") so the cosine schedule spans the search");
    }
  }
};

/// Linear interpolation from tau_start (epoch 0) to tau_end (last epoch).
inline double temperature(int epoch, const SearchConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) throw ContractError("temperature: epoch out of range");
  if (cfg.epochs == 1) return cfg.tau_start;
  const double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
  return cfg.tau_start - (cfg.tau_start - cfg.tau_end) * t;
}

struct SearchResult {
  Genotype final_genotype;
  std::vector<double> search_curve;  // class-averaged accuracy on training batches, per epoch
  std::vector<double> eval_curve;    // class-averaged accuracy on validation batches, per epoch
  std::vector<double> temperatures;
  std::vector<double> learning_rates;
  std::vector<Tensor> arch_logits_history;  // end-of-epoch logits when record_logits is set
  Tensor final_logits;
  double wall_seconds = 0.0;
};

/// Observes every optimizer step of a search (tests use it to snapshot parameters).
struct SearchObserver {
  virtual ~SearchObserver() = default;
  virtual void after_train_step(JaeModel&) {}
  virtual void after_val_step(JaeModel&) {}
};

inline SearchResult gdas_search(const Dataset& train, const Dataset& val, const ModelConfig& model_cfg,
                                const SearchConfig& cfg, SearchObserver* observer = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  if (train.empty() || val.empty()) throw ValidationError("gdas_search: train and validation splits must be nonempty");
  cfg.validate();
  if (model_cfg.mixing.kind != MixingKind::supernet) throw ConfigError("gdas_search: model mixing must be a supernet");
  check_widths(train, model_cfg);
  check_widths(val, model_cfg);
  for (const Dataset* d : {&train, &val}) {
    const auto c = summarize(*d);
    if (c.flawed == 0 || c.not_flawed == 0) {
      throw ValidationError("gdas_search: split '" + d->name() + "' lacks one of the classes");
    }
  }

  Rng init_rng(derive_seed(cfg.seed, 0));
  Rng order_rng(derive_seed(cfg.seed, 1));
  Rng sample_rng(derive_seed(cfg.seed, 2));
  JaeModel model = JaeModel::build(model_cfg, init_rng);
  Supernet& net = *model.supernet();
  const SearchSpace space = model_cfg.mixing.space;
  const auto cell = model.mixing_parameters();
  const auto skeleton = model.skeleton_parameters();
  const auto arch = model.arch_parameters();
  OptimizerState sgd_state, skel_state, arch_state;
  const LrSchedule schedule(cfg.sgd, false);

  std::vector<std::size_t> train_order(train.size()), val_order(val.size());
  std::iota(train_order.begin(), train_order.end(), 0);
  std::iota(val_order.begin(), val_order.end(), 0);
  const auto bs = static_cast<std::size_t>(cfg.sgd.batch_size);
  const ForwardOptions fwd{&sample_rng, cfg.noise, nullptr};

  auto clear_all = [&] {
    zero_grads(cell);
    zero_grads(skeleton);
    zero_grads(arch);
  };

  SearchResult res;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double tau = temperature(epoch, cfg);
    const double lr = schedule(epoch);
    net.arch.temperature = tau;
    res.temperatures.push_back(tau);
    res.learning_rates.push_back(lr);

    ConfusionCounts train_counts;
    shuffle(train_order, order_rng);
    for (std::size_t start = 0; start < train_order.size(); start += bs) {
      const std::span<const std::size_t> idx(train_order.data() + start, std::min(bs, train_order.size() - start));
      const Batch batch = make_batch(train, idx);
      Graph g;
      Var logits = model.forward(g, g.constant(batch.a), g.constant(batch.b), fwd);
      g.backward(softmax_cross_entropy(logits, batch.labels));
      sgd_step(cell, sgd_state, lr, cfg.sgd);
      adam_step(skeleton, skel_state, cfg.adam_skeleton);
      clear_all();
      tally(train_counts, g.value(logits), batch.labels);
      if (observer) observer->after_train_step(model);
    }

    ConfusionCounts val_counts;
    shuffle(val_order, order_rng);
    for (std::size_t start = 0; start < val_order.size(); start += bs) {
      const std::span<const std::size_t> idx(val_order.data() + start, std::min(bs, val_order.size() - start));
      const Batch batch = make_batch(val, idx);
      Graph g;
      Var logits = model.forward(g, g.constant(batch.a), g.constant(batch.b), fwd);
      g.backward(softmax_cross_entropy(logits, batch.labels));
      adam_step(arch, arch_state, cfg.adam_arch);
      clear_all();
      tally(val_counts, g.value(logits), batch.labels);
      if (observer) observer->after_val_step(model);
    }

    res.search_curve.push_back(class_averaged_accuracy(train_counts));
    res.eval_curve.push_back(class_averaged_accuracy(val_counts));
    if (cfg.record_logits) res.arch_logits_history.push_back(net.arch.logits.value);
  }
  res.final_logits = net.arch.logits.value;
  res.final_genotype = derive_genotype(net.arch, space);
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

/// Writes `epoch,search_accuracy,eval_accuracy,temperature,lr`, one row per epoch.
inline void emit_curves(const SearchResult& r, std::ostream& os) {
  os << "epoch,search_accuracy,eval_accuracy,temperature,lr\n";
  for (std::size_t e = 0; e < r.search_curve.size(); ++e) {
    os << e << ',' << format_double(r.search_curve[e]) << ',' << format_double(r.eval_curve[e]) << ','
       << format_double(r.temperatures[e]) << ',' << format_double(r.learning_rates[e]) << '\n';
  }
}

inline void emit_curves(const SearchResult& r, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  emit_curves(r, os);
  if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace gdasjae
