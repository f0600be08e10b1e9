// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run configuration documents (JSON). The `sgd` block uses the cell-search
// parameter table's key names verbatim:
//
//   "sgd": { "scheduler": "cos", "LR": 0.0005, "eta_min": 0.001, "epochs": 100,
//            "optim": "SGD", "decay": 0.000001, "momentum": 0.9, "nesterov": 1,
//            "criterion": "Softmax", "batch_size": 32 }
//
// Unknown keys are rejected so that a typo cannot silently fall back to a
// default.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "gdasjae/dataio.hpp"
#include "gdasjae/evalharness.hpp"
#include "gdasjae/genotype.hpp"
#include "gdasjae/model.hpp"
#include "gdasjae/nn.hpp"
#include "gdasjae/search.hpp"

namespace gdasjae {

using json = nlohmann::json;

struct DataSource {
  std::optional<std::string> path;  // delimited text file
  SynthSpec synth;                  // used when path is empty
};

struct EvalConfig {
  int repetitions = 5;             // N of N x 2 CV
  std::optional<int> epochs;       // training epochs per fit; sgd epochs when unset
};

struct RunConfig {
  DataSource data;
  ModelConfig model;  // mixing is chosen per command
  SearchSpace space = SearchSpace::full();
  SearchConfig search;
  SplitSpec split;
  EvalConfig eval;
  int oracle_budget_epochs = 10;
  std::uint64_t seed = 0;

  /// Training settings for fixed-architecture fits (CV, oracle).
  TrainConfig train_config() const {
    TrainConfig t{search.sgd, search.adam_skeleton};
    if (eval.epochs) t.sgd.epochs = *eval.epochs;
    return t;
  }

  void validate() const {
    if (!data.path) data.synth.validate();
    ModelConfig m = model;
    m.mixing = MixingSpec::search(space);
    m.validate();
    search.validate();
    split.validate();
    if (eval.repetitions < 1) throw ConfigError("eval: repetitions must be >= 1");
    if (eval.epochs && *eval.epochs < 1) throw ConfigError("eval: epochs must be >= 1");
    if (oracle_budget_epochs < 1) throw ConfigError("oracle: budget_epochs must be >= 1");
  }
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.contains(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

inline void read_bool_or_int(const json& j, const char* key, bool& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (v.is_boolean()) {
    out = v.get<bool>();
  } else if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1)) {
    out = v.get<int>() == 1;
  } else {
    throw ConfigError(where + "." + key + ": expected 0, 1, true or false");
  }
}

inline SgdConfig sgd_from_json(const json& j) {
  check_keys(j, "sgd", {"scheduler", "LR", "eta_min", "epochs", "optim", "decay", "momentum", "nesterov",
                        "criterion", "batch_size"});
  SgdConfig c;
  std::string scheduler = "cos", optim = "SGD", criterion = "Softmax";
  read(j, "scheduler", scheduler, "sgd");
  read(j, "optim", optim, "sgd");
  read(j, "criterion", criterion, "sgd");
  if (scheduler == "cos") c.scheduler = LrScheduler::cosine;
  else if (scheduler == "constant") c.scheduler = LrScheduler::constant;
  else throw ConfigError("sgd.scheduler: expected 'cos' or 'constant', got '" + scheduler + "'");
  if (optim != "SGD") throw ConfigError("sgd.optim: only 'SGD' is supported, got '" + optim + "'");
  if (criterion != "Softmax") throw ConfigError("sgd.criterion: only 'Softmax' is supported, got '" + criterion + "'");
  read(j, "LR", c.base_lr, "sgd");
  read(j, "eta_min", c.eta_min, "sgd");
  read(j, "epochs", c.epochs, "sgd");
  read(j, "decay", c.weight_decay, "sgd");
  read(j, "momentum", c.momentum, "sgd");
  read_bool_or_int(j, "nesterov", c.nesterov, "sgd");
  read(j, "batch_size", c.batch_size, "sgd");
  return c;
}

inline json sgd_to_json(const SgdConfig& c) {
  return json{{"scheduler", c.scheduler == LrScheduler::cosine ? "cos" : "constant"},
              {"LR", c.base_lr},
              {"eta_min", c.eta_min},
              {"epochs", c.epochs},
              {"optim", "SGD"},
              {"decay", c.weight_decay},
              {"momentum", c.momentum},
              {"nesterov", c.nesterov ? 1 : 0},
              {"criterion", "Softmax"},
              {"batch_size", c.batch_size}};
}

inline AdamConfig adam_from_json(const json& j, const std::string& where) {
  check_keys(j, where, {"lr", "beta1", "beta2", "epsilon", "weight_decay"});
  AdamConfig c;
  read(j, "lr", c.lr, where);
  read(j, "beta1", c.beta1, where);
  read(j, "beta2", c.beta2, where);
  read(j, "epsilon", c.epsilon, where);
  read(j, "weight_decay", c.weight_decay, where);
  return c;
}

inline json adam_to_json(const AdamConfig& c) {
  return json{{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon},
              {"weight_decay", c.weight_decay}};
}

}  // namespace detail

inline SynthSpec synth_from_json(const json& j) {
  detail::check_keys(j, "synth", {"n_flawed", "n_not_flawed", "width_a", "width_b", "separation", "noise",
                                  "bottleneck_width", "seed", "name"});
  SynthSpec s;
  detail::read(j, "n_flawed", s.n_flawed, "synth");
  detail::read(j, "n_not_flawed", s.n_not_flawed, "synth");
  detail::read(j, "width_a", s.width_a, "synth");
  detail::read(j, "width_b", s.width_b, "synth");
  detail::read(j, "separation", s.separation, "synth");
  detail::read(j, "noise", s.noise, "synth");
  detail::read(j, "seed", s.seed, "synth");
  detail::read(j, "name", s.name, "synth");
  if (j.contains("bottleneck_width") && !j.at("bottleneck_width").is_null()) {
    std::size_t k = 0;
    detail::read(j, "bottleneck_width", k, "synth");
    s.bottleneck_width = k;
  }
  return s;
}

inline json synth_to_json(const SynthSpec& s) {
  json j{{"n_flawed", s.n_flawed}, {"n_not_flawed", s.n_not_flawed}, {"width_a", s.width_a},
         {"width_b", s.width_b},   {"separation", s.separation},     {"noise", s.noise},
         {"seed", s.seed},         {"name", s.name}};
  j["bottleneck_width"] = s.bottleneck_width ? json(*s.bottleneck_width) : json(nullptr);
  return j;
}

namespace detail {

inline RunConfig parse_run_config(const json& j) {
  detail::check_keys(j, "config", {"seed", "data", "model", "space", "sgd", "adam_skeleton", "adam_arch", "search",
                                   "split", "eval", "oracle"});
  RunConfig c;
  detail::read(j, "seed", c.seed, "config");
  if (j.contains("data")) {
    const json& d = j.at("data");
    detail::check_keys(d, "data", {"path", "synth"});
    if (d.contains("path") && d.contains("synth")) throw ConfigError("data: give either 'path' or 'synth', not both");
    if (d.contains("path")) c.data.path = d.at("path").get<std::string>();
    if (d.contains("synth")) c.data.synth = synth_from_json(d.at("synth"));
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    detail::check_keys(m, "model", {"encoder_hidden", "encoder_out", "fusion_out", "node_width", "leaky_slope"});
    detail::read(m, "encoder_hidden", c.model.encoder_hidden, "model");
    detail::read(m, "encoder_out", c.model.encoder_out, "model");
    detail::read(m, "fusion_out", c.model.fusion_out, "model");
    detail::read(m, "node_width", c.model.node_width, "model");
    detail::read(m, "leaky_slope", c.model.leaky_slope, "model");
  }
  if (j.contains("space")) {
    const std::string s = j.at("space").get<std::string>();
    if (s == "desk") c.space = SearchSpace::desk();
    else if (s == "full") c.space = SearchSpace::full();
    else throw ConfigError("space: expected 'desk' or 'full', got '" + s + "'");
  }
  if (j.contains("sgd")) c.search.sgd = detail::sgd_from_json(j.at("sgd"));
  if (j.contains("adam_skeleton")) c.search.adam_skeleton = detail::adam_from_json(j.at("adam_skeleton"), "adam_skeleton");
  if (j.contains("adam_arch")) c.search.adam_arch = detail::adam_from_json(j.at("adam_arch"), "adam_arch");
  if (j.contains("search")) {
    const json& s = j.at("search");
    detail::check_keys(s, "search", {"tau_start", "tau_end"});
    detail::read(s, "tau_start", c.search.tau_start, "search");
    detail::read(s, "tau_end", c.search.tau_end, "search");
  }
  c.search.epochs = c.search.sgd.epochs;
  if (j.contains("split")) {
    const json& s = j.at("split");
    detail::check_keys(s, "split", {"train_fraction", "val_fraction", "test_fraction", "stratified"});
    detail::read(s, "train_fraction", c.split.train_fraction, "split");
    detail::read(s, "val_fraction", c.split.val_fraction, "split");
    detail::read(s, "test_fraction", c.split.test_fraction, "split");
    detail::read(s, "stratified", c.split.stratified, "split");
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    detail::check_keys(e, "eval", {"repetitions", "epochs"});
    detail::read(e, "repetitions", c.eval.repetitions, "eval");
    if (e.contains("epochs") && !e.at("epochs").is_null()) c.eval.epochs = e.at("epochs").get<int>();
  }
  if (j.contains("oracle")) {
    const json& o = j.at("oracle");
    detail::check_keys(o, "oracle", {"budget_epochs"});
    detail::read(o, "budget_epochs", c.oracle_budget_epochs, "oracle");
  }
  c.split.seed = c.seed;
  c.search.seed = c.seed;
  return c;
}

}  // namespace detail

/// Parses a run configuration; call validate() once the data widths are known.
/// Missing blocks keep defaults.
inline RunConfig run_config_from_json(const json& j) {
  try {
    return detail::parse_run_config(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  // A run manifest carries its full configuration under "config".
  if (j.is_object() && j.contains("tool") && j.contains("config")) j = json(j.at("config"));
  RunConfig c = run_config_from_json(j);
  // Relative data paths are taken relative to the config file.
  if (c.data.path && std::filesystem::path(*c.data.path).is_relative()) {
    c.data.path = (std::filesystem::path(path).parent_path() / *c.data.path).string();
  }
  return c;
}

/// Full configuration, defaults included; run_config_from_json(to_json(c)) == c.
inline json run_config_to_json(const RunConfig& c) {
  json data;
  if (c.data.path) data["path"] = *c.data.path;
  else data["synth"] = synth_to_json(c.data.synth);
  return json{{"seed", c.seed},
              {"data", data},
              {"model",
               {{"encoder_hidden", c.model.encoder_hidden},
                {"encoder_out", c.model.encoder_out},
                {"fusion_out", c.model.fusion_out},
                {"node_width", c.model.node_width},
                {"leaky_slope", c.model.leaky_slope}}},
              {"space", c.space.is_desk() ? "desk" : "full"},
              {"sgd", detail::sgd_to_json(c.search.sgd)},
              {"adam_skeleton", detail::adam_to_json(c.search.adam_skeleton)},
              {"adam_arch", detail::adam_to_json(c.search.adam_arch)},
              {"search", {{"tau_start", c.search.tau_start}, {"tau_end", c.search.tau_end}}},
              {"split",
               {{"train_fraction", c.split.train_fraction},
                {"val_fraction", c.split.val_fraction},
                {"test_fraction", c.split.test_fraction},
                {"stratified", c.split.stratified}}},
              {"eval", {{"repetitions", c.eval.repetitions}, {"epochs", c.eval.epochs ? json(*c.eval.epochs) : json(nullptr)}}},
              {"oracle", {{"budget_epochs", c.oracle_budget_epochs}}}};
}

/// Loads or generates the configured dataset and fixes the model input widths to match.
inline Dataset load_data(RunConfig& c) {
  Dataset ds = c.data.path ? load_delimited(*c.data.path) : synth_generate(c.data.synth);
  c.model.modality_a_dim = ds.width_a();
  c.model.modality_b_dim = ds.width_b();
  return ds;
}

}  // namespace gdasjae
