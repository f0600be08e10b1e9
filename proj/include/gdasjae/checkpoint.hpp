// SPDX-License-Identifier: Apache-2.0
#pragma once

// Model checkpoints as a versioned JSON document:
//
//   { "format": "gdasjae-checkpoint", "version": 1,
//     "config": { widths..., "mixing": { "kind": ..., "genotype"|"compute_nodes": ... } },
//     "parameters": [ { "name": ..., "rows": r, "cols": c, "values": [...] }, ... ],
//     "arch": { "temperature": t } }          (supernets only)
//
// Values are written as shortest round-trip decimals, so save/load is exact.
// Architecture logits appear in "parameters" under the name "arch.logits".

#include <fstream>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "gdasjae/genotype.hpp"
#include "gdasjae/model.hpp"

namespace gdasjae {

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline const char* mixing_kind_name(MixingKind k) {
  switch (k) {
    case MixingKind::baseline_50: return "baseline_50";
    case MixingKind::baseline_100: return "baseline_100";
    case MixingKind::fixed_cell: return "fixed_cell";
    case MixingKind::supernet: return "supernet";
  }
  return "";
}

inline MixingKind mixing_kind_from(const std::string& s) {
  if (s == "baseline_50") return MixingKind::baseline_50;
  if (s == "baseline_100") return MixingKind::baseline_100;
  if (s == "fixed_cell") return MixingKind::fixed_cell;
  if (s == "supernet") return MixingKind::supernet;
  throw ConfigError("checkpoint: unknown mixing kind '" + s + "'");
}

}  // namespace detail

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  nlohmann::json mixing{{"kind", detail::mixing_kind_name(c.mixing.kind)}};
  if (c.mixing.kind == MixingKind::fixed_cell) mixing["genotype"] = serialize(c.mixing.genotype);
  if (c.mixing.kind == MixingKind::supernet) mixing["compute_nodes"] = c.mixing.space.compute_nodes;
  return {{"modality_a_dim", c.modality_a_dim}, {"modality_b_dim", c.modality_b_dim},
          {"encoder_hidden", c.encoder_hidden}, {"encoder_out", c.encoder_out},
          {"fusion_out", c.fusion_out},         {"num_classes", c.num_classes},
          {"node_width", c.node_width},         {"leaky_slope", c.leaky_slope},
          {"mixing", mixing}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.modality_a_dim = j.at("modality_a_dim").get<std::size_t>();
  c.modality_b_dim = j.at("modality_b_dim").get<std::size_t>();
  c.encoder_hidden = j.at("encoder_hidden").get<std::size_t>();
  c.encoder_out = j.at("encoder_out").get<std::size_t>();
  c.fusion_out = j.at("fusion_out").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.node_width = j.at("node_width").get<std::size_t>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  const auto& m = j.at("mixing");
  c.mixing.kind = detail::mixing_kind_from(m.at("kind").get<std::string>());
  if (c.mixing.kind == MixingKind::fixed_cell) c.mixing.genotype = parse(m.at("genotype").get<std::string>());
  if (c.mixing.kind == MixingKind::supernet) c.mixing.space = SearchSpace{m.at("compute_nodes").get<int>()};
  return c;
}

inline nlohmann::json checkpoint_to_json(JaeModel& model) {
  nlohmann::json params = nlohmann::json::array();
  for (Parameter* p : model.all_parameters()) {
    params.push_back({{"name", p->name},
                      {"rows", p->value.rows()},
                      {"cols", p->value.cols()},
                      {"values", std::vector<double>(p->value.values().begin(), p->value.values().end())}});
  }
  nlohmann::json j{{"format", "gdasjae-checkpoint"},
                   {"version", kCheckpointVersion},
                   {"config", model_config_to_json(model.config())},
                   {"parameters", params}};
  if (Supernet* s = model.supernet()) j["arch"] = {{"temperature", s->arch.temperature}};
  return j;
}

/// Rebuilds the model from its config, then overwrites every parameter by
/// name. Missing, extra or misshapen parameters are errors.
inline JaeModel checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "gdasjae-checkpoint") throw ConfigError("checkpoint: wrong format tag");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw ConfigError("checkpoint: version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    }
    Rng rng(0);
    JaeModel model = JaeModel::build(model_config_from_json(j.at("config")), rng);
    std::map<std::string, Parameter*> by_name;
    for (Parameter* p : model.all_parameters()) by_name[p->name] = p;
    const auto& params = j.at("parameters");
    if (params.size() != by_name.size()) {
      throw ConfigError("checkpoint: " + std::to_string(params.size()) + " parameters stored, model has " +
                        std::to_string(by_name.size()));
    }
    for (const auto& e : params) {
      const auto name = e.at("name").get<std::string>();
      auto it = by_name.find(name);
      if (it == by_name.end()) throw ConfigError("checkpoint: unexpected parameter '" + name + "'");
      Parameter& p = *it->second;
      auto values = e.at("values").get<std::vector<double>>();
      if (e.at("rows").get<std::size_t>() != p.value.rows() || e.at("cols").get<std::size_t>() != p.value.cols() ||
          values.size() != p.value.size()) {
        throw ConfigError("checkpoint: parameter '" + name + "' has the wrong shape");
      }
      p.value = Tensor(p.value.rows(), p.value.cols(), std::move(values));
      p.zero_grad();
      by_name.erase(it);
    }
    if (Supernet* s = model.supernet()) s->arch.temperature = j.at("arch").at("temperature").get<double>();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: malformed document: ") + e.what());
  }
}

inline void save_checkpoint(JaeModel& model, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << checkpoint_to_json(model).dump(1) << '\n';
  if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

inline JaeModel load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("checkpoint '" + path + "': " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace gdasjae
