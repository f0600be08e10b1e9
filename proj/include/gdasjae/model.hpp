// SPDX-License-Identifier: Apache-2.0
#pragma once

// JAE classifier skeleton with a pluggable mixing component.
//
//   a -> private_a (2 layers) ------------------------------+
//   a -> shared_a  (2 layers) --+                           |
//                               +-> mixing -> mix_out ------+-> fusion (->50) -> classifier (->2)
//   b -> shared_b  (2 layers) --+                           |
//   b -> private_b (2 layers) ------------------------------+
//
// The mixing component is a single linear layer (baselines), a fixed cell
// genotype, or the all-candidates supernet used during search. Cell node 0 is
// the concatenated shared encodings; every edge output is zero-padded to
// node_width before node sums so feature maps of width 25/50/100 add up.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gdasjae/autodiff.hpp"
#include "gdasjae/genotype.hpp"
#include "gdasjae/nn.hpp"
#include "gdasjae/random.hpp"

namespace gdasjae {

enum class MixingKind { baseline_50, baseline_100, fixed_cell, supernet };

struct MixingSpec {
  MixingKind kind = MixingKind::baseline_50;
  Genotype genotype;                        // fixed_cell only
  SearchSpace space = SearchSpace::full();  // supernet only

  static MixingSpec baseline50() { return {MixingKind::baseline_50, {}, {}}; }
  static MixingSpec baseline100() { return {MixingKind::baseline_100, {}, {}}; }
  static MixingSpec fixed(Genotype g) { return {MixingKind::fixed_cell, std::move(g), {}}; }
  static MixingSpec search(SearchSpace s) { return {MixingKind::supernet, {}, s}; }
};

struct ModelConfig {
  std::size_t modality_a_dim = 16;
  std::size_t modality_b_dim = 16;
  std::size_t encoder_hidden = 128;
  std::size_t encoder_out = 64;
  std::size_t fusion_out = 50;
  std::size_t num_classes = 2;
  std::size_t node_width = 100;
  double leaky_slope = 0.01;
  MixingSpec mixing;

  std::size_t cell_input_width() const noexcept { return 2 * encoder_out; }

  std::size_t mixing_out_width() const noexcept {
    switch (mixing.kind) {
      case MixingKind::baseline_50: return 50;
      case MixingKind::baseline_100: return 100;
      default: return node_width;
    }
  }

  std::size_t fusion_in_width() const noexcept { return 2 * encoder_out + mixing_out_width(); }

  void validate() const {
    if (modality_a_dim < 1 || modality_b_dim < 1 || encoder_hidden < 1 || encoder_out < 1 || fusion_out < 1 ||
        num_classes < 2 || node_width < 1) {
      throw ConfigError("model: all widths must be >= 1 and num_classes >= 2");
    }
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ConfigError("model: leaky_slope must lie in (0,1)");
    if (mixing.kind == MixingKind::fixed_cell || mixing.kind == MixingKind::supernet) {
      if (node_width < static_cast<std::size_t>(op_width(OpKind::L100))) {
        throw ConfigError("model: node_width must be >= 100 to hold every cell operation output");
      }
    }
    if (mixing.kind == MixingKind::fixed_cell) validate_genotype_or_config_error(mixing.genotype);
    if (mixing.kind == MixingKind::supernet) mixing.space.validate();
  }

 private:
  static void validate_genotype_or_config_error(const Genotype& g) {
    try {
      gdasjae::validate(g);
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("model: ") + e.what());
    }
  }
};

// ---------------------------------------------------------------------------
// Architecture parameters and Gumbel sampling
// ---------------------------------------------------------------------------

/// Per-edge logits over the three operations plus the sampling temperature.
struct ArchParams {
  Parameter logits;  // edge_count x 3
  double temperature = 1.0;

  static ArchParams zeros(SearchSpace space) {
    return ArchParams{Parameter("arch.logits", Tensor(space.edge_count(), kOpCount)), 1.0};
  }
  std::size_t edge_count() const noexcept { return logits.value.rows(); }
};

struct GumbelSample {
  std::array<double, kOpCount> hard{};
  std::array<double, kOpCount> soft{};
  std::size_t index = 0;
};

using GumbelNoise = std::array<double, kOpCount>;

/// g_i = -log(-log u_i), u_i ~ U(0,1).
inline GumbelNoise draw_gumbel_noise(Rng& rng) {
  GumbelNoise g{};
  for (double& v : g) v = -std::log(-std::log(uniform_open01(rng)));
  return g;
}

/// soft = softmax((logits[edge] + noise) / temperature); hard = one-hot(argmax soft),
/// lowest index on ties.
inline GumbelSample gumbel_sample(const ArchParams& arch, std::size_t edge, const GumbelNoise& noise) {
  if (!(arch.temperature > 0.0)) throw ContractError("gumbel_sample: temperature must be > 0");
  if (edge >= arch.edge_count()) throw ContractError("gumbel_sample: edge out of range");
  std::array<double, kOpCount> z{};
  for (std::size_t j = 0; j < kOpCount; ++j) z[j] = (arch.logits.value(edge, j) + noise[j]) / arch.temperature;
  GumbelSample s;
  detail::softmax_row(z, s.soft);
  s.index = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
  s.hard[s.index] = 1.0;
  return s;
}

inline GumbelSample gumbel_sample(const ArchParams& arch, std::size_t edge, Rng& rng) {
  return gumbel_sample(arch, edge, draw_gumbel_noise(rng));
}

/// Per-edge argmax of the logits; ties go to the narrower operation.
inline Genotype derive_genotype(const ArchParams& arch, SearchSpace space) {
  if (arch.edge_count() != space.edge_count()) {
    throw ContractError("derive_genotype: " + std::to_string(arch.edge_count()) + " logit rows for a space with " +
                        std::to_string(space.edge_count()) + " edges");
  }
  std::vector<OpKind> ops;
  for (std::size_t e = 0; e < arch.edge_count(); ++e) {
    auto row = arch.logits.value.row_view(e);
    ops.push_back(kAllOps[static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())]);
  }
  return genotype_from_ops(ops, space);
}

/// Logits that put `margin` on the genotype's op for every edge.
inline ArchParams saturated_arch(const Genotype& g, double margin) {
  ArchParams a = ArchParams::zeros(g.space());
  const auto ops = g.ops();
  for (std::size_t e = 0; e < ops.size(); ++e) a.logits.value(e, op_index(ops[e])) = margin;
  return a;
}

// ---------------------------------------------------------------------------
// Cells
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t edge_input_width(int source, std::size_t cell_in, std::size_t node_width) {
  return source == 0 ? cell_in : node_width;
}

}  // namespace detail

/// Sums padded edge outputs node by node. `edge_out(e, input)` evaluates edge
/// e (edge_index order) on the feature map of its source node.
template <typename EdgeFn>
Var cell_sum(Var x, int compute_nodes, std::size_t node_width, EdgeFn&& edge_out) {
  std::vector<Var> node_maps{x};
  for (int k = 1; k <= compute_nodes; ++k) {
    std::vector<Var> terms;
    for (int s = 0; s < k; ++s) {
      terms.push_back(pad_cols(edge_out(edge_index(k, s), node_maps[static_cast<std::size_t>(s)]), node_width));
    }
    node_maps.push_back(add_n(terms));
  }
  return node_maps.back();
}

/// A concrete cell: one LeakyReLU linear layer per genotype edge.
struct FixedCell {
  Genotype genotype;
  std::vector<LinearLayer> ops;  // edge_index order
  std::size_t node_width = 100;

  static FixedCell build(const Genotype& g, std::size_t cell_in, std::size_t node_width, double slope, Rng& rng) {
    validate(g);
    FixedCell c{g, {}, node_width};
    for (std::size_t k = 0; k < g.nodes.size(); ++k) {
      for (const Edge& e : g.nodes[k]) {
        c.ops.push_back(linear_init(detail::edge_input_width(e.source, cell_in, node_width),
                                    static_cast<std::size_t>(op_width(e.op)), rng, slope, true,
                                    "cell.n" + std::to_string(k + 1) + ".s" + std::to_string(e.source)));
      }
    }
    return c;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& l : ops) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }
};

/// Node 0 = x; node k = sum over incoming edges of pad(op_e(node_src), node_width); returns the last node.
inline Var cell_forward_fixed(Graph& g, FixedCell& cell, Var x) {
  if (cell.ops.size() != cell.genotype.edge_count()) throw ContractError("cell_forward_fixed: layer count mismatch");
  return cell_sum(x, static_cast<int>(cell.genotype.compute_nodes()), cell.node_width,
                  [&](std::size_t e, Var in) { return linear_forward(g, cell.ops[e], in); });
}

/// How the supernet draws Gumbel noise for each edge.
enum class NoiseMode { gumbel, zero };

/// Record of the architecture sampled in one supernet forward pass.
struct SampledArch {
  std::vector<std::size_t> op_indices;
};

/// Every (edge, operation) candidate materialized, plus the architecture logits.
struct Supernet {
  SearchSpace space;
  std::vector<std::array<LinearLayer, kOpCount>> candidates;  // edge_index order
  ArchParams arch;
  std::size_t node_width = 100;

  static Supernet build(SearchSpace space, std::size_t cell_in, std::size_t node_width, double slope, Rng& rng) {
    space.validate();
    Supernet net{space, {}, ArchParams::zeros(space), node_width};
    for (int k = 1; k <= space.compute_nodes; ++k) {
      for (int s = 0; s < k; ++s) {
        std::array<LinearLayer, kOpCount> cands;
        for (std::size_t j = 0; j < kOpCount; ++j) {
          cands[j] = linear_init(detail::edge_input_width(s, cell_in, node_width),
                                 static_cast<std::size_t>(op_width(kAllOps[j])), rng, slope, true,
                                 "supernet.n" + std::to_string(k) + ".s" + std::to_string(s) + ".op" +
                                     std::to_string(op_width(kAllOps[j])));
        }
        net.candidates.push_back(std::move(cands));
      }
    }
    return net;
  }

  std::size_t candidate_count() const noexcept { return candidates.size() * kOpCount; }

  std::vector<Parameter*> weight_parameters() {
    std::vector<Parameter*> out;
    for (auto& cands : candidates)
      for (auto& l : cands) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
      }
    return out;
  }

  /// Fixed cell for `g` sharing this supernet's candidate weights.
  FixedCell extract(const Genotype& g) const {
    validate(g);
    if (g.space() != space) throw ContractError("Supernet::extract: genotype shape differs from the supernet");
    FixedCell c{g, {}, node_width};
    const auto ops = g.ops();
    for (std::size_t e = 0; e < ops.size(); ++e) c.ops.push_back(candidates[e][op_index(ops[e])]);
    return c;
  }
};

/// Per edge: Gumbel-sample an op; the forward value uses the hard one-hot
/// choice, gradients reach the logits through the soft probabilities
/// (straight-through), weighting all three candidate outputs.
inline Var supernet_forward(Graph& g, Supernet& net, Var x, Rng& rng, NoiseMode mode = NoiseMode::gumbel,
                            SampledArch* sampled = nullptr) {
  if (!(net.arch.temperature > 0.0)) throw ContractError("supernet_forward: temperature must be > 0");
  Var logits = g.parameter(net.arch.logits);
  if (sampled) sampled->op_indices.clear();
  return cell_sum(x, net.space.compute_nodes, net.node_width, [&](std::size_t e, Var in) {
    const GumbelNoise noise = mode == NoiseMode::gumbel ? draw_gumbel_noise(rng) : GumbelNoise{};
    const GumbelSample s = gumbel_sample(net.arch, e, noise);
    Var soft = softmax_rows(scale(add(slice_row(logits, e), g.constant(Tensor::row(noise))), 1.0 / net.arch.temperature));
    Var weights = straight_through(soft, Tensor::row(s.hard));
    std::array<Var, kOpCount> outs;
    for (std::size_t j = 0; j < kOpCount; ++j) outs[j] = pad_cols(linear_forward(g, net.candidates[e][j], in), net.node_width);
    if (sampled) sampled->op_indices.push_back(s.index);
    return weighted_sum(outs, weights);
  });
}

// ---------------------------------------------------------------------------
// JAE classifier
// ---------------------------------------------------------------------------

struct Encoder {
  LinearLayer hidden;
  LinearLayer out;

  std::vector<Parameter*> parameters() { return {&hidden.weight, &hidden.bias, &out.weight, &out.bias}; }
};

/// Options for one forward pass; only the supernet consumes them.
struct ForwardOptions {
  Rng* rng = nullptr;
  NoiseMode noise = NoiseMode::gumbel;
  SampledArch* sampled = nullptr;
};

class JaeModel {
 public:
  using Mixing = std::variant<LinearLayer, FixedCell, Supernet>;

  /// Encoders, fusion and classifier draw from one child stream of `rng` and
  /// the mixing component from another, so skeleton weights do not depend on
  /// which mixing component is configured.
  static JaeModel build(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    Rng skel(rng());
    Rng mix(rng());
    JaeModel m;
    m.cfg_ = cfg;
    const double slope = cfg.leaky_slope;
    auto encoder = [&](std::size_t in, const std::string& name) {
      return Encoder{linear_init(in, cfg.encoder_hidden, skel, slope, true, name + ".0"),
                     linear_init(cfg.encoder_hidden, cfg.encoder_out, skel, slope, true, name + ".1")};
    };
    m.private_a_ = encoder(cfg.modality_a_dim, "private_a");
    m.shared_a_ = encoder(cfg.modality_a_dim, "shared_a");
    m.private_b_ = encoder(cfg.modality_b_dim, "private_b");
    m.shared_b_ = encoder(cfg.modality_b_dim, "shared_b");
    // Fusion is drawn last: its width is the only skeleton shape that depends on the mixing kind.
    m.classifier_ = linear_init(cfg.fusion_out, cfg.num_classes, skel, slope, false, "classifier");
    m.fusion_ = linear_init(cfg.fusion_in_width(), cfg.fusion_out, skel, slope, true, "fusion");
    switch (cfg.mixing.kind) {
      case MixingKind::baseline_50:
      case MixingKind::baseline_100:
        m.mixing_ = linear_init(cfg.cell_input_width(), cfg.mixing_out_width(), mix, slope, true, "mixing");
        break;
      case MixingKind::fixed_cell:
        m.mixing_ = FixedCell::build(cfg.mixing.genotype, cfg.cell_input_width(), cfg.node_width, slope, mix);
        break;
      case MixingKind::supernet:
        m.mixing_ = Supernet::build(cfg.mixing.space, cfg.cell_input_width(), cfg.node_width, slope, mix);
        break;
    }
    return m;
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  Mixing& mixing() noexcept { return mixing_; }
  const Mixing& mixing() const noexcept { return mixing_; }
  LinearLayer& fusion() noexcept { return fusion_; }
  LinearLayer& classifier() noexcept { return classifier_; }

  Supernet* supernet() noexcept { return std::get_if<Supernet>(&mixing_); }

  /// Raw class logits, m x num_classes.
  Var forward(Graph& g, Var a, Var b, const ForwardOptions& opt = {}) {
    const Tensor& A = g.value(a);
    const Tensor& B = g.value(b);
    if (A.cols() != cfg_.modality_a_dim || B.cols() != cfg_.modality_b_dim || A.rows() != B.rows()) {
      throw DimensionError("JaeModel::forward: inputs " + A.shape() + ", " + B.shape() + " do not match widths (" +
                           std::to_string(cfg_.modality_a_dim) + ", " + std::to_string(cfg_.modality_b_dim) + ")");
    }
    Var pa = encode(g, private_a_, a);
    Var sa = encode(g, shared_a_, a);
    Var pb = encode(g, private_b_, b);
    Var sb = encode(g, shared_b_, b);
    Var cell_in = concat_cols({sa, sb});
    Var mixed = std::visit(
        [&](auto& mix) -> Var {
          using T = std::decay_t<decltype(mix)>;
          if constexpr (std::is_same_v<T, LinearLayer>) {
            return linear_forward(g, mix, cell_in);
          } else if constexpr (std::is_same_v<T, FixedCell>) {
            return cell_forward_fixed(g, mix, cell_in);
          } else {
            if (opt.rng == nullptr && opt.noise == NoiseMode::gumbel) {
              throw ContractError("JaeModel::forward: supernet sampling needs an rng");
            }
            Rng dummy(0);
            return supernet_forward(g, mix, cell_in, opt.rng ? *opt.rng : dummy, opt.noise, opt.sampled);
          }
        },
        mixing_);
    Var fused = linear_forward(g, fusion_, concat_cols({pa, pb, mixed}));
    return linear_forward(g, classifier_, fused);
  }

  /// Graph-free logits for a batch.
  Tensor logits(const Tensor& a, const Tensor& b, const ForwardOptions& opt = {}) {
    Graph g;
    return g.value(forward(g, g.constant(a), g.constant(b), opt));
  }

  /// Encoders, fusion layer and classifier.
  std::vector<Parameter*> skeleton_parameters() {
    std::vector<Parameter*> out;
    for (Encoder* e : {&private_a_, &shared_a_, &private_b_, &shared_b_})
      for (Parameter* p : e->parameters()) out.push_back(p);
    for (LinearLayer* l : {&fusion_, &classifier_}) {
      out.push_back(&l->weight);
      out.push_back(&l->bias);
    }
    return out;
  }

  /// Weights of the mixing component (baseline layer, cell ops or supernet candidates).
  std::vector<Parameter*> mixing_parameters() {
    return std::visit(
        [](auto& mix) -> std::vector<Parameter*> {
          using T = std::decay_t<decltype(mix)>;
          if constexpr (std::is_same_v<T, LinearLayer>) {
            return {&mix.weight, &mix.bias};
          } else if constexpr (std::is_same_v<T, FixedCell>) {
            return mix.parameters();
          } else {
            return mix.weight_parameters();
          }
        },
        mixing_);
  }

  /// Architecture logits; empty unless the mixing component is a supernet.
  std::vector<Parameter*> arch_parameters() {
    if (auto* s = supernet()) return {&s->arch.logits};
    return {};
  }

  std::vector<Parameter*> all_parameters() {
    auto out = skeleton_parameters();
    for (Parameter* p : mixing_parameters()) out.push_back(p);
    for (Parameter* p : arch_parameters()) out.push_back(p);
    return out;
  }

  /// Trainable weights, architecture logits excluded.
  std::size_t parameter_count() {
    std::size_t n = 0;
    for (Parameter* p : skeleton_parameters()) n += p->value.size();
    for (Parameter* p : mixing_parameters()) n += p->value.size();
    return n;
  }

 private:
  Var encode(Graph& g, Encoder& e, Var x) {
    return linear_forward(g, e.out, linear_forward(g, e.hidden, x));
  }

  ModelConfig cfg_;
  Encoder private_a_, shared_a_, private_b_, shared_b_;
  Mixing mixing_;
  LinearLayer fusion_, classifier_;
};

inline JaeModel build_model(const ModelConfig& cfg, Rng& rng) { return JaeModel::build(cfg, rng); }

/// Closed-form weight count of a baseline model:
///   2 * [ (da + db) * H + 2H ] + 4 * (H * E + E)    encoders
/// + (2E) * M + M                                    mixing layer (M = 50 or 100)
/// + (2E + M) * F + F                                fusion
/// + F * C + C                                       classifier
inline std::size_t baseline_parameter_count(const ModelConfig& c) {
  const std::size_t H = c.encoder_hidden, E = c.encoder_out, F = c.fusion_out, C = c.num_classes;
  const std::size_t M = c.mixing_out_width();
  const std::size_t encoders = 2 * ((c.modality_a_dim + c.modality_b_dim) * H + 2 * H) + 4 * (H * E + E);
  return encoders + (2 * E * M + M) + ((2 * E + M) * F + F) + (F * C + C);
}

}  // namespace gdasjae
