// SPDX-License-Identifier: Apache-2.0
#pragma once

// Cell genotypes and their string form.
//
// A cell is a densely connected DAG: node 0 is the cell input and computation
// node k (1-based) sums one operation applied to each of nodes 0..k-1. The
// text form writes one " + "-separated group per computation node, each group
// listing its incoming edges as "|<width>~<source>|", e.g.
//
//   |100~0| + |50~0|100~1| + |25~0|50~1|50~2|
//
// Spaces around widths and sources are tolerated on input; serialize() emits
// the canonical unpadded form with edges in ascending source order.

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gdasjae/errors.hpp"

namespace gdasjae {

enum class OpKind : std::uint8_t { L25 = 0, L50 = 1, L100 = 2 };

inline constexpr std::array<OpKind, 3> kAllOps = {OpKind::L25, OpKind::L50, OpKind::L100};
inline constexpr std::size_t kOpCount = kAllOps.size();

constexpr int op_width(OpKind op) noexcept {
  switch (op) {
    case OpKind::L25: return 25;
    case OpKind::L50: return 50;
    case OpKind::L100: return 100;
  }
  return 0;
}

constexpr std::size_t op_index(OpKind op) noexcept { return static_cast<std::size_t>(op); }

struct Edge {
  int source = 0;
  OpKind op = OpKind::L25;

  auto operator<=>(const Edge&) const = default;
};

/// The two supported cell shapes: four computation nodes (10 edges, 59049
/// genotypes; the shape of every published cell and the default) or three
/// (6 edges, 729 genotypes; small enough for exhaustive enumeration).
struct SearchSpace {
  int compute_nodes = 4;

  static constexpr SearchSpace desk() { return SearchSpace{3}; }
  static constexpr SearchSpace full() { return SearchSpace{4}; }

  constexpr std::size_t edge_count() const noexcept {
    return static_cast<std::size_t>(compute_nodes * (compute_nodes + 1) / 2);
  }
  constexpr std::size_t cardinality() const noexcept {
    std::size_t n = 1;
    for (std::size_t i = 0; i < edge_count(); ++i) n *= kOpCount;
    return n;
  }
  constexpr bool is_desk() const noexcept { return compute_nodes == 3; }
  constexpr bool operator==(const SearchSpace&) const = default;

  void validate() const {
    if (compute_nodes != 3 && compute_nodes != 4) {
      throw ConfigError("search space must have 3 (desk) or 4 (full) computation nodes, got " +
                        std::to_string(compute_nodes));
    }
  }
};

/// nodes[k-1] holds the incoming edges of computation node k.
struct Genotype {
  std::vector<std::vector<Edge>> nodes;

  std::size_t compute_nodes() const noexcept { return nodes.size(); }
  std::size_t edge_count() const noexcept {
    std::size_t n = 0;
    for (const auto& v : nodes) n += v.size();
    return n;
  }
  SearchSpace space() const { return SearchSpace{static_cast<int>(nodes.size())}; }

  /// Edge operations in node-major, ascending-source order.
  std::vector<OpKind> ops() const {
    std::vector<OpKind> out;
    for (const auto& v : nodes)
      for (const Edge& e : v) out.push_back(e.op);
    return out;
  }

  auto operator<=>(const Genotype&) const = default;
};

/// Row index of edge (node, source) in node-major order.
constexpr std::size_t edge_index(int node, int source) noexcept {
  return static_cast<std::size_t>((node - 1) * node / 2 + source);
}

/// Builds a dense genotype from per-edge ops in edge_index order.
inline Genotype genotype_from_ops(std::span<const OpKind> ops, SearchSpace space) {
  space.validate();
  if (ops.size() != space.edge_count()) {
    throw ValidationError("genotype_from_ops: " + std::to_string(ops.size()) + " ops for " +
                          std::to_string(space.edge_count()) + " edges");
  }
  Genotype g;
  std::size_t i = 0;
  for (int k = 1; k <= space.compute_nodes; ++k) {
    std::vector<Edge> in;
    for (int s = 0; s < k; ++s) in.push_back(Edge{s, ops[i++]});
    g.nodes.push_back(std::move(in));
  }
  return g;
}

struct GenotypeViolation {
  int node = 0;
  std::string reason;
};

/// Every invariant violation in `g`, with the 1-based node it concerns
/// (node 0 for whole-cell problems).
inline std::vector<GenotypeViolation> check_genotype(const Genotype& g) {
  std::vector<GenotypeViolation> out;
  if (g.nodes.size() != 3 && g.nodes.size() != 4) {
    out.push_back({0, "cell has " + std::to_string(g.nodes.size()) + " computation nodes; expected 3 or 4"});
  }
  for (std::size_t idx = 0; idx < g.nodes.size(); ++idx) {
    const int k = static_cast<int>(idx) + 1;
    const auto& in = g.nodes[idx];
    if (static_cast<int>(in.size()) != k) {
      out.push_back({k, "density violation: node " + std::to_string(k) + " has " + std::to_string(in.size()) +
                            " incoming edges, expected " + std::to_string(k)});
    }
    std::vector<bool> seen(static_cast<std::size_t>(k), false);
    int prev = -1;
    for (const Edge& e : in) {
      if (e.source < 0 || e.source >= k) {
        out.push_back({k, "acyclicity violation: source " + std::to_string(e.source) + " at node " +
                              std::to_string(k) + " is not in [0," + std::to_string(k) + ")"});
        continue;
      }
      if (seen[static_cast<std::size_t>(e.source)]) {
        out.push_back({k, "duplicate-source violation: source " + std::to_string(e.source) + " repeated at node " +
                              std::to_string(k)});
      } else if (e.source < prev) {
        out.push_back({k, "ordering violation: sources at node " + std::to_string(k) + " are not ascending"});
      }
      seen[static_cast<std::size_t>(e.source)] = true;
      prev = std::max(prev, e.source);
      if (op_index(e.op) >= kOpCount) out.push_back({k, "unknown operation at node " + std::to_string(k)});
    }
    for (int s = 0; s < k; ++s) {
      if (!seen[static_cast<std::size_t>(s)] && static_cast<int>(in.size()) == k) {
        out.push_back({k, "missing-source violation: node " + std::to_string(k) + " lacks an edge from node " +
                              std::to_string(s)});
      }
    }
  }
  return out;
}

/// Throws ValidationError listing every violated invariant.
inline void validate(const Genotype& g) {
  const auto violations = check_genotype(g);
  if (violations.empty()) return;
  std::string msg = "invalid genotype:";
  for (const auto& v : violations) msg += " [node " + std::to_string(v.node) + "] " + v.reason + ";";
  throw ValidationError(msg);
}

inline std::string serialize(const Genotype& g) {
  std::string out;
  for (std::size_t k = 0; k < g.nodes.size(); ++k) {
    if (k > 0) out += " + ";
    out += '|';
    for (const Edge& e : g.nodes[k]) {
      out += std::to_string(op_width(e.op));
      out += '~';
      out += std::to_string(e.source);
      out += '|';
    }
  }
  return out;
}

namespace detail {

class GenotypeParser {
 public:
  explicit GenotypeParser(std::string_view text) : text_(text) {}

  Genotype run() {
    skip_spaces();
    Genotype g;
    while (true) {
      g.nodes.push_back(group(static_cast<int>(g.nodes.size()) + 1));
      skip_spaces();
      if (at_end()) break;
      expect('+', "expected '+' between groups");
      skip_spaces();
      if (at_end()) fail("expected a group after '+'");
    }
    if (g.nodes.size() != 3 && g.nodes.size() != 4) {
      fail("cell has " + std::to_string(g.nodes.size()) + " groups; expected 3 or 4");
    }
    return g;
  }

 private:
  std::vector<Edge> group(int node) {
    expect('|', "expected '|' opening the group for node " + std::to_string(node));
    std::vector<Edge> edges;
    std::vector<bool> seen(static_cast<std::size_t>(node), false);
    while (true) {
      skip_spaces();
      const OpKind op = width();
      skip_spaces();
      expect('~', "expected '~' after operation width");
      skip_spaces();
      const std::size_t src_pos = pos_;
      const long src = number("expected a source node index");
      if (src >= node) {
        fail_at(src_pos, "source " + std::to_string(src) + " >= node index " + std::to_string(node));
      }
      if (seen[static_cast<std::size_t>(src)]) {
        fail_at(src_pos, "duplicate source " + std::to_string(src) + " at node " + std::to_string(node));
      }
      seen[static_cast<std::size_t>(src)] = true;
      edges.push_back(Edge{static_cast<int>(src), op});
      skip_spaces();
      expect('|', "expected '|' closing the edge item");
      // A group ends at '|' followed by '+', end of input, or spaces then either.
      const std::size_t save = pos_;
      skip_spaces();
      if (at_end() || peek() == '+') {
        pos_ = save;
        break;
      }
      pos_ = save;
    }
    for (int s = 0; s < node; ++s) {
      if (!seen[static_cast<std::size_t>(s)]) {
        fail("missing source " + std::to_string(s) + " at node " + std::to_string(node));
      }
    }
    std::sort(edges.begin(), edges.end());
    return edges;
  }

  OpKind width() {
    const std::size_t start = pos_;
    const long w = number("expected an operation width (25, 50 or 100)");
    switch (w) {
      case 25: return OpKind::L25;
      case 50: return OpKind::L50;
      case 100: return OpKind::L100;
      default: fail_at(start, "unknown operation width " + std::to_string(w));
    }
  }

  long number(const std::string& what) {
    const std::size_t start = pos_;
    long v = 0;
    while (!at_end() && peek() >= '0' && peek() <= '9') {
      v = v * 10 + (peek() - '0');
      if (v > 1000000) fail_at(start, "number too large");
      ++pos_;
    }
    if (pos_ == start) fail(what);
    return v;
  }

  void expect(char c, const std::string& what) {
    if (at_end() || peek() != c) fail(what);
    ++pos_;
  }

  void skip_spaces() {
    while (!at_end() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }

  [[noreturn]] void fail(const std::string& reason) const { fail_at(pos_, reason); }
  [[noreturn]] void fail_at(std::size_t at, const std::string& reason) const {
    throw ParseError(at, reason, "genotype parse error at offset " + std::to_string(at) + ": " + reason);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses and validates a genotype string. Leading/trailing whitespace is
/// ignored; errors carry the byte offset of the offending character.
inline Genotype parse(std::string_view text) {
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\n' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  Genotype g = detail::GenotypeParser(text).run();
  validate(g);
  return g;
}

/// All genotypes of `space`, lexicographic in edge_index order with
/// L25 < L50 < L100 (so the first is all-L25).
inline std::vector<Genotype> enumerate_all(SearchSpace space) {
  space.validate();
  const std::size_t edges = space.edge_count();
  std::vector<Genotype> out;
  out.reserve(space.cardinality());
  std::vector<OpKind> ops(edges, OpKind::L25);
  for (std::size_t n = 0; n < space.cardinality(); ++n) {
    std::size_t rem = n;
    for (std::size_t e = edges; e-- > 0;) {
      ops[e] = kAllOps[rem % kOpCount];
      rem /= kOpCount;
    }
    out.push_back(genotype_from_ops(ops, space));
  }
  return out;
}

}  // namespace gdasjae
