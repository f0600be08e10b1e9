// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gdasjae/errors.hpp"
#include "gdasjae/random.hpp"

namespace gdasjae {

enum class Label : int { not_flawed = 0, flawed = 1 };

inline constexpr std::size_t kNumClasses = 2;

constexpr int class_index(Label l) noexcept { return static_cast<int>(l); }

inline std::string_view label_name(Label l) { return l == Label::flawed ? "flawed" : "not_flawed"; }

/// One labelled function: a source-derived and a binary-derived feature vector.
struct Record {
  std::vector<double> modality_a;
  std::vector<double> modality_b;
  Label label = Label::not_flawed;

  bool operator==(const Record&) const = default;
};

struct ClassCounts {
  std::size_t flawed = 0;
  std::size_t not_flawed = 0;

  std::size_t total() const noexcept { return flawed + not_flawed; }
  bool operator==(const ClassCounts&) const = default;
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(std::string name, std::size_t width_a, std::size_t width_b, std::vector<Record> records)
      : name_(std::move(name)), width_a_(width_a), width_b_(width_b), records_(std::move(records)) {
    if (width_a_ == 0 || width_b_ == 0) throw ValidationError("dataset '" + name_ + "': modality widths must be >= 1");
    if (records_.empty()) throw ValidationError("dataset '" + name_ + "': no records");
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const Record& r = records_[i];
      if (r.modality_a.size() != width_a_ || r.modality_b.size() != width_b_) {
        throw ValidationError("dataset '" + name_ + "': record " + std::to_string(i) + " has widths (" +
                              std::to_string(r.modality_a.size()) + "," + std::to_string(r.modality_b.size()) +
                              "), expected (" + std::to_string(width_a_) + "," + std::to_string(width_b_) + ")");
      }
      for (double v : r.modality_a)
        if (!std::isfinite(v)) throw ValidationError("dataset '" + name_ + "': non-finite value in record " + std::to_string(i));
      for (double v : r.modality_b)
        if (!std::isfinite(v)) throw ValidationError("dataset '" + name_ + "': non-finite value in record " + std::to_string(i));
    }
  }

  const std::string& name() const noexcept { return name_; }
  std::size_t width_a() const noexcept { return width_a_; }
  std::size_t width_b() const noexcept { return width_b_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const Record& operator[](std::size_t i) const { return records_[i]; }
  std::span<const Record> records() const noexcept { return records_; }

  /// Subset by index, preserving the given order.
  Dataset subset(std::span<const std::size_t> idx, std::string name = {}) const {
    std::vector<Record> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(records_.at(i));
    Dataset d;
    d.name_ = name.empty() ? name_ : std::move(name);
    d.width_a_ = width_a_;
    d.width_b_ = width_b_;
    d.records_ = std::move(out);
    return d;
  }

  bool operator==(const Dataset&) const = default;

 private:
  std::string name_;
  std::size_t width_a_ = 0;
  std::size_t width_b_ = 0;
  std::vector<Record> records_;
};

inline ClassCounts summarize(const Dataset& ds) {
  ClassCounts c;
  for (const Record& r : ds.records()) (r.label == Label::flawed ? c.flawed : c.not_flawed)++;
  return c;
}

// ---------------------------------------------------------------------------
// Delimited text: header `label,a_0,...,a_{p-1},b_0,...,b_{q-1}`
// ---------------------------------------------------------------------------

/// Shortest decimal that round-trips the double exactly.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

inline void save_delimited(const Dataset& ds, std::ostream& os) {
  os << "label";
  for (std::size_t i = 0; i < ds.width_a(); ++i) os << ",a_" << i;
  for (std::size_t i = 0; i < ds.width_b(); ++i) os << ",b_" << i;
  os << '\n';
  for (const Record& r : ds.records()) {
    os << label_name(r.label);
    for (double v : r.modality_a) os << ',' << format_double(v);
    for (double v : r.modality_b) os << ',' << format_double(v);
    os << '\n';
  }
}

inline void save_delimited(const Dataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  save_delimited(ds, os);
  if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] inline void data_error(std::size_t line, const std::string& reason) {
  throw ParseError(line, reason, "line " + std::to_string(line) + ": " + reason);
}

}  // namespace detail

inline Dataset load_delimited(std::istream& is, std::string name = "data") {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line)) detail::data_error(1, "missing header row");
  ++lineno;
  const auto header = detail::split_fields(line);
  if (header.empty() || detail::trim(header[0]) != "label") detail::data_error(1, "first header column must be 'label'");
  std::size_t p = 0, q = 0;
  for (std::size_t i = 1; i < header.size(); ++i) {
    const auto h = detail::trim(header[i]);
    const bool is_a = h.starts_with("a_");
    const bool is_b = h.starts_with("b_");
    if (!is_a && !is_b) detail::data_error(1, "header column '" + std::string(h) + "' lacks an a_/b_ prefix");
    if (is_a && q > 0) detail::data_error(1, "a_ columns must precede b_ columns");
    const std::string expected = (is_a ? "a_" + std::to_string(p) : "b_" + std::to_string(q));
    if (h != expected) detail::data_error(1, "expected header column '" + expected + "', got '" + std::string(h) + "'");
    (is_a ? p : q)++;
  }
  if (p == 0) detail::data_error(1, "no a_ columns in header");
  if (q == 0) detail::data_error(1, "no b_ columns in header");

  std::vector<Record> records;
  while (std::getline(is, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line);
    if (fields.size() != 1 + p + q) {
      detail::data_error(lineno, "expected " + std::to_string(1 + p + q) + " fields, got " + std::to_string(fields.size()));
    }
    Record r;
    const auto lab = detail::trim(fields[0]);
    if (lab == "flawed" || lab == "1") {
      r.label = Label::flawed;
    } else if (lab == "not_flawed" || lab == "0") {
      r.label = Label::not_flawed;
    } else {
      detail::data_error(lineno, "unknown label '" + std::string(lab) + "'");
    }
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const auto f = detail::trim(fields[i]);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        detail::data_error(lineno, "column " + std::to_string(i) + ": cannot parse '" + std::string(f) + "'");
      }
      if (!std::isfinite(v)) detail::data_error(lineno, "column " + std::to_string(i) + ": non-finite value");
      (i <= p ? r.modality_a : r.modality_b).push_back(v);
    }
    records.push_back(std::move(r));
  }
  if (records.empty()) detail::data_error(lineno, "no data rows");
  return Dataset(std::move(name), p, q, std::move(records));
}

inline Dataset load_delimited(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  std::string name = path;
  if (auto slash = name.find_last_of('/'); slash != std::string::npos) name = name.substr(slash + 1);
  return load_delimited(is, name);
}

// ---------------------------------------------------------------------------
// Synthetic two-modality generator
// ---------------------------------------------------------------------------

/// Each class is an isotropic Gaussian of scale `noise`; the two class means
/// lie `separation` apart along the all-ones direction of a discriminative
/// subspace. Without a bottleneck that subspace is the whole joint (a, b)
/// space. With bottleneck width k it is the first k coordinates of each
/// modality, and the remaining coordinates are pure noise.
struct SynthSpec {
  std::size_t n_flawed = 146;
  std::size_t n_not_flawed = 554;
  std::size_t width_a = 16;
  std::size_t width_b = 16;
  double separation = 6.0;
  double noise = 1.0;
  std::optional<std::size_t> bottleneck_width;
  std::uint64_t seed = 0;
  std::string name = "synth";

  void validate() const {
    if (n_flawed < 1 || n_not_flawed < 1) throw ConfigError("synth: class counts must be >= 1");
    if (width_a < 1 || width_b < 1) throw ConfigError("synth: modality widths must be >= 1");
    if (!(separation >= 0.0)) throw ConfigError("synth: separation must be >= 0");
    if (!(noise > 0.0)) throw ConfigError("synth: noise must be > 0");
    if (bottleneck_width) {
      if (*bottleneck_width < 1 || *bottleneck_width > width_a || *bottleneck_width > width_b) {
        throw ConfigError("synth: bottleneck_width must lie in [1, min(width_a, width_b)]");
      }
    }
  }
};

/// Deterministic given spec.seed; records are emitted with the classes
/// interleaved in a seeded random order.
inline Dataset synth_generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<Label> labels;
  labels.insert(labels.end(), spec.n_flawed, Label::flawed);
  labels.insert(labels.end(), spec.n_not_flawed, Label::not_flawed);
  shuffle(labels, rng);

  const std::size_t p = spec.width_a, q = spec.width_b;
  const std::size_t ka = spec.bottleneck_width.value_or(p), kb = spec.bottleneck_width.value_or(q);
  const double dir = 1.0 / std::sqrt(static_cast<double>(ka + kb));
  std::vector<Record> records;
  records.reserve(labels.size());
  for (Label lab : labels) {
    Record r;
    r.label = lab;
    r.modality_a.resize(p);
    r.modality_b.resize(q);
    const double shift = (lab == Label::flawed ? 0.5 : -0.5) * spec.separation * dir;
    for (std::size_t i = 0; i < p; ++i) r.modality_a[i] = (i < ka ? shift : 0.0) + spec.noise * standard_normal(rng);
    for (std::size_t i = 0; i < q; ++i) r.modality_b[i] = (i < kb ? shift : 0.0) + spec.noise * standard_normal(rng);
    records.push_back(std::move(r));
  }
  return Dataset(spec.name, p, q, std::move(records));
}

}  // namespace gdasjae
