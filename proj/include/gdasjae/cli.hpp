// SPDX-License-Identifier: Apache-2.0
#pragma once

// Command implementations behind the `gdasjae` executable. Each command reads
// a run configuration, does its work, and writes plain files into an output
// directory. Primary outputs (genotype, curves, fits, rankings, charts) are
// byte-identical across re-runs; manifests additionally record wall time.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gdasjae/config.hpp"
#include "gdasjae/dataio.hpp"
#include "gdasjae/evalharness.hpp"
#include "gdasjae/genotype.hpp"
#include "gdasjae/model.hpp"
#include "gdasjae/search.hpp"

namespace gdasjae::cli {

inline constexpr const char* kVersion = "0.1.0";

struct CommandOptions {
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<SearchSpace> space;
  std::string out_dir = ".";
  unsigned jobs = default_jobs();
  std::ostream* out = &std::cout;
};

inline SearchSpace space_from_name(const std::string& s) {
  if (s == "desk") return SearchSpace::desk();
  if (s == "full") return SearchSpace::full();
  throw ConfigError("space: expected 'desk' or 'full', got '" + s + "'");
}

/// Config file (or defaults) with command-line overrides applied.
inline RunConfig resolve_config(const CommandOptions& o) {
  RunConfig c = o.config_path ? load_run_config(*o.config_path) : RunConfig{};
  if (o.seed) c.seed = c.split.seed = c.search.seed = *o.seed;
  if (o.space) c.space = *o.space;
  return c;
}

/// Loads the data, fixes model widths, validates everything before any work.
inline Dataset prepare(RunConfig& c) {
  Dataset ds = load_data(c);
  c.validate();
  for (const std::string& w : schedule_warnings(c.search.sgd)) warn(w);
  return ds;
}

namespace detail {

inline std::filesystem::path ensure_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::filesystem::create_directories(p);
  return p;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << text;
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("missing input '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline json data_summary(const Dataset& ds) {
  const ClassCounts c = summarize(ds);
  return json{{"name", ds.name()},
              {"flawed", c.flawed},
              {"not_flawed", c.not_flawed},
              {"width_a", ds.width_a()},
              {"width_b", ds.width_b()}};
}

inline json manifest(const std::string& command, const RunConfig& c, const Dataset& ds) {
  return json{{"tool", "gdasjae"},
              {"version", kVersion},
              {"command", command},
              {"build", {{"compiler", __VERSION__}, {"cplusplus", __cplusplus}}},
              {"config", run_config_to_json(c)},
              {"data", data_summary(ds)}};
}

inline void write_manifest(const std::filesystem::path& path, json m,
                           std::chrono::steady_clock::time_point started) {
  m["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  write_text(path, m.dump(2) + "\n");
}

inline std::string mixing_label(const MixingSpec& m) {
  switch (m.kind) {
    case MixingKind::baseline_50: return "JAE-Mixing-50";
    case MixingKind::baseline_100: return "JAE-Mixing-100";
    case MixingKind::fixed_cell: return serialize(m.genotype);
    case MixingKind::supernet: return "supernet";
  }
  return "";
}

}  // namespace detail

// ---------------------------------------------------------------------------
// search
// ---------------------------------------------------------------------------

/// Searches on the train/validation splits; writes genotype.txt, curves.csv
/// and manifest.json.
inline SearchResult cmd_search(const CommandOptions& o) {
  const auto started = std::chrono::steady_clock::now();
  RunConfig c = resolve_config(o);
  const Dataset ds = prepare(c);
  const Splits sp = split(ds, c.split);
  ModelConfig m = c.model;
  m.mixing = MixingSpec::search(c.space);
  SearchResult r = gdas_search(sp.train, sp.val, m, c.search);

  const auto dir = detail::ensure_dir(o.out_dir);
  const std::string genotype = serialize(r.final_genotype);
  detail::write_text(dir / "genotype.txt", genotype + "\n");
  std::ostringstream curves;
  emit_curves(r, curves);
  detail::write_text(dir / "curves.csv", curves.str());

  json man = detail::manifest("search", c, ds);
  man["splits"] = {{"train", sp.train.size()}, {"val", sp.val.size()}, {"test", sp.test.size()}};
  man["result"] = {{"genotype", genotype},
                   {"final_search_accuracy", r.search_curve.back()},
                   {"final_eval_accuracy", r.eval_curve.back()}};
  man["outputs"] = {"genotype.txt", "curves.csv"};
  detail::write_manifest(dir / "manifest.json", man, started);

  *o.out << genotype << '\n';
  return r;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

inline std::string cv_summary_line(const std::string& label, const CVResult& r) {
  return label + "\t" + format_mean_std(r.sample_mean, r.sample_std) + "\n";
}

/// N x 2 cross-validation of a baseline or fixed genotype on the full data;
/// writes cv.csv, cv_summary.txt and eval_manifest.json.
inline CVResult cmd_eval(const CommandOptions& o, const MixingSpec& mixing) {
  const auto started = std::chrono::steady_clock::now();
  RunConfig c = resolve_config(o);
  const Dataset ds = prepare(c);
  ModelConfig m = c.model;
  m.mixing = mixing;
  m.validate();
  CVResult r = n_by_2_cv(ds, m, c.train_config(), c.eval.repetitions, c.seed, o.jobs);

  const auto dir = detail::ensure_dir(o.out_dir);
  std::ostringstream fits;
  write_cv_csv(r, fits);
  detail::write_text(dir / "cv.csv", fits.str());
  const std::string label = detail::mixing_label(mixing);
  detail::write_text(dir / "cv_summary.txt", cv_summary_line(label, r));

  json man = detail::manifest("eval", c, ds);
  man["mixing"] = label;
  man["result"] = {{"mean", r.sample_mean}, {"std", r.sample_std}, {"fits", r.fits.size()}};
  man["outputs"] = {"cv.csv", "cv_summary.txt"};
  detail::write_manifest(dir / "eval_manifest.json", man, started);

  *o.out << cv_summary_line(label, r);
  return r;
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

/// Trains every genotype of the configured space under the oracle budget;
/// writes ranking.csv and oracle_manifest.json, prints the top five.
inline OracleResult cmd_oracle(const CommandOptions& o, const std::optional<std::string>& compare = {},
                               bool allow_full = false) {
  const auto started = std::chrono::steady_clock::now();
  RunConfig c = resolve_config(o);
  const Dataset ds = prepare(c);
  std::optional<Genotype> target;
  if (compare) target = parse(*compare);

  OracleConfig oc;
  oc.train = c.train_config();
  oc.budget_epochs = c.oracle_budget_epochs;
  oc.split = c.split;
  oc.seed = c.seed;
  oc.allow_full_space = allow_full;
  oc.jobs = o.jobs;
  OracleResult r = exhaustive_oracle(ds, c.space, c.model, oc);

  const auto dir = detail::ensure_dir(o.out_dir);
  std::ostringstream rows;
  write_ranking_csv(r, rows);
  detail::write_text(dir / "ranking.csv", rows.str());

  json man = detail::manifest("oracle", c, ds);
  man["result"] = {{"genotypes", r.ranking.size()},
                   {"budget_epochs", r.budget_epochs},
                   {"train_size", r.train_size},
                   {"test_size", r.test_size},
                   {"best", r.ranking.front().canonical}};
  man["outputs"] = {"ranking.csv"};
  if (target) man["compare"] = {{"genotype", serialize(*target)}, {"rank", r.rank_of(*target)}};
  detail::write_manifest(dir / "oracle_manifest.json", man, started);

  auto& out = *o.out;
  char buf[64];
  for (std::size_t i = 0; i < std::min<std::size_t>(5, r.ranking.size()); ++i) {
    std::snprintf(buf, sizeof buf, "%zu\t%.4f\t", i + 1, r.ranking[i].accuracy);
    out << buf << r.ranking[i].canonical << '\n';
  }
  if (target) {
    out << "rank of " << serialize(*target) << ": " << r.rank_of(*target) << " of " << r.ranking.size() << '\n';
  }
  return r;
}

// ---------------------------------------------------------------------------
// genotype tools
// ---------------------------------------------------------------------------

/// Error text with a caret under the offending byte.
inline std::string describe_parse_error(const std::string& text, const ParseError& e) {
  std::string s = "error: " + e.reason() + " (offset " + std::to_string(e.offset()) + ")\n  " + text + "\n  ";
  s += std::string(std::min(e.offset(), text.size()), ' ') + "^\n";
  return s;
}

/// Validation report: canonical form, node count, edge count. Returns 0 when valid.
inline int cmd_genotype_parse(const std::string& text, std::ostream& out, std::ostream& err) {
  try {
    const Genotype g = parse(text);
    out << "valid\ncanonical: " << serialize(g) << "\nnodes: " << g.compute_nodes()
        << "\nedges: " << g.edge_count() << '\n';
    return 0;
  } catch (const ParseError& e) {
    err << describe_parse_error(text, e);
    return 1;
  }
}

inline int cmd_genotype_canon(const std::string& text, std::ostream& out, std::ostream& err) {
  try {
    out << serialize(parse(text)) << '\n';
    return 0;
  } catch (const ParseError& e) {
    err << describe_parse_error(text, e);
    return 1;
  }
}

inline void cmd_genotype_enumerate(SearchSpace space, std::ostream& out) {
  for (const Genotype& g : enumerate_all(space)) out << serialize(g) << '\n';
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

/// Writes the configured synthetic dataset to data.csv and prints class counts.
inline ClassCounts cmd_synth(const CommandOptions& o) {
  RunConfig c = resolve_config(o);
  if (c.data.path) throw ConfigError("synth: the configuration names a data file, not a synthetic generator");
  const Dataset ds = synth_generate(c.data.synth);
  const auto dir = detail::ensure_dir(o.out_dir);
  std::ostringstream os;
  save_delimited(ds, os);
  detail::write_text(dir / "data.csv", os.str());
  const ClassCounts counts = summarize(ds);
  *o.out << "dataset\t# Flawed\t# Not Flawed\n"
         << ds.name() << '\t' << counts.flawed << '\t' << counts.not_flawed << '\n';
  return counts;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct CurveRow {
  int epoch = 0;
  double search = 0, eval = 0, temperature = 0, lr = 0;
};

inline std::vector<CurveRow> parse_curves(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "epoch,search_accuracy,eval_accuracy,temperature,lr") {
    throw ParseError(1, "unexpected curves header", "curves: line 1: unexpected header");
  }
  std::vector<CurveRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    CurveRow r;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &r.epoch, &r.search, &r.eval, &r.temperature, &r.lr) != 5) {
      throw ParseError(lineno, "malformed row", "curves: line " + std::to_string(lineno) + ": malformed row");
    }
    rows.push_back(r);
  }
  if (rows.empty()) throw ParseError(lineno, "no rows", "curves: no data rows");
  return rows;
}

/// Accuracies from a cv.csv written by cmd_eval.
inline std::vector<double> parse_cv_accuracies(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kCvHeader) throw ParseError(1, "unexpected header", "cv: unexpected header");
  std::vector<double> acc;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    acc.push_back(std::stod(line.substr(line.rfind(',') + 1)));
  }
  return acc;
}

/// Two-series line chart (search and eval accuracy against epoch).
inline std::string render_curves_svg(const std::vector<CurveRow>& rows) {
  constexpr double W = 640, H = 400, left = 60, right = 20, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  const int last = rows.back().epoch;
  const double span = last > 0 ? last : 1;
  auto x = [&](double e) { return left + pw * e / span; };
  auto y = [&](double a) { return top + ph * (1.0 - a); };
  char buf[256];
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
  s << "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  s << "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
       "Cell search convergence</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double a = i / 4.0;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#ddd\"/>\n"
                  "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">%.2f</text>\n",
                  left, y(a), left + pw, y(a), left - 6, y(a) + 4, a);
    s << buf;
  }
  const int step = std::max(1, (last + 4) / 5);
  for (int e = 0; e <= last; e += step) {
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">%d</text>\n",
                  x(e), top + ph + 16, e);
    s << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"none\" stroke=\"black\"/>\n", left, top,
                pw, ph);
  s << buf;
  s << "<text x=\"350\" y=\"390\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">epoch</text>\n";
  s << "<text x=\"16\" y=\"200\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
       "transform=\"rotate(-90 16 200)\">class-averaged accuracy</text>\n";
  auto series = [&](const char* name, const char* color, double CurveRow::*field, double ly) {
    s << "<polyline id=\"" << name << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", x(rows[i].epoch), y(rows[i].*field));
      s << buf;
    }
    s << "\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"%s\" stroke-width=\"2\"/>"
                  "<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"11\">%s</text>\n",
                  left + pw - 90, ly, left + pw - 70, ly, color, left + pw - 64, ly + 4, name);
    s << buf;
  };
  series("search", "#1f77b4", &CurveRow::search, top + ph - 36);
  series("eval", "#d62728", &CurveRow::eval, top + ph - 18);
  s << "</svg>\n";
  return s.str();
}

inline std::string render_summary(const std::vector<CurveRow>& rows, const std::optional<std::string>& genotype,
                                  const std::optional<std::vector<double>>& cv) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].eval > rows[best].eval) best = i;
  char buf[128];
  std::ostringstream s;
  s << "| quantity | value |\n|---|---|\n";
  if (genotype) s << "| genotype | " << *genotype << " |\n";
  s << "| epochs | " << rows.size() << " |\n";
  std::snprintf(buf, sizeof buf, "| final search accuracy | %.4f |\n| final eval accuracy | %.4f |\n", rows.back().search,
                rows.back().eval);
  s << buf;
  std::snprintf(buf, sizeof buf, "| best eval accuracy | %.4f (epoch %d) |\n", rows[best].eval, rows[best].epoch);
  s << buf;
  if (cv && !cv->empty()) {
    const SampleStats st = sample_stats(*cv);
    s << "| " << cv->size() << "-fit CV accuracy | " << format_mean_std(st.mean, st.std) << " |\n";
  }
  return s.str();
}

/// Reads curves.csv (and genotype.txt, cv.csv when present) from `run_dir`;
/// writes report.svg and summary.md there.
inline void cmd_report(const std::string& run_dir, std::ostream& out = std::cout) {
  const std::filesystem::path dir(run_dir);
  const auto rows = parse_curves(detail::read_text(dir / "curves.csv"));
  std::optional<std::string> genotype;
  if (std::filesystem::exists(dir / "genotype.txt")) {
    std::string g = detail::read_text(dir / "genotype.txt");
    while (!g.empty() && (g.back() == '\n' || g.back() == '\r')) g.pop_back();
    genotype = g;
  }
  std::optional<std::vector<double>> cv;
  if (std::filesystem::exists(dir / "cv.csv")) cv = parse_cv_accuracies(detail::read_text(dir / "cv.csv"));
  detail::write_text(dir / "report.svg", render_curves_svg(rows));
  const std::string summary = render_summary(rows, genotype, cv);
  detail::write_text(dir / "summary.md", summary);
  out << summary;
}

}  // namespace gdasjae::cli
