// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion.
//   acceptance [--only k] [--jobs n]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gdasjae/cli.hpp"
#include "genotype_oracle.hpp"

using namespace gdasjae;
namespace fs = std::filesystem;

namespace {

unsigned g_jobs = default_jobs();

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::string config_path(const char* name) { return std::string(GDASJAE_CONFIG_DIR) + "/" + name; }

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (double& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// 1 -------------------------------------------------------------------------
// Random composite graphs exercising every op; the straight-through node is
// fed its own soft value as the hard choice so the forward function stays
// differentiable and finite differences see the soft path.
Outcome gradients() {
  constexpr double tol = 1e-4, eps = 1e-5;
  Rng rng(20240101);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 2 + uniform_index(rng, 4), a = 2 + uniform_index(rng, 5), h = 2 + uniform_index(rng, 5);
    const std::size_t pad = h + uniform_index(rng, 4), c = 2 + uniform_index(rng, 2), k = 2 + uniform_index(rng, 2);
    Parameter w1("w1", random_tensor(rng, a, h)), b1("b1", random_tensor(rng, 1, h));
    Parameter w2("w2", random_tensor(rng, a, pad)), logits("logits", random_tensor(rng, 1, k, -2, 2));
    Parameter w3("w3", random_tensor(rng, 2 * pad, c));
    const Tensor x = random_tensor(rng, m, a, -2, 2);
    const double tau = uniform(rng, 0.5, 2.0), slope = uniform(rng, 0.01, 0.3);
    std::vector<int> labels(m);
    for (int& l : labels) l = static_cast<int>(uniform_index(rng, c));
    std::vector<double> scales(k);
    for (double& s : scales) s = uniform(rng, -1.5, 1.5);
    Parameter* ps[] = {&w1, &b1, &w2, &logits, &w3};
    const double err = grad_check(
        [&](Graph& g) {
          Var xin = g.constant(x);
          Var narrow = leaky_relu(add_bias(matmul(xin, g.parameter(w1)), g.parameter(b1)), slope);
          Var wide = leaky_relu(matmul(xin, g.parameter(w2)), slope);
          Var padded = pad_cols(narrow, pad);
          Var summed = add_n(std::vector<Var>{padded, wide});
          Var soft = softmax_rows(scale(g.parameter(logits), 1.0 / tau));
          Var weights = straight_through(soft, g.value(soft));
          std::vector<Var> cands;
          for (double s : scales) cands.push_back(scale(summed, s));
          Var mixed = add(weighted_sum(cands, weights), mul(summed, summed));
          Var feat = concat_cols({mixed, wide});
          return softmax_cross_entropy(matmul(feat, g.parameter(w3)), labels);
        },
        ps, eps);
    worst = std::max(worst, err);
  }
  return {worst <= tol, fmt("worst relative error %.3g over 50 graphs (tol %.0e)", worst, tol)};
}

// 2 -------------------------------------------------------------------------
Outcome grammar() {
  std::ifstream is(std::string(GDASJAE_TEST_DATA) + "/table3_cells.txt");
  std::string line;
  int table = 0, table_ok = 0;
  while (std::getline(is, line)) {
    const auto tab = line.find('\t');
    if (line.empty() || line[0] == '#' || tab == std::string::npos) continue;
    const std::string text = line.substr(tab + 1);
    ++table;
    std::string stripped;
    for (char ch : text)
      if (ch != ' ' && ch != '\t') stripped += ch;
    try {
      const Genotype g = parse(text);
      validate(g);
      std::string canon = serialize(g);
      canon.erase(std::remove(canon.begin(), canon.end(), ' '), canon.end());
      if (canon == stripped && serialize(parse(serialize(g))) == serialize(g)) ++table_ok;
    } catch (const std::exception&) {
    }
  }
  int desk_ok = 0;
  const auto all = enumerate_all(SearchSpace::desk());
  for (const Genotype& g : all)
    if (parse(serialize(g)) == g) ++desk_ok;

  Rng rng(2);
  int agree = 0;
  const int trials = 1000;
  for (int i = 0; i < trials; ++i) {
    const std::string text = genotype_oracle::mutate(serialize(all[uniform_index(rng, all.size())]), rng);
    std::optional<std::string> got;
    try {
      got = serialize(parse(text));
    } catch (const ParseError&) {
    } catch (const ValidationError&) {
    }
    if (got == genotype_oracle::reference_canonical(text)) ++agree;
  }
  const bool pass = table == 10 && table_ok == 10 && desk_ok == 729 && agree == trials;
  std::ostringstream d;
  d << "published cells " << table_ok << "/" << table << ", desk round trips " << desk_ok << "/729, mutations " << agree << "/"
    << trials;
  return {pass, d.str()};
}

// 3 -------------------------------------------------------------------------
Outcome metric() {
  Rng rng(3);
  int matches = 0, dup_ok = 0;
  const int tables = 1000;
  for (int i = 0; i < tables; ++i) {
    std::vector<int> truth, pred;
    const std::size_t n0 = 1 + uniform_index(rng, 60), n1 = 1 + uniform_index(rng, 60);
    for (std::size_t j = 0; j < n0 + n1; ++j) {
      truth.push_back(j < n0 ? 0 : 1);
      pred.push_back(static_cast<int>(uniform_index(rng, 2)));
    }
    // Brute-force tally and a hand-reduced fraction.
    std::uint64_t tot[2] = {0, 0}, hit[2] = {0, 0};
    for (std::size_t j = 0; j < truth.size(); ++j) {
      tot[truth[j]]++;
      hit[truth[j]] += truth[j] == pred[j];
    }
    std::uint64_t num = hit[0] * tot[1] + hit[1] * tot[0], den = 2 * tot[0] * tot[1];
    const std::uint64_t gcd = std::gcd(num, den);
    num /= gcd ? gcd : 1;
    den /= gcd ? gcd : 1;
    ConfusionCounts cc;
    for (std::size_t j = 0; j < truth.size(); ++j) cc.add(truth[j], pred[j]);
    const Rational r = class_averaged_accuracy_exact(cc);
    if (r == Rational{num, den}) ++matches;
    // Duplicate every instance of one class k times.
    const int cls = static_cast<int>(uniform_index(rng, 2));
    const std::size_t k = 2 + uniform_index(rng, 5);
    ConfusionCounts dup;
    for (std::size_t j = 0; j < truth.size(); ++j)
      for (std::size_t t = 0; t < (truth[j] == cls ? k : 1); ++t) dup.add(truth[j], pred[j]);
    if (class_averaged_accuracy_exact(dup) == r) ++dup_ok;
  }
  std::ostringstream d;
  d << "exact matches " << matches << "/" << tables << ", duplication invariant " << dup_ok << "/" << tables;
  return {matches == tables && dup_ok == tables, d.str()};
}

// 4 -------------------------------------------------------------------------
Outcome equivalence() {
  constexpr double tol = 1e-9;
  Rng rng(4);
  Supernet net = Supernet::build(SearchSpace::desk(), 128, 100, 0.01, rng);
  double worst = 0;
  int index_mismatch = 0;
  for (const Genotype& g : enumerate_all(SearchSpace::desk())) {
    const Tensor x = random_tensor(rng, 4, 128, -3, 3);
    net.arch = saturated_arch(g, 1e6);
    Graph gs;
    SampledArch sampled;
    const Tensor s = gs.value(supernet_forward(gs, net, gs.constant(x), rng, NoiseMode::gumbel, &sampled));
    FixedCell cell = net.extract(g);
    Graph gf;
    const Tensor f = gf.value(cell_forward_fixed(gf, cell, gf.constant(x)));
    for (std::size_t i = 0; i < s.size(); ++i) worst = std::max(worst, std::abs(s[i] - f[i]));
    std::vector<std::size_t> expect;
    for (OpKind op : g.ops()) expect.push_back(op_index(op));
    index_mismatch += sampled.op_indices != expect;
  }
  return {worst <= tol && index_mismatch == 0,
          fmt("729 genotypes, max |supernet - fixed| %.3g (tol %.0e), %g sampling mismatches", worst, tol,
              index_mismatch)};
}

// 5 -------------------------------------------------------------------------
Outcome cv_protocol() {
  constexpr double tol = 1e-12;
  SynthSpec spec;
  spec.n_flawed = 21;
  spec.n_not_flawed = 50;
  spec.width_a = 4;
  spec.width_b = 3;
  spec.seed = 5;
  const Dataset ds = synth_generate(spec);
  ModelConfig m;
  m.modality_a_dim = 4;
  m.modality_b_dim = 3;
  m.encoder_hidden = 8;
  m.encoder_out = 6;
  m.fusion_out = 5;
  TrainConfig t;
  t.sgd.epochs = 3;
  t.sgd.batch_size = 16;
  const std::uint64_t seed = 55;
  const CVResult r = n_by_2_cv(ds, m, t, 5, seed, g_jobs);

  bool halves_ok = true;
  for (int rep = 0; rep < 5; ++rep) {
    const auto h = cv_halves(ds, seed, rep);
    std::set<std::size_t> a(h[0].begin(), h[0].end()), b(h[1].begin(), h[1].end());
    std::vector<std::size_t> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    halves_ok &= both.empty() && a.size() + b.size() == ds.size();
    for (const auto& half : h) {
      std::size_t flawed = 0;
      for (std::size_t i : half) flawed += ds[i].label == Label::flawed;
      halves_ok &= flawed == 10 || flawed == 11;
    }
  }
  bool order_ok = r.fits.size() == 10;
  for (std::size_t i = 0; order_ok && i < r.fits.size(); ++i)
    order_ok = r.fits[i].repetition == static_cast<int>(i / 2) && r.fits[i].fold == static_cast<int>(i % 2);
  long double mean = 0;
  for (const auto& f : r.fits) mean += f.accuracy;
  mean /= r.fits.size();
  long double ss = 0;
  for (const auto& f : r.fits) ss += (f.accuracy - mean) * (f.accuracy - mean);
  const double std = static_cast<double>(std::sqrt(ss / (r.fits.size() - 1)));
  const double dm = std::abs(r.sample_mean - static_cast<double>(mean)), ds_ = std::abs(r.sample_std - std);
  const bool pass = order_ok && halves_ok && dm <= tol && ds_ <= tol;
  return {pass, std::to_string(r.fits.size()) + " fits, halves " + (halves_ok ? "disjoint+stratified" : "BAD") +
                    fmt(", |dmean| %.2g, |dstd| %.2g (tol %.0e)", dm, ds_, tol)};
}

// 6 -------------------------------------------------------------------------
Outcome skew_baseline() {
  constexpr double threshold = 0.995;
  cli::CommandOptions o;
  o.config_path = config_path("cwe590_skew.json");
  o.out_dir = (fs::temp_directory_path() / "gdasjae_acceptance_6").string();
  o.jobs = g_jobs;
  std::ostringstream quiet;
  o.out = &quiet;
  const CVResult r = cli::cmd_eval(o, MixingSpec::baseline50());
  fs::remove_all(o.out_dir);
  return {r.fits.size() == 10 && r.sample_mean >= threshold,
          "JAE-Mixing-50 on 956/2450 synthetic: " + format_mean_std(r.sample_mean, r.sample_std) +
              fmt(" (need mean >= %.3f)", threshold)};
}

// 7 -------------------------------------------------------------------------
Outcome gdas_vs_oracle() {
  RunConfig c = load_run_config(config_path("desk_bottleneck.json"));
  const Dataset ds = cli::prepare(c);
  const Splits sp = split(ds, c.split);

  OracleConfig oc;
  oc.train = c.train_config();
  oc.budget_epochs = c.oracle_budget_epochs;
  oc.split = c.split;
  oc.seed = c.seed;
  oc.jobs = g_jobs;
  const OracleResult oracle = exhaustive_oracle(ds, c.space, c.model, oc);
  const std::size_t cutoff = oracle.ranking.size() / 10;  // top 10% of 729: ranks 1..72

  ModelConfig m = c.model;
  m.mixing = MixingSpec::search(c.space);
  std::vector<std::size_t> ranks(5);
  parallel_for(5, g_jobs, [&](std::size_t i) {
    SearchConfig s = c.search;
    s.seed = i + 1;
    ranks[i] = oracle.rank_of(gdas_search(sp.train, sp.val, m, s).final_genotype);
  });
  int hits = 0;
  std::ostringstream d;
  d << "ranks";
  for (std::size_t r : ranks) {
    d << ' ' << r;
    hits += r <= cutoff;
  }
  d << " of " << oracle.ranking.size() << "; " << hits << "/5 within top " << cutoff << " (need >= 4)";
  return {hits >= 4, d.str()};
}

// 8 -------------------------------------------------------------------------
Outcome determinism() {
  const fs::path base = fs::temp_directory_path() / "gdasjae_acceptance_8";
  fs::remove_all(base);
  std::ostringstream quiet;
  for (const char* sub : {"a", "b"}) {
    cli::CommandOptions o;
    o.config_path = config_path("desk_bottleneck.json");
    o.out_dir = (base / sub).string();
    o.seed = 8;
    o.out = &quiet;
    cli::cmd_search(o);
  }
  bool same = true;
  std::size_t bytes = 0;
  for (const char* f : {"genotype.txt", "curves.csv"}) {
    const std::string a = slurp(base / "a" / f), b = slurp(base / "b" / f);
    same &= !a.empty() && a == b;
    bytes += a.size();
  }
  fs::remove_all(base);
  return {same, std::string(same ? "genotype.txt and curves.csv byte-identical" : "outputs differ") + " (" +
                    std::to_string(bytes) + " bytes)"};
}

// 9 -------------------------------------------------------------------------
Outcome schedule() {
  const SgdConfig cfg;  // published search defaults
  std::vector<std::string> warnings;
  auto saved = warning_handler();
  warning_handler() = [&](std::string_view m) { warnings.emplace_back(m); };
  const LrSchedule lr(cfg);
  warning_handler() = saved;
  const bool warned = warnings.size() == 1 && warnings[0].find("eta_min") != std::string::npos;
  const bool pass = lr(0) == 0.0005 && lr(100) == 0.001 && warned;
  return {pass, fmt("lr(0)=%.17g lr(100)=%.17g", lr(0), lr(100)) + (warned ? ", warning emitted" : ", NO warning")};
}

// 10 ------------------------------------------------------------------------
Outcome gumbel() {
  const ArchParams a = ArchParams::zeros(SearchSpace::desk());  // uniform logits, tau = 1
  Rng rng(10);
  const int n = 10000;
  std::array<int, kOpCount> hits{};
  for (int i = 0; i < n; ++i) hits[gumbel_sample(a, 0, rng).index]++;
  const double p = 1.0 / kOpCount, sigma = std::sqrt(p * (1 - p) / n);
  double worst = 0;
  for (int h : hits) worst = std::max(worst, std::abs(h / double(n) - p) / sigma);
  return {a.temperature == 1.0 && worst <= 3.0,
          fmt("counts %g/%g/%g", hits[0], hits[1], hits[2]) + fmt(", worst deviation %.2f sigma (limit 3)", worst)};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else if (a == "--jobs" && i + 1 < argc) {
      g_jobs = static_cast<unsigned>(std::max(1, std::atoi(argv[++i])));
    } else {
      std::fprintf(stderr, "usage: acceptance [--only k] [--jobs n]\n");
      return 2;
    }
  }
  warning_handler() = [](std::string_view) {};
  const std::vector<Criterion> criteria = {
      {"gradient correctness", gradients},      {"genotype grammar", grammar},
      {"metric oracle", metric},                {"supernet/fixed equivalence", equivalence},
      {"5x2 CV protocol", cv_protocol},         {"skewed separable baseline", skew_baseline},
      {"GDAS vs exhaustive oracle", gdas_vs_oracle}, {"search determinism", determinism},
      {"schedule endpoints", schedule},         {"Gumbel sampling statistics", gumbel},
  };
  if (only < 0 || only > static_cast<int>(criteria.size())) {
    std::fprintf(stderr, "--only expects 1..%zu\n", criteria.size());
    return 2;
  }
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (only && static_cast<int>(k) + 1 != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %zu (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].name,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
