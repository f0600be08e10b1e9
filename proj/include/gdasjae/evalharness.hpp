// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "gdasjae/autodiff.hpp"
#include "gdasjae/dataio.hpp"
#include "gdasjae/genotype.hpp"
#include "gdasjae/model.hpp"
#include "gdasjae/nn.hpp"
#include "gdasjae/random.hpp"

namespace gdasjae {

// ---------------------------------------------------------------------------
// Concurrency helper
// ---------------------------------------------------------------------------

/// Runs fn(0..n-1) on up to `jobs` threads. Tasks must be independent; the
/// first exception thrown is rethrown after all workers stop.
inline void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        next.store(n);
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned count = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
  for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline unsigned default_jobs() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// ---------------------------------------------------------------------------
// Metric
// ---------------------------------------------------------------------------

struct ConfusionCounts {
  std::array<std::uint64_t, kNumClasses> total{};
  std::array<std::uint64_t, kNumClasses> correct{};

  void add(int truth, int predicted) {
    total[static_cast<std::size_t>(truth)]++;
    if (truth == predicted) correct[static_cast<std::size_t>(truth)]++;
  }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      total[c] += o.total[c];
      correct[c] += o.correct[c];
    }
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Reduced fraction num/den.
struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;
  bool operator==(const Rational&) const = default;
};

/// Class-averaged accuracy as an exact fraction:
/// (c0 * t1 + c1 * t0) / (2 * t0 * t1).
inline Rational class_averaged_accuracy_exact(const ConfusionCounts& counts) {
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (counts.total[c] == 0) {
      throw UndefinedMetricError("class-averaged accuracy undefined: class " + std::to_string(c) + " has no instances");
    }
    if (counts.correct[c] > counts.total[c]) throw ValidationError("confusion counts: correct exceeds total");
  }
  using u128 = unsigned __int128;
  const u128 t0 = counts.total[0], t1 = counts.total[1];
  u128 num = static_cast<u128>(counts.correct[0]) * t1 + static_cast<u128>(counts.correct[1]) * t0;
  u128 den = 2 * t0 * t1;
  u128 a = num, b = den;
  while (b != 0) {
    const u128 r = a % b;
    a = b;
    b = r;
  }
  if (a > 1) {
    num /= a;
    den /= a;
  }
  return Rational{static_cast<std::uint64_t>(num), static_cast<std::uint64_t>(den)};
}

/// Mean over classes of correct_c / total_c; integer tallies, one final division.
inline double class_averaged_accuracy(const ConfusionCounts& counts) {
  const Rational r = class_averaged_accuracy_exact(counts);
  return static_cast<double>(r.num) / static_cast<double>(r.den);
}

struct SampleStats {
  double mean = 0.0;
  double std = 0.0;  // sample (n-1) denominator; 0 for a single value
};

inline SampleStats sample_stats(std::span<const double> xs) {
  if (xs.empty()) throw UndefinedMetricError("sample statistics of an empty sequence");
  SampleStats s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

/// "0.9703±0.0220": four decimals, plus-minus separator.
inline std::string format_mean_std(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f\xC2\xB1%.4f", mean, std);
  return buf;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitSpec {
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  bool stratified = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(train_fraction > 0 && val_fraction > 0 && test_fraction > 0)) {
      throw ConfigError("split: fractions must be positive");
    }
    if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
      throw ConfigError("split: fractions must sum to 1");
    }
  }
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

struct Splits {
  Dataset train, val, test;
};

namespace detail {

inline std::array<std::vector<std::size_t>, kNumClasses> indices_by_class(const Dataset& ds) {
  std::array<std::vector<std::size_t>, kNumClasses> out;
  for (std::size_t i = 0; i < ds.size(); ++i) out[static_cast<std::size_t>(class_index(ds[i].label))].push_back(i);
  return out;
}

/// Largest-remainder apportionment of `target` across classes in proportion
/// to their sizes; leftover units go to the largest remainders, lower class
/// index first on ties.
inline std::array<std::size_t, kNumClasses> apportion(const std::array<std::size_t, kNumClasses>& sizes,
                                                      std::size_t target) {
  const std::size_t n = sizes[0] + sizes[1];
  std::array<std::size_t, kNumClasses> q{};
  std::array<std::size_t, kNumClasses> rem{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    q[c] = sizes[c] * target / n;
    rem[c] = sizes[c] * target % n;
    assigned += q[c];
  }
  std::array<std::size_t, kNumClasses> order{0, 1};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return rem[x] > rem[y]; });
  for (std::size_t k = 0; assigned < target; ++k, ++assigned) q[order[k % kNumClasses]]++;
  return q;
}

inline std::size_t floor_count(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction + 1e-9));
}

}  // namespace detail

/// Disjoint, exhaustive train/val/test partition. Val and test sizes are
/// floor(n * fraction); the remainder goes to train. When stratified, each
/// split takes its class share by largest-remainder apportionment.
inline SplitIndices split_indices(const Dataset& ds, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = ds.size();
  const std::size_t n_val = detail::floor_count(n, spec.val_fraction);
  const std::size_t n_test = detail::floor_count(n, spec.test_fraction);
  Rng rng(spec.seed);
  SplitIndices out;
  if (!spec.stratified) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    shuffle(idx, rng);
    out.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    out.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val),
                    idx.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
    out.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), idx.end());
  } else {
    auto by_class = detail::indices_by_class(ds);
    const std::array<std::size_t, kNumClasses> sizes{by_class[0].size(), by_class[1].size()};
    const auto val_q = detail::apportion(sizes, n_val);
    const auto test_q = detail::apportion(sizes, n_test);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      shuffle(by_class[c], rng);
      const auto& idx = by_class[c];
      if (val_q[c] + test_q[c] >= idx.size() || val_q[c] == 0 || test_q[c] == 0) {
        throw ValidationError("split: class '" + std::string(label_name(static_cast<Label>(c))) + "' (" +
                              std::to_string(idx.size()) + " instances) cannot populate every stratified split");
      }
      auto it = idx.begin();
      out.val.insert(out.val.end(), it, it + static_cast<std::ptrdiff_t>(val_q[c]));
      it += static_cast<std::ptrdiff_t>(val_q[c]);
      out.test.insert(out.test.end(), it, it + static_cast<std::ptrdiff_t>(test_q[c]));
      it += static_cast<std::ptrdiff_t>(test_q[c]);
      out.train.insert(out.train.end(), it, idx.end());
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

inline Splits split(const Dataset& ds, const SplitSpec& spec) {
  const SplitIndices idx = split_indices(ds, spec);
  return Splits{ds.subset(idx.train, ds.name() + ".train"), ds.subset(idx.val, ds.name() + ".val"),
                ds.subset(idx.test, ds.name() + ".test")};
}

/// Stratified halves for one 2-fold repetition; odd class counts put the
/// extra instance in the first half.
inline std::array<std::vector<std::size_t>, 2> stratified_halves(const Dataset& ds, Rng& rng) {
  auto by_class = detail::indices_by_class(ds);
  std::array<std::vector<std::size_t>, 2> halves;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto& idx = by_class[c];
    shuffle(idx, rng);
    const std::size_t first = (idx.size() + 1) / 2;
    if (first == 0 || idx.size() - first == 0) {
      throw ValidationError("cross-validation: class '" + std::string(label_name(static_cast<Label>(c))) +
                            "' has too few instances to appear in both halves");
    }
    halves[0].insert(halves[0].end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(first));
    halves[1].insert(halves[1].end(), idx.begin() + static_cast<std::ptrdiff_t>(first), idx.end());
  }
  std::sort(halves[0].begin(), halves[0].end());
  std::sort(halves[1].begin(), halves[1].end());
  return halves;
}

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

struct Batch {
  Tensor a;
  Tensor b;
  std::vector<int> labels;
};

inline Batch make_batch(const Dataset& ds, std::span<const std::size_t> idx) {
  Batch batch{Tensor(idx.size(), ds.width_a()), Tensor(idx.size(), ds.width_b()), {}};
  batch.labels.reserve(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const Record& rec = ds[idx[r]];
    std::copy(rec.modality_a.begin(), rec.modality_a.end(), &batch.a(r, 0));
    std::copy(rec.modality_b.begin(), rec.modality_b.end(), &batch.b(r, 0));
    batch.labels.push_back(class_index(rec.label));
  }
  return batch;
}

inline int argmax_row(const Tensor& t, std::size_t r) {
  auto row = t.row_view(r);
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

inline void tally(ConfusionCounts& counts, const Tensor& logits, std::span<const int> labels) {
  for (std::size_t r = 0; r < labels.size(); ++r) counts.add(labels[r], argmax_row(logits, r));
}

/// Optimizers for fixed-architecture training: the mixing component follows
/// the SGD settings (LR schedule, epochs and batch size included), the rest of
/// the network uses ADAM.
struct TrainConfig {
  SgdConfig sgd;
  AdamConfig adam;

  void validate() const {
    sgd.validate();
    adam.validate();
  }
};

struct TrainResult {
  JaeModel model;
  std::vector<double> epoch_loss;      // mean batch loss per epoch
  std::vector<double> epoch_accuracy;  // class-averaged, on the training batches as seen
};

inline void check_widths(const Dataset& ds, const ModelConfig& cfg) {
  if (ds.width_a() != cfg.modality_a_dim || ds.width_b() != cfg.modality_b_dim) {
    throw DimensionError("dataset '" + ds.name() + "' widths (" + std::to_string(ds.width_a()) + "," +
                         std::to_string(ds.width_b()) + ") do not match model (" +
                         std::to_string(cfg.modality_a_dim) + "," + std::to_string(cfg.modality_b_dim) + ")");
  }
}

/// Trains a baseline or fixed-cell model to completion; deterministic in `seed`.
inline TrainResult train_fixed(const Dataset& train, const ModelConfig& mcfg, const TrainConfig& tcfg,
                               std::uint64_t seed) {
  if (train.empty()) throw ValidationError("train_fixed: empty training set");
  if (mcfg.mixing.kind == MixingKind::supernet) throw ConfigError("train_fixed: supernet mixing needs gdas_search");
  tcfg.validate();
  check_widths(train, mcfg);
  Rng init_rng(derive_seed(seed, 0));
  Rng order_rng(derive_seed(seed, 1));
  TrainResult res{JaeModel::build(mcfg, init_rng), {}, {}};
  JaeModel& model = res.model;
  const auto mixing = model.mixing_parameters();
  const auto skeleton = model.skeleton_parameters();
  OptimizerState sgd_state, adam_state;
  const LrSchedule schedule(tcfg.sgd, false);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(tcfg.sgd.batch_size);
  for (int epoch = 0; epoch < tcfg.sgd.epochs; ++epoch) {
    const double lr = schedule(epoch);
    shuffle(order, order_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    ConfusionCounts seen;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(bs, order.size() - start));
      const Batch batch = make_batch(train, idx);
      Graph g;
      Var logits = model.forward(g, g.constant(batch.a), g.constant(batch.b));
      Var loss = softmax_cross_entropy(logits, batch.labels);
      g.backward(loss);
      sgd_step(mixing, sgd_state, lr, tcfg.sgd);
      adam_step(skeleton, adam_state, tcfg.adam);
      zero_grads(mixing);
      zero_grads(skeleton);
      loss_sum += g.value(loss).item();
      ++batches;
      tally(seen, g.value(logits), batch.labels);
    }
    res.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
    const bool both = seen.total[0] > 0 && seen.total[1] > 0;
    res.epoch_accuracy.push_back(both ? class_averaged_accuracy(seen) : 0.0);
  }
  return res;
}

/// Confusion counts of argmax predictions over `ds`.
inline ConfusionCounts evaluate(JaeModel& model, const Dataset& ds, const ForwardOptions& opt = {}) {
  check_widths(ds, model.config());
  ConfusionCounts counts;
  constexpr std::size_t chunk = 256;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += chunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(ds.size(), start + chunk); ++i) idx.push_back(i);
    const Batch batch = make_batch(ds, idx);
    tally(counts, model.logits(batch.a, batch.b, opt), batch.labels);
  }
  return counts;
}

// ---------------------------------------------------------------------------
// N x 2 cross-validation
// ---------------------------------------------------------------------------

struct FitResult {
  int repetition = 0;
  int fold = 0;  // 0: train on first half, test on second; 1: the reverse
  std::uint64_t seed = 0;
  double accuracy = 0.0;
};

struct CVResult {
  std::vector<FitResult> fits;  // repetition-major, fold-minor
  std::vector<double> accuracies;
  double sample_mean = 0.0;
  double sample_std = 0.0;
};

inline CVResult cv_result_from(std::vector<FitResult> fits) {
  CVResult r;
  r.fits = std::move(fits);
  for (const auto& f : r.fits) r.accuracies.push_back(f.accuracy);
  const SampleStats s = sample_stats(r.accuracies);
  r.sample_mean = s.mean;
  r.sample_std = s.std;
  return r;
}

/// Fold halves used by repetition `rep` of n_by_2_cv for `seed`.
inline std::array<std::vector<std::size_t>, 2> cv_halves(const Dataset& ds, std::uint64_t seed, int rep) {
  Rng rng(derive_seed(seed, 2 * static_cast<std::uint64_t>(rep)));
  return stratified_halves(ds, rng);
}

/// N repetitions of stratified two-fold CV: 2N fits, each scored by
/// class-averaged accuracy on the held-out half.
inline CVResult n_by_2_cv(const Dataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg, int N,
                          std::uint64_t seed, unsigned jobs = 1) {
  if (N < 1) throw ConfigError("n_by_2_cv: N must be >= 1");
  const auto counts = summarize(ds);
  if (counts.flawed == 0 || counts.not_flawed == 0) throw ValidationError("n_by_2_cv: both classes must be present");
  std::vector<std::array<std::vector<std::size_t>, 2>> halves;
  for (int rep = 0; rep < N; ++rep) halves.push_back(cv_halves(ds, seed, rep));
  std::vector<FitResult> fits(static_cast<std::size_t>(2 * N));
  parallel_for(fits.size(), jobs, [&](std::size_t i) {
    const int rep = static_cast<int>(i / 2);
    const int fold = static_cast<int>(i % 2);
    const auto& h = halves[static_cast<std::size_t>(rep)];
    const Dataset train = ds.subset(h[static_cast<std::size_t>(fold)]);
    const Dataset test = ds.subset(h[static_cast<std::size_t>(1 - fold)]);
    const std::uint64_t fit_seed = derive_seed(seed, 2 * static_cast<std::uint64_t>(rep) + 1 + (fold ? 1000 : 0));
    TrainResult tr = train_fixed(train, mcfg, tcfg, fit_seed);
    fits[i] = FitResult{rep, fold, fit_seed, class_averaged_accuracy(evaluate(tr.model, test))};
  });
  return cv_result_from(std::move(fits));
}

// ---------------------------------------------------------------------------
// Exhaustive oracle
// ---------------------------------------------------------------------------

struct OracleConfig {
  TrainConfig train;
  int budget_epochs = 10;
  SplitSpec split;
  std::uint64_t seed = 0;
  bool allow_full_space = false;
  unsigned jobs = 1;
};

struct OracleEntry {
  Genotype genotype;
  std::string canonical;
  double accuracy = 0.0;  // class-averaged, on the test split
};

struct OracleResult {
  std::vector<OracleEntry> ranking;  // descending accuracy, ties by canonical string
  int budget_epochs = 0;
  std::uint64_t seed = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;

  /// 1-based rank of `g`, or 0 when absent.
  std::size_t rank_of(const Genotype& g) const {
    const std::string s = serialize(g);
    for (std::size_t i = 0; i < ranking.size(); ++i)
      if (ranking[i].canonical == s) return i + 1;
    return 0;
  }
};

/// Trains every genotype of `space` once under the same reduced budget, split,
/// skeleton initialization and batch order, and ranks them by test accuracy.
inline OracleResult exhaustive_oracle(const Dataset& ds, SearchSpace space, const ModelConfig& base,
                                      const OracleConfig& cfg) {
  space.validate();
  if (!space.is_desk() && !cfg.allow_full_space) {
    throw ConfigError("exhaustive oracle refuses the full " + std::to_string(space.cardinality()) +
                      "-genotype space without an explicit override");
  }
  if (cfg.budget_epochs < 1) throw ConfigError("exhaustive oracle: budget_epochs must be >= 1");
  const Splits sp = split(ds, cfg.split);
  TrainConfig tcfg = cfg.train;
  tcfg.sgd.epochs = cfg.budget_epochs;
  const auto genotypes = enumerate_all(space);
  std::vector<OracleEntry> entries(genotypes.size());
  parallel_for(genotypes.size(), cfg.jobs, [&](std::size_t i) {
    ModelConfig mcfg = base;
    mcfg.mixing = MixingSpec::fixed(genotypes[i]);
    TrainResult tr = train_fixed(sp.train, mcfg, tcfg, cfg.seed);
    entries[i] = OracleEntry{genotypes[i], serialize(genotypes[i]),
                             class_averaged_accuracy(evaluate(tr.model, sp.test))};
  });
  std::stable_sort(entries.begin(), entries.end(), [](const OracleEntry& x, const OracleEntry& y) {
    if (x.accuracy != y.accuracy) return x.accuracy > y.accuracy;
    return x.canonical < y.canonical;
  });
  return OracleResult{std::move(entries), cfg.budget_epochs, cfg.seed, sp.train.size(), sp.test.size()};
}

// ---------------------------------------------------------------------------
// Delimited export
// ---------------------------------------------------------------------------

inline constexpr std::string_view kCvHeader = "repetition,fold,seed,accuracy";
inline constexpr std::string_view kRankingHeader = "rank,genotype,seed,budget_epochs,accuracy";

/// One row per fit, repetition-major; accuracies in shortest round-trip form.
inline void write_cv_csv(const CVResult& r, std::ostream& os) {
  os << kCvHeader << '\n';
  for (const FitResult& f : r.fits) {
    os << f.repetition << ',' << f.fold << ',' << f.seed << ',' << format_double(f.accuracy) << '\n';
  }
}

inline void write_ranking_csv(const OracleResult& r, std::ostream& os) {
  os << kRankingHeader << '\n';
  for (std::size_t i = 0; i < r.ranking.size(); ++i) {
    os << i + 1 << ',' << r.ranking[i].canonical << ',' << r.seed << ',' << r.budget_epochs << ','
       << format_double(r.ranking[i].accuracy) << '\n';
  }
}

}  // namespace gdasjae
