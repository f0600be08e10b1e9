// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "support.hpp"

using namespace gdasjae;
using testing_support::small_model;
using testing_support::tiny_dataset;

namespace {

SearchConfig quick_search(int epochs, std::uint64_t seed = 1) {
  SearchConfig c;
  c.epochs = epochs;
  c.sgd.epochs = epochs;
  c.sgd.batch_size = 16;
  c.seed = seed;
  return c;
}

struct Fixture {
  Dataset train = tiny_dataset(16, 24, 3, 2, 3, 3.0);
  Dataset val = tiny_dataset(8, 12, 3, 2, 4, 3.0);
  ModelConfig model = small_model(3, 2, MixingSpec::search(SearchSpace::desk()));
};

std::vector<Tensor> snapshot(std::span<Parameter* const> ps) {
  std::vector<Tensor> out;
  for (Parameter* p : ps) out.push_back(p->value);
  return out;
}

// Records which parameter groups moved during each kind of step.
struct StepAudit : SearchObserver {
  std::vector<Tensor> arch, weights;
  int train_steps = 0, val_steps = 0;
  int arch_moved_in_train = 0, weights_moved_in_val = 0;
  int arch_moved_in_val = 0, weights_moved_in_train = 0;

  void capture(JaeModel& m, bool& arch_moved, bool& weights_moved) {
    auto a = snapshot(m.arch_parameters());
    auto wm = m.mixing_parameters();
    auto ws = m.skeleton_parameters();
    wm.insert(wm.end(), ws.begin(), ws.end());
    auto w = snapshot(wm);
    arch_moved = !arch.empty() && a != arch;
    weights_moved = !weights.empty() && w != weights;
    arch = std::move(a);
    weights = std::move(w);
  }
  void after_train_step(JaeModel& m) override {
    bool am = false, wm = false;
    capture(m, am, wm);
    if (train_steps > 0 || val_steps > 0) {
      arch_moved_in_train += am;
      weights_moved_in_train += wm;
    }
    ++train_steps;
  }
  void after_val_step(JaeModel& m) override {
    bool am = false, wm = false;
    capture(m, am, wm);
    arch_moved_in_val += am;
    weights_moved_in_val += wm;
    ++val_steps;
  }
};

}  // namespace

TEST(Temperature, LinearEndpoints) {
  const SearchConfig c;  // 100 epochs, 10 -> 0.1
  EXPECT_EQ(temperature(0, c), 10.0);
  EXPECT_NEAR(temperature(99, c), 0.1, 1e-12);
  // Epoch 50 of 0..99: 10 - 9.9 * 50/99.
  EXPECT_NEAR(temperature(50, c), 10.0 - 9.9 * 50.0 / 99.0, 1e-12);
  // The midpoint of epochs 0..99 lies between 49 and 50.
  EXPECT_NEAR(0.5 * (temperature(49, c) + temperature(50, c)), 5.05, 1e-12);
  EXPECT_THROW(temperature(100, c), ContractError);
  SearchConfig one = quick_search(1);
  EXPECT_EQ(temperature(0, one), 10.0);
}

TEST(SearchConfig, Validation) {
  SearchConfig c;
  c.tau_end = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SearchConfig{};
  c.tau_start = 0.05;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SearchConfig{};
  c.epochs = 50;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(SearchConfig{}.validate());
}

TEST(GdasSearch, CurvesHaveOneEntryPerEpoch) {
  Fixture f;
  const SearchResult r = gdas_search(f.train, f.val, f.model, quick_search(4));
  EXPECT_EQ(r.search_curve.size(), 4u);
  EXPECT_EQ(r.eval_curve.size(), 4u);
  EXPECT_EQ(r.temperatures.size(), 4u);
  EXPECT_EQ(r.learning_rates.size(), 4u);
  for (const auto* curve : {&r.search_curve, &r.eval_curve})
    for (double v : *curve) {
      EXPECT_TRUE(std::isfinite(v));
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  EXPECT_EQ(r.temperatures.front(), 10.0);
  EXPECT_NEAR(r.temperatures.back(), 0.1, 1e-12);
  EXPECT_EQ(r.final_genotype.compute_nodes(), 3u);
  EXPECT_GE(r.wall_seconds, 0.0);
}

TEST(GdasSearch, PublishedEpochCount) {
  Fixture f;
  f.train = tiny_dataset(4, 6, 3, 2, 3);
  f.val = tiny_dataset(2, 3, 3, 2, 4);
  SearchConfig c;  // published defaults: 100 epochs
  c.sgd.batch_size = 64;
  const SearchResult r = gdas_search(f.train, f.val, f.model, c);
  EXPECT_EQ(r.search_curve.size(), 100u);
  EXPECT_EQ(r.eval_curve.size(), 100u);
}

TEST(GdasSearch, SameSeedIsBitwiseIdentical) {
  Fixture f;
  SearchConfig c = quick_search(3, 9);
  c.record_logits = true;
  const SearchResult a = gdas_search(f.train, f.val, f.model, c);
  const SearchResult b = gdas_search(f.train, f.val, f.model, c);
  EXPECT_EQ(a.final_genotype, b.final_genotype);
  EXPECT_EQ(a.search_curve, b.search_curve);
  EXPECT_EQ(a.eval_curve, b.eval_curve);
  EXPECT_EQ(a.final_logits, b.final_logits);
  ASSERT_EQ(a.arch_logits_history.size(), 3u);
  EXPECT_EQ(a.arch_logits_history, b.arch_logits_history);
  std::ostringstream x, y;
  emit_curves(a, x);
  emit_curves(b, y);
  EXPECT_EQ(x.str(), y.str());

  c.seed = 10;
  EXPECT_NE(gdas_search(f.train, f.val, f.model, c).final_logits, a.final_logits);
}

TEST(GdasSearch, FrozenNoiseConstantTemperatureTrajectoriesMatch) {
  Fixture f;
  SearchConfig c = quick_search(3, 2);
  c.tau_start = c.tau_end = 1.0;
  c.noise = NoiseMode::zero;
  c.record_logits = true;
  const SearchResult a = gdas_search(f.train, f.val, f.model, c);
  const SearchResult b = gdas_search(f.train, f.val, f.model, c);
  EXPECT_EQ(a.arch_logits_history, b.arch_logits_history);
  for (double t : a.temperatures) EXPECT_EQ(t, 1.0);
}

TEST(GdasSearch, ArchitectureMovesOnlyInValidationSteps) {
  Fixture f;
  StepAudit audit;
  gdas_search(f.train, f.val, f.model, quick_search(2), &audit);
  EXPECT_EQ(audit.train_steps, 2 * 3);  // 40 rows / 16
  EXPECT_EQ(audit.val_steps, 2 * 2);    // 20 rows / 16
  EXPECT_EQ(audit.arch_moved_in_train, 0);
  EXPECT_EQ(audit.weights_moved_in_val, 0);
  EXPECT_EQ(audit.arch_moved_in_val, audit.val_steps);
  EXPECT_GT(audit.weights_moved_in_train, 0);
}

TEST(GdasSearch, ReturnedGenotypeIsDerivedFromFinalLogits) {
  Fixture f;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const SearchResult r = gdas_search(f.train, f.val, f.model, quick_search(2, seed));
    ArchParams a = ArchParams::zeros(SearchSpace::desk());
    a.logits.value = r.final_logits;
    EXPECT_EQ(r.final_genotype, derive_genotype(a, SearchSpace::desk()));
  }
}

TEST(GdasSearch, FullSpaceSupernetRuns) {
  Fixture f;
  f.model.mixing = MixingSpec::search(SearchSpace::full());
  const SearchResult r = gdas_search(f.train, f.val, f.model, quick_search(1));
  EXPECT_EQ(r.final_logits.rows(), 10u);
  EXPECT_EQ(r.final_genotype.compute_nodes(), 4u);
}

TEST(GdasSearch, Preconditions) {
  Fixture f;
  const Dataset one_class = f.train.subset(std::vector<std::size_t>{0});
  EXPECT_THROW(gdas_search(f.train, one_class, f.model, quick_search(1)), ValidationError);
  EXPECT_THROW(gdas_search(f.train, f.val, small_model(3, 2, MixingSpec::baseline50()), quick_search(1)), ConfigError);
  EXPECT_THROW(gdas_search(f.train, f.val, small_model(2, 2, MixingSpec::search(SearchSpace::desk())), quick_search(1)),
               DimensionError);
}

TEST(EmitCurves, FixedColumnsAndRowCount) {
  SearchResult r;
  r.search_curve = {0.5, 0.75};
  r.eval_curve = {0.25, 1.0};
  r.temperatures = {10.0, 0.1};
  r.learning_rates = {0.0005, 0.001};
  std::ostringstream os;
  emit_curves(r, os);
  EXPECT_EQ(os.str(),
            "epoch,search_accuracy,eval_accuracy,temperature,lr\n"
            "0,0.5,0.25,10,5e-04\n"  // shortest round-trip form
            "1,0.75,1,0.1,0.001\n");
  try {
    emit_curves(r, std::string("/nonexistent-dir/curves.csv"));
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent-dir/curves.csv"), std::string::npos);
  }
}
