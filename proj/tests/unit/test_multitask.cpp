#include <algorithm>
#include <string>
#include <vector>

#include "doctest.h"
#include "mtgp/dataset.hpp"
#include "mtgp/multitask.hpp"
#include "mtgp/rng.hpp"
#include "support/oracles.hpp"

using namespace mtgp;
using namespace mtgp::mt;

namespace {

const char* kCommonText = "Root2(SIFT(Image), HOG(Image))";

data::SynthSpec small_spec() {
  data::SynthSpec s;
  s.height = 24;
  s.width = 24;
  s.train_per_class = 4;
  s.test_per_class = 4;
  s.noise_std = 0.05;
  s.seed = 9;
  return s;
}

std::pair<TaskSpec, TaskSpec> small_pair() {
  const data::SynthSpec s = small_spec();
  return data::generate_synth_pair(s, s);
}

EvoConfig small_cfg(int pop, int gens, std::uint64_t seed) {
  EvoConfig cfg;
  cfg.pop_size = pop;
  cfg.generations = gens;
  cfg.seed = seed;
  return cfg;
}

// Reconstruction of the engine's internal fold-seed schedule: the run seed
// derives a fold stream (4), which derives one sub-seed per task (11 + index).
std::uint64_t fold_seed(std::uint64_t run_seed, int task_index) {
  return derive_seed(derive_seed(run_seed, 4), 11 + task_index);
}

double manual_cv(const gp::TypedTree& tree, const TaskSpec& task, int k,
                 std::uint64_t seed) {
  const FeatureMatrix m = extract_features(tree, task.train_images);
  learn::FeatureTable t(m.rows, m.cols);
  t.x = m.v;
  t.y = task.train_labels;
  t.num_classes = task.num_classes;
  t = learn::apply_normalizer(learn::fit_normalizer(t), t);
  return learn::cv_accuracy(t, k, seed);
}

std::string solution_text(const Solution& s) {
  std::string out = gp::serialize_tree(s.task_tree, primitive_set());
  out += '\n';
  if (!s.common_tree.empty()) out += gp::serialize_tree(s.common_tree, primitive_set());
  return out;
}

bool non_decreasing(const std::vector<TraceRow>& trace, int col) {
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (trace[i].values[col] < trace[i - 1].values[col]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("common fitness combines accuracy and size as documented") {
  CHECK(common_fitness_value(90.0, 80.0, 6) == 79.0);
  CHECK(common_fitness_value(100.0, 100.0, 5) == 95.0);
  CHECK(common_fitness_value(70.0, 70.0, 6) - common_fitness_value(70.0, 70.0, 20) ==
        14.0);

  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double a1 = rng.uniform(0.0, 100.0);
    const double a2 = rng.uniform(0.0, 100.0);
    const int s = 1 + static_cast<int>(rng.index(200));
    CHECK(common_fitness_value(a1, a2, s) == (a1 + a2) / 2.0 - s);
  }
  CHECK(common_fitness_value(80.0, 60.0, 9) > common_fitness_value(80.0, 59.0, 9));
  CHECK(common_fitness_value(80.0, 60.0, 9) > common_fitness_value(80.0, 60.0, 10));
}

TEST_CASE("feature_dim reads widths off the tree structure") {
  const gp::PrimitiveSet& ps = primitive_set();
  CHECK(feature_dim(gp::parse_tree(kCommonText, ps)) == 192);
  const char* deep =
      "Root3(LBP(Image), HOG(Gabor(Sqrt(W-Sub(Gau(Image, 1), 0.79, "
      "SobelY(Image), 0.994)), 2, 3)), SIFT(LoG1(LBP-F(Med(Min(Image))))))";
  CHECK(feature_dim(gp::parse_tree(deep, ps)) == 251);
  CHECK(feature_dim(gp::TypedTree{}) == 0);
}

TEST_CASE("extract_features shapes rows like the image list") {
  const auto [task1, task2] = small_pair();
  const gp::TypedTree tree = gp::parse_tree(kCommonText, primitive_set());
  EvalCounters counters;
  const FeatureMatrix m = extract_features(tree, task1.train_images, &counters);
  CHECK(m.rows == static_cast<int>(task1.train_images.size()));
  CHECK(m.cols == 192);
  CHECK(counters.feature_extractions.load() == 1);
  CHECK(m.v.size() == static_cast<std::size_t>(m.rows) * m.cols);
}

TEST_CASE("feature cache returns the memoised matrix") {
  FeatureCache cache;
  int computes = 0;
  auto make = [&] {
    ++computes;
    FeatureMatrix m;
    m.rows = 1;
    m.cols = 2;
    m.v = {1.0, 2.0};
    return m;
  };
  const auto a = cache.get_or_compute("k1", make);
  const auto b = cache.get_or_compute("k1", make);
  const auto c = cache.get_or_compute("k2", make);
  CHECK(computes == 2);
  CHECK(a.get() == b.get());
  CHECK(a.get() != c.get());
  CHECK(cache.hits() == 1);
  CHECK(cache.misses() == 2);
}

TEST_CASE("fitness_common matches a by-hand evaluation") {
  const auto [task1, task2] = small_pair();
  const gp::TypedTree tree = gp::parse_tree(kCommonText, primitive_set());
  const std::uint64_t run_seed = 77;
  FeatureCache cache;
  const double got = fitness_common(tree, task1, task2, 3, run_seed, cache);

  const double acc1 = manual_cv(tree, task1, 3, fold_seed(run_seed, 0));
  const double acc2 = manual_cv(tree, task2, 3, fold_seed(run_seed, 1));
  CHECK(got == common_fitness_value(acc1, acc2, tree.size()));
  CHECK(got > kWorstFitness);
}

TEST_CASE("fitness_common maps evaluation failure to the worst score") {
  // sigma 10 wants a 61-tap kernel, more than twice the 16-pixel extent
  data::SynthSpec s = small_spec();
  s.height = 16;
  s.width = 16;
  const auto [task1, task2] = data::generate_synth_pair(s, s);
  const gp::TypedTree bad =
      gp::parse_tree("Root2(SIFT(Gau(Image, 10)), HOG(Image))", primitive_set());
  FeatureCache cache;
  CHECK(fitness_common(bad, task1, task2, 3, 5, cache) == kWorstFitness);
}

TEST_CASE("fitness_task with no common features equals plain cross-validation") {
  const auto [task1, task2] = small_pair();
  const gp::TypedTree tree = gp::parse_tree(kCommonText, primitive_set());
  const std::uint64_t fold = fold_seed(123, 0);
  FeatureCache cache;
  const FeatureMatrix empty;
  const double got = fitness_task(tree, empty, task1, 3, fold, cache, 0);
  CHECK(got == manual_cv(tree, task1, 3, fold));
  CHECK(got >= 0.0);
  CHECK(got <= 100.0);
}

TEST_CASE("fitness_task concatenates the supplied common features") {
  const auto [task1, task2] = small_pair();
  const gp::PrimitiveSet& ps = primitive_set();
  const gp::TypedTree task_tree = gp::parse_tree("Root2(HOG(Image), LBP(Image))", ps);
  const gp::TypedTree common_tree = gp::parse_tree(kCommonText, ps);
  const FeatureMatrix common = extract_features(common_tree, task1.train_images);
  const std::uint64_t fold = fold_seed(123, 0);

  FeatureCache cache;
  const double got = fitness_task(task_tree, common, task1, 3, fold, cache, 0);

  // by hand: stack task features in front of the common block
  const FeatureMatrix own = extract_features(task_tree, task1.train_images);
  learn::FeatureTable t(own.rows, own.cols + common.cols);
  for (int i = 0; i < own.rows; ++i) {
    std::copy(own.row(i), own.row(i) + own.cols, t.row(i));
    std::copy(common.row(i), common.row(i) + common.cols, t.row(i) + own.cols);
  }
  t.y = task1.train_labels;
  t.num_classes = task1.num_classes;
  t = learn::apply_normalizer(learn::fit_normalizer(t), t);
  CHECK(got == learn::cv_accuracy(t, 3, fold));
}

TEST_CASE("EvoConfig validation rejects broken settings") {
  EvoConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  EvoConfig bad = cfg;
  bad.pop_size = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.p_crossover = 0.5;  // probabilities no longer sum to 1
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.k_folds = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.max_depth = 9;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.tournament_k = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("ksmtgp run satisfies its structural contracts") {
  const auto [task1, task2] = small_pair();
  const EvoConfig cfg = small_cfg(12, 3, 31);
  const MethodResult res = ksmtgp_run(task1, task2, cfg);

  REQUIRE(res.solutions.size() == 2);
  const gp::PrimitiveSet& ps = primitive_set();
  for (const Solution& sol : res.solutions) {
    REQUIRE(!sol.task_tree.empty());
    CHECK(gp::type_check(sol.task_tree, ps));
    CHECK(gp::tree_depth(sol.task_tree, ps) <= gp::kMaxDepth);
    if (!sol.common_tree.empty()) {
      CHECK(gp::type_check(sol.common_tree, ps));
      CHECK(gp::tree_depth(sol.common_tree, ps) <= gp::kMaxDepth);
    }
    CHECK(sol.fitness >= 0.0);
    CHECK(sol.fitness <= 100.0);
    CHECK(sol.feature_count ==
          feature_dim(sol.task_tree) + feature_dim(sol.common_tree));
    CHECK(sol.found_generation >= 0);
    CHECK(sol.found_generation <= cfg.generations);
  }

  const RunRecord& rec = res.record;
  CHECK(rec.method == "ksmtgp");
  CHECK(rec.seed == cfg.seed);
  REQUIRE(rec.trace_columns.size() == 6);
  CHECK(rec.trace_columns[0] == "common_best_fitness");
  CHECK(rec.trace_columns[2] == "task1_best_fitness");
  CHECK(rec.trace_columns[5] == "task2_best_overall");
  REQUIRE(static_cast<int>(rec.trace.size()) == cfg.generations + 1);
  for (int g = 0; g <= cfg.generations; ++g) {
    CHECK(rec.trace[g].generation == g);
    REQUIRE(rec.trace[g].values.size() == 6);
  }
  // overall-best columns never regress
  CHECK(non_decreasing(rec.trace, 3));
  CHECK(non_decreasing(rec.trace, 5));

  REQUIRE(rec.fitness_evals_per_gen.size() == static_cast<std::size_t>(cfg.generations + 1));
  for (std::uint64_t e : rec.fitness_evals_per_gen) {
    CHECK(e == static_cast<std::uint64_t>(3 * cfg.pop_size));
  }
  CHECK(rec.fitness_evals == static_cast<std::uint64_t>(3 * cfg.pop_size) *
                                 (cfg.generations + 1));
  CHECK(rec.common_cache_hits == static_cast<std::uint64_t>(2 * (cfg.generations + 1)));
  CHECK(rec.feature_extractions > 0);
}

TEST_CASE("ksmtgp is deterministic for a fixed seed") {
  const auto [task1, task2] = small_pair();
  const EvoConfig cfg = small_cfg(10, 2, 17);
  const MethodResult a = ksmtgp_run(task1, task2, cfg);
  const MethodResult b = ksmtgp_run(task1, task2, cfg);
  REQUIRE(a.solutions.size() == b.solutions.size());
  for (std::size_t i = 0; i < a.solutions.size(); ++i) {
    CHECK(solution_text(a.solutions[i]) == solution_text(b.solutions[i]));
    CHECK(a.solutions[i].fitness == b.solutions[i].fitness);
  }
  REQUIRE(a.record.trace.size() == b.record.trace.size());
  for (std::size_t g = 0; g < a.record.trace.size(); ++g) {
    CHECK(a.record.trace[g].values == b.record.trace[g].values);
  }

  EvoConfig threaded = cfg;
  threaded.threads = 4;
  const MethodResult c = ksmtgp_run(task1, task2, threaded);
  for (std::size_t i = 0; i < a.solutions.size(); ++i) {
    CHECK(solution_text(a.solutions[i]) == solution_text(c.solutions[i]));
    CHECK(a.solutions[i].fitness == c.solutions[i].fitness);
  }
}

TEST_CASE("ksmtgp solves the separable synthetic pair quickly") {
  const auto [task1, task2] = small_pair();
  const MethodResult res = ksmtgp_run(task1, task2, small_cfg(16, 5, 2));
  CHECK(res.solutions[0].fitness >= 90.0);
  CHECK(res.solutions[1].fitness >= 90.0);
}

TEST_CASE("fgp run contracts and progress") {
  const auto [task1, task2] = small_pair();
  const EvoConfig cfg = small_cfg(20, 4, 13);
  const MethodResult res = fgp_run(task1, cfg);

  REQUIRE(res.solutions.size() == 1);
  const Solution& sol = res.solutions[0];
  CHECK(sol.common_tree.empty());
  CHECK(gp::type_check(sol.task_tree, primitive_set()));
  CHECK(sol.fitness >= 0.0);
  CHECK(sol.fitness <= 100.0);

  const RunRecord& rec = res.record;
  CHECK(rec.method == "fgp");
  REQUIRE(rec.trace_columns.size() == 2);
  CHECK(rec.trace_columns[0] == "best_fitness");
  CHECK(rec.trace_columns[1] == "best_overall");
  CHECK(non_decreasing(rec.trace, 1));
  for (std::uint64_t e : rec.fitness_evals_per_gen) {
    CHECK(e == static_cast<std::uint64_t>(cfg.pop_size));
  }
  // the final overall best matches the reported solution fitness
  CHECK(rec.trace.back().values[1] == sol.fitness);
}

TEST_CASE("mtfgp evolves a two-tree individual per candidate") {
  const auto [task1, task2] = small_pair();
  const EvoConfig cfg = small_cfg(14, 3, 19);
  const MethodResult res = mtfgp_run(task1, cfg);

  REQUIRE(res.solutions.size() == 1);
  const Solution& sol = res.solutions[0];
  REQUIRE(!sol.task_tree.empty());
  REQUIRE(!sol.common_tree.empty());  // second tree rides in the common slot
  const gp::PrimitiveSet& ps = primitive_set();
  CHECK(gp::type_check(sol.task_tree, ps));
  CHECK(gp::type_check(sol.common_tree, ps));
  CHECK(sol.feature_count ==
        feature_dim(sol.task_tree) + feature_dim(sol.common_tree));
  CHECK(res.record.method == "mtfgp");
  CHECK(non_decreasing(res.record.trace, 1));
  const MethodResult again = mtfgp_run(task1, cfg);
  CHECK(solution_text(res.solutions[0]) == solution_text(again.solutions[0]));
}

TEST_CASE("mffgp keeps both skills alive and counts evaluations") {
  const auto [task1, task2] = small_pair();
  const EvoConfig cfg = small_cfg(10, 3, 23);
  const MethodResult res = mffgp_run(task1, task2, cfg);

  REQUIRE(res.solutions.size() == 2);
  for (const Solution& sol : res.solutions) {
    REQUIRE(!sol.task_tree.empty());
    CHECK(sol.common_tree.empty());
    CHECK(gp::type_check(sol.task_tree, primitive_set()));
    CHECK(sol.fitness >= 0.0);
    CHECK(sol.fitness <= 100.0);
  }

  const RunRecord& rec = res.record;
  CHECK(rec.method == "mffgp");
  REQUIRE(rec.trace_columns.size() == 4);
  CHECK(rec.trace_columns[1] == "task1_best_overall");
  CHECK(rec.trace_columns[3] == "task2_best_overall");
  CHECK(non_decreasing(rec.trace, 1));
  CHECK(non_decreasing(rec.trace, 3));

  // generation 0 scores everyone on both tasks; later generations only on the
  // individual's skill task
  REQUIRE(!rec.fitness_evals_per_gen.empty());
  CHECK(rec.fitness_evals_per_gen[0] == static_cast<std::uint64_t>(4 * cfg.pop_size));
  for (std::size_t g = 1; g < rec.fitness_evals_per_gen.size(); ++g) {
    CHECK(rec.fitness_evals_per_gen[g] == static_cast<std::uint64_t>(2 * cfg.pop_size));
  }

  const MethodResult again = mffgp_run(task1, task2, cfg);
  CHECK(solution_text(res.solutions[0]) == solution_text(again.solutions[0]));
  CHECK(solution_text(res.solutions[1]) == solution_text(again.solutions[1]));
}

TEST_CASE("test_evaluate trains on train and scores on test") {
  const auto [task1, task2] = small_pair();
  Solution sol;
  sol.task_tree = gp::parse_tree(kCommonText, primitive_set());
  const double acc = test_evaluate(sol, task1, 5);
  CHECK(acc >= 0.0);
  CHECK(acc <= 100.0);
  CHECK(test_evaluate(sol, task1, 5) == acc);
}

TEST_CASE("constant features on a balanced binary task score exactly 50") {
  TaskSpec task;
  task.name = "flat";
  task.num_classes = 2;
  for (int i = 0; i < 6; ++i) {
    task.train_images.push_back(Image(12, 12, 0.5));
    task.train_labels.push_back(i % 2);
  }
  for (int i = 0; i < 4; ++i) {
    task.test_images.push_back(Image(12, 12, 0.5));
    task.test_labels.push_back(i % 2);
  }
  task.validate(3);

  Solution sol;
  sol.task_tree = gp::parse_tree(kCommonText, primitive_set());
  // identical inputs give identical features; ties resolve to class 0, which
  // holds exactly half the balanced test split
  CHECK(test_evaluate(sol, task, 1) == 50.0);
}

TEST_CASE("transfer_evaluate selects feature sources by mode") {
  const auto [task1, task2] = small_pair();
  const gp::PrimitiveSet& ps = primitive_set();
  Solution sol;
  sol.task_tree = gp::parse_tree("Root2(HOG(Image), LBP(Image))", ps);
  sol.common_tree = gp::parse_tree(kCommonText, ps);

  data::SynthSpec big = small_spec();
  big.height = 48;
  big.width = 48;
  big.seed = 91;
  const auto [target, unused] = data::generate_synth_pair(big, big);

  for (TransferMode mode :
       {TransferMode::Both, TransferMode::CommonOnly, TransferMode::TaskOnly}) {
    const double acc = transfer_evaluate(sol, target, mode, 3);
    CHECK(acc >= 0.0);
    CHECK(acc <= 100.0);
  }
  CHECK(std::string(transfer_mode_name(TransferMode::CommonOnly)) == "common_only");
}
