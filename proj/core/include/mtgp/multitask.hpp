#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "mtgp/gp.hpp"
#include "mtgp/learners.hpp"
#include "mtgp/task_spec.hpp"

namespace mtgp::mt {

/// Feature vectors for a whole image list, one row per image.
struct FeatureMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  const double* row(int i) const { return v.data() + static_cast<std::size_t>(i) * cols; }
};

/// Per-generation memo of (tree, image-set) -> feature matrix, so a tree
/// evaluated for several purposes in one generation is only ever transformed
/// once. Thread-safe; cleared between generations.
class FeatureCache {
 public:
  std::shared_ptr<const FeatureMatrix> get_or_compute(
      const std::string& key, const std::function<FeatureMatrix()>& compute);

  std::uint64_t hits() const { return hits_.load(); }
  std::uint64_t misses() const { return misses_.load(); }

 private:
  std::mutex mu_;
  std::unordered_map<std::string, std::shared_ptr<const FeatureMatrix>> map_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

/// Instrumentation shared by the evolutionary loops.
struct EvalCounters {
  std::atomic<std::uint64_t> fitness_evals{0};
  std::atomic<std::uint64_t> feature_extractions{0};
};

inline constexpr double kWorstFitness = -std::numeric_limits<double>::infinity();

/// Evolution settings. Defaults follow the reference configuration; the
/// depth bounds are fixed by the tree engine.
struct EvoConfig {
  int pop_size = 100;
  int generations = 50;
  double p_crossover = 0.8;
  double p_mutation = 0.19;
  double p_elitism = 0.01;
  int tournament_k = 5;
  int min_depth = 2;
  int max_depth = 8;
  int k_folds = 3;
  std::uint64_t seed = 0;
  int threads = 1;  // worker threads for fitness evaluation; 0 = hardware

  void validate() const;
};

/// Final product of a run for one task: the task tree, the common tree (empty
/// for single-tree methods) and its training fitness.
struct Solution {
  gp::TypedTree task_tree;
  gp::TypedTree common_tree;
  double fitness = kWorstFitness;
  int feature_count = 0;
  int found_generation = -1;

  int combined_size() const { return task_tree.size() + common_tree.size(); }
};

struct TraceRow {
  int generation = 0;
  std::vector<double> values;
};

/// Per-run bookkeeping: per-generation trace plus instrumentation totals.
struct RunRecord {
  std::string method;
  std::uint64_t seed = 0;
  std::vector<std::string> trace_columns;  // names for TraceRow::values
  std::vector<TraceRow> trace;
  double elapsed_seconds = 0.0;
  std::uint64_t fitness_evals = 0;
  std::uint64_t feature_extractions = 0;
  std::uint64_t common_cache_hits = 0;
  std::vector<std::uint64_t> fitness_evals_per_gen;
};

struct MethodResult {
  std::vector<Solution> solutions;  // one per task
  RunRecord record;
};

/// The shared fixed primitive set (built once).
const gp::PrimitiveSet& primitive_set();

/// Feature dimension of a tree from structure alone (no image needed).
int feature_dim(const gp::TypedTree& tree);

/// Extract features for every image; rows follow image order.
/// Throws EvalError if any image fails.
FeatureMatrix extract_features(const gp::TypedTree& tree,
                               const std::vector<Image>& images,
                               EvalCounters* counters = nullptr);

/// Combined-accuracy-minus-size score: (acc1 + acc2)/2 - size.
double common_fitness_value(double acc1, double acc2, int size);

/// Fitness of a candidate common tree on both tasks (cross-validated
/// accuracies averaged, minus node count). Evaluation failure yields
/// kWorstFitness instead of throwing.
double fitness_common(const gp::TypedTree& tree, const TaskSpec& task1,
                      const TaskSpec& task2, int k_folds, std::uint64_t seed,
                      FeatureCache& cache, EvalCounters* counters = nullptr);

/// Fitness of a task tree: cross-validated accuracy of its features
/// concatenated with the (possibly zero-width) cached common features.
double fitness_task(const gp::TypedTree& task_tree, const FeatureMatrix& common,
                    const TaskSpec& task, int k_folds, std::uint64_t seed,
                    FeatureCache& cache, int task_tag,
                    EvalCounters* counters = nullptr);

/// Knowledge-sharing multitask run over two tasks: one common population plus
/// one task-specific population per task. Returns one Solution per task.
MethodResult ksmtgp_run(const TaskSpec& task1, const TaskSpec& task2,
                        const EvoConfig& cfg);

/// Single-tree, single-task baseline.
MethodResult fgp_run(const TaskSpec& task, const EvoConfig& cfg);

/// Two-tree, single-task baseline (features of both trees concatenated).
MethodResult mtfgp_run(const TaskSpec& task, const EvoConfig& cfg);

/// Multifactorial baseline: one population of 2*pop_size individuals with
/// skill factors over the two tasks, assortative mating (rmp = 0.3).
MethodResult mffgp_run(const TaskSpec& task1, const TaskSpec& task2,
                       const EvoConfig& cfg);

/// Train on the task's train split (normalizer fitted on train only) and
/// report accuracy on the test split.
double test_evaluate(const Solution& sol, const TaskSpec& task, std::uint64_t seed);

enum class TransferMode { Both, CommonOnly, TaskOnly };
const char* transfer_mode_name(TransferMode mode);

/// test_evaluate with trees learned elsewhere; mode selects which trees
/// supply features. Works across image sizes.
double transfer_evaluate(const Solution& sol, const TaskSpec& target,
                         TransferMode mode, std::uint64_t seed);

}  // namespace mtgp::mt
