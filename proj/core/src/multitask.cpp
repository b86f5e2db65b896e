#include "mtgp/multitask.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace mtgp::mt {

namespace {

using gp::Individual;
using gp::PrimitiveSet;
using gp::TypedTree;

constexpr double kRmp = 0.3;  // random mating probability across skill factors

// Seed-stream layout within one run (all derived from cfg.seed):
//   1..3  population random streams
//   4     fold/classifier base stream
constexpr std::uint64_t kStreamCommonPop = 1;
constexpr std::uint64_t kStreamTask1Pop = 2;
constexpr std::uint64_t kStreamTask2Pop = 3;
constexpr std::uint64_t kStreamFolds = 4;

std::uint64_t fold_seed_for_task(std::uint64_t run_seed, int task_index) {
  return derive_seed(derive_seed(run_seed, kStreamFolds), 11 + task_index);
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 0) {
    threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads <= 0) threads = 1;
  }
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

std::string cache_key(const TypedTree& tree, int tag) {
  return std::to_string(tag) + '|' + gp::serialize_tree(tree, primitive_set());
}

learn::FeatureTable to_table(const FeatureMatrix& m, const std::vector<int>& labels,
                             int num_classes) {
  learn::FeatureTable t(m.rows, m.cols);
  t.x = m.v;
  t.y = labels;
  t.num_classes = num_classes;
  return t;
}

// Normalize (min-max over the full training table) then cross-validate.
double normalized_cv(const FeatureMatrix& m, const TaskSpec& task, int k_folds,
                     std::uint64_t fold_seed) {
  learn::FeatureTable table = to_table(m, task.train_labels, task.num_classes);
  const learn::Normalizer norm = learn::fit_normalizer(table);
  table = learn::apply_normalizer(norm, table);
  return learn::cv_accuracy(table, k_folds, fold_seed);
}

FeatureMatrix hstack(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (a.cols == 0) return b;
  if (b.cols == 0) return a;
  if (a.rows != b.rows) throw EvalError("hstack: row count mismatch");
  FeatureMatrix out;
  out.rows = a.rows;
  out.cols = a.cols + b.cols;
  out.v.resize(static_cast<std::size_t>(out.rows) * out.cols);
  for (int i = 0; i < out.rows; ++i) {
    double* dst = out.v.data() + static_cast<std::size_t>(i) * out.cols;
    std::copy(a.row(i), a.row(i) + a.cols, dst);
    std::copy(b.row(i), b.row(i) + b.cols, dst + a.cols);
  }
  return out;
}

}  // namespace

void TaskSpec::validate(int k_folds) const {
  if (name.empty()) throw std::invalid_argument("TaskSpec: empty name");
  if (train_images.empty() || test_images.empty()) {
    throw std::invalid_argument("TaskSpec '" + name + "': both splits must be nonempty");
  }
  if (train_images.size() != train_labels.size() ||
      test_images.size() != test_labels.size()) {
    throw std::invalid_argument("TaskSpec '" + name + "': image/label size mismatch");
  }
  if (num_classes < 2) {
    throw std::invalid_argument("TaskSpec '" + name + "': needs at least 2 classes");
  }
  std::vector<int> train_count(num_classes, 0), test_count(num_classes, 0);
  for (int v : train_labels) {
    if (v < 0 || v >= num_classes) {
      throw std::invalid_argument("TaskSpec '" + name + "': train label out of range");
    }
    ++train_count[v];
  }
  for (int v : test_labels) {
    if (v < 0 || v >= num_classes) {
      throw std::invalid_argument("TaskSpec '" + name + "': test label out of range");
    }
    ++test_count[v];
  }
  for (int c = 0; c < num_classes; ++c) {
    if (train_count[c] < k_folds) {
      throw std::invalid_argument("TaskSpec '" + name + "': class " + std::to_string(c) +
                                  " has " + std::to_string(train_count[c]) +
                                  " training instances, fewer than k=" +
                                  std::to_string(k_folds));
    }
    if (test_count[c] == 0) {
      throw std::invalid_argument("TaskSpec '" + name + "': class " + std::to_string(c) +
                                  " missing from the test split");
    }
  }
}

std::shared_ptr<const FeatureMatrix> FeatureCache::get_or_compute(
    const std::string& key, const std::function<FeatureMatrix()>& compute) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = map_.find(key);
    if (it != map_.end()) {
      hits_.fetch_add(1);
      return it->second;
    }
  }
  // compute outside the lock; concurrent duplicates are pure so either copy
  // is equally valid
  auto value = std::make_shared<FeatureMatrix>(compute());
  misses_.fetch_add(1);
  std::lock_guard<std::mutex> lock(mu_);
  auto [it, inserted] = map_.emplace(key, std::move(value));
  return it->second;
}

const PrimitiveSet& primitive_set() {
  static const PrimitiveSet ps = PrimitiveSet::standard();
  return ps;
}

int feature_dim(const TypedTree& tree) {
  int dim = 0;
  for (const gp::Node& n : tree.nodes) {
    switch (primitive_set().at(n.prim).op) {
      case gp::Op::Sift: dim += 128; break;
      case gp::Op::Hog: dim += 64; break;
      case gp::Op::Lbp: dim += 59; break;
      default: break;
    }
  }
  return dim;
}

FeatureMatrix extract_features(const TypedTree& tree, const std::vector<Image>& images,
                               EvalCounters* counters) {
  if (counters) counters->feature_extractions.fetch_add(1);
  FeatureMatrix m;
  m.rows = static_cast<int>(images.size());
  for (int i = 0; i < m.rows; ++i) {
    const FeatVec f = gp::eval_tree(tree, primitive_set(), images[i]);
    if (i == 0) {
      m.cols = static_cast<int>(f.size());
      m.v.resize(static_cast<std::size_t>(m.rows) * m.cols);
    } else if (static_cast<int>(f.size()) != m.cols) {
      throw EvalError("extract_features: inconsistent feature dimension");
    }
    std::copy(f.begin(), f.end(), m.v.begin() + static_cast<std::size_t>(i) * m.cols);
  }
  return m;
}

double common_fitness_value(double acc1, double acc2, int size) {
  return (acc1 + acc2) / 2.0 - static_cast<double>(size);
}

double fitness_common(const TypedTree& tree, const TaskSpec& task1,
                      const TaskSpec& task2, int k_folds, std::uint64_t seed,
                      FeatureCache& cache, EvalCounters* counters) {
  if (counters) counters->fitness_evals.fetch_add(1);
  try {
    const auto m1 = cache.get_or_compute(cache_key(tree, 0), [&] {
      return extract_features(tree, task1.train_images, counters);
    });
    const auto m2 = cache.get_or_compute(cache_key(tree, 1), [&] {
      return extract_features(tree, task2.train_images, counters);
    });
    const double acc1 = normalized_cv(*m1, task1, k_folds, fold_seed_for_task(seed, 0));
    const double acc2 = normalized_cv(*m2, task2, k_folds, fold_seed_for_task(seed, 1));
    return common_fitness_value(acc1, acc2, tree.size());
  } catch (const EvalError&) {
    return kWorstFitness;
  }
}

double fitness_task(const TypedTree& task_tree, const FeatureMatrix& common,
                    const TaskSpec& task, int k_folds, std::uint64_t seed,
                    FeatureCache& cache, int task_tag, EvalCounters* counters) {
  if (counters) counters->fitness_evals.fetch_add(1);
  try {
    const auto own = cache.get_or_compute(cache_key(task_tree, task_tag), [&] {
      return extract_features(task_tree, task.train_images, counters);
    });
    const FeatureMatrix combined = hstack(*own, common);
    return normalized_cv(combined, task, k_folds, seed);
  } catch (const EvalError&) {
    return kWorstFitness;
  }
}

void EvoConfig::validate() const {
  if (pop_size < 1) throw std::invalid_argument("EvoConfig: pop_size must be >= 1");
  if (generations < 0) throw std::invalid_argument("EvoConfig: generations must be >= 0");
  if (p_crossover < 0 || p_mutation < 0 || p_elitism < 0) {
    throw std::invalid_argument("EvoConfig: negative operator probability");
  }
  if (std::fabs(p_crossover + p_mutation + p_elitism - 1.0) > 1e-9) {
    throw std::invalid_argument("EvoConfig: operator probabilities must sum to 1");
  }
  if (tournament_k < 1) throw std::invalid_argument("EvoConfig: tournament_k must be >= 1");
  if (min_depth != gp::kMinInitDepth || max_depth != gp::kMaxDepth) {
    throw std::invalid_argument("EvoConfig: depth bounds are fixed at [2, 8]");
  }
  if (k_folds < 2) throw std::invalid_argument("EvoConfig: k_folds must be >= 2");
  if (threads < 0) throw std::invalid_argument("EvoConfig: threads must be >= 0");
}

namespace {

// Indices ordered best-first: fitness desc, then total size asc, then index.
std::vector<int> rank_indices(const std::vector<Individual>& pop) {
  std::vector<int> order(pop.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&pop](int a, int b) {
    const double fa = pop[a].fitness.value_or(kWorstFitness);
    const double fb = pop[b].fitness.value_or(kWorstFitness);
    if (fa != fb) return fa > fb;
    return pop[a].total_size() < pop[b].total_size();
  });
  return order;
}

int best_index(const std::vector<Individual>& pop) { return rank_indices(pop)[0]; }

int elite_count(const EvoConfig& cfg) {
  return std::max(1, static_cast<int>(std::lround(cfg.p_elitism * cfg.pop_size)));
}

// One generational turnover for single-tree populations using the per-slot
// operator roll. When `elitism` is set, the top 1% (at least one) survive
// unchanged; the common population of the multitask method runs without it.
std::vector<Individual> breed_single(const std::vector<Individual>& pop,
                                     const EvoConfig& cfg, Rng& rng, bool elitism) {
  const PrimitiveSet& ps = primitive_set();
  const std::size_t n = pop.size();
  std::vector<Individual> next;
  next.reserve(n);
  if (elitism) {
    const auto order = rank_indices(pop);
    const int n_el = std::min(static_cast<int>(n), elite_count(cfg));
    for (int e = 0; e < n_el; ++e) {
      Individual copy = pop[order[e]];
      copy.fitness.reset();
      next.push_back(std::move(copy));
    }
  }
  while (next.size() < n) {
    const double r = rng.uniform();
    Individual child;
    if (r < cfg.p_crossover) {
      const int i = gp::tournament_select(pop, rng, cfg.tournament_k);
      const int j = gp::tournament_select(pop, rng, cfg.tournament_k);
      auto offspring = gp::subtree_crossover(pop[i].trees[0], pop[j].trees[0], ps, rng);
      child.trees.push_back(std::move(offspring.first));
    } else if (r < cfg.p_crossover + cfg.p_mutation) {
      const int i = gp::tournament_select(pop, rng, cfg.tournament_k);
      child.trees.push_back(gp::subtree_mutation(pop[i].trees[0], ps, rng));
    } else {
      const int i = gp::tournament_select(pop, rng, cfg.tournament_k);
      child = pop[i];
      child.fitness.reset();
    }
    next.push_back(std::move(child));
  }
  return next;
}

// Two-tree variant: crossover/mutation act on one uniformly chosen tree slot.
std::vector<Individual> breed_two_tree(const std::vector<Individual>& pop,
                                       const EvoConfig& cfg, Rng& rng) {
  const PrimitiveSet& ps = primitive_set();
  const std::size_t n = pop.size();
  std::vector<Individual> next;
  next.reserve(n);
  const auto order = rank_indices(pop);
  const int n_el = std::min(static_cast<int>(n), elite_count(cfg));
  for (int e = 0; e < n_el; ++e) {
    Individual copy = pop[order[e]];
    copy.fitness.reset();
    next.push_back(std::move(copy));
  }
  while (next.size() < n) {
    const double r = rng.uniform();
    if (r < cfg.p_crossover) {
      const int i = gp::tournament_select(pop, rng, cfg.tournament_k);
      const int j = gp::tournament_select(pop, rng, cfg.tournament_k);
      const std::size_t slot = rng.index(2);
      auto offspring =
          gp::subtree_crossover(pop[i].trees[slot], pop[j].trees[slot], ps, rng);
      Individual child = pop[i];
      child.fitness.reset();
      child.trees[slot] = std::move(offspring.first);
      next.push_back(std::move(child));
    } else if (r < cfg.p_crossover + cfg.p_mutation) {
      const int i = gp::tournament_select(pop, rng, cfg.tournament_k);
      const std::size_t slot = rng.index(2);
      Individual child = pop[i];
      child.fitness.reset();
      child.trees[slot] = gp::subtree_mutation(pop[i].trees[slot], ps, rng);
      next.push_back(std::move(child));
    } else {
      const int i = gp::tournament_select(pop, rng, cfg.tournament_k);
      Individual child = pop[i];
      child.fitness.reset();
      next.push_back(std::move(child));
    }
  }
  return next;
}

// Candidate replaces the incumbent only when strictly better, or equally fit
// and strictly smaller; equal candidates from later generations never win.
void offer_best(Solution& best, const Solution& candidate) {
  if (candidate.fitness > best.fitness ||
      (candidate.fitness == best.fitness &&
       candidate.combined_size() < best.combined_size())) {
    best = candidate;
  }
}

Solution make_solution(const TypedTree& task_tree, const TypedTree& common_tree,
                       double fitness, int generation) {
  Solution s;
  s.task_tree = task_tree;
  s.common_tree = common_tree;
  s.fitness = fitness;
  s.feature_count = feature_dim(task_tree) + feature_dim(common_tree);
  s.found_generation = generation;
  return s;
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

MethodResult ksmtgp_run(const TaskSpec& task1, const TaskSpec& task2,
                        const EvoConfig& cfg) {
  cfg.validate();
  task1.validate(cfg.k_folds);
  task2.validate(cfg.k_folds);
  const auto t0 = std::chrono::steady_clock::now();
  const PrimitiveSet& ps = primitive_set();

  Rng master(cfg.seed);
  Rng rng_common = master.derive(kStreamCommonPop);
  Rng rng_task1 = master.derive(kStreamTask1Pop);
  Rng rng_task2 = master.derive(kStreamTask2Pop);
  const std::uint64_t fold1 = fold_seed_for_task(cfg.seed, 0);
  const std::uint64_t fold2 = fold_seed_for_task(cfg.seed, 1);

  std::vector<Individual> common_pop = gp::init_population(ps, rng_common, cfg.pop_size);
  std::vector<Individual> pop1 = gp::init_population(ps, rng_task1, cfg.pop_size);
  std::vector<Individual> pop2 = gp::init_population(ps, rng_task2, cfg.pop_size);

  Solution best1, best2;
  EvalCounters counters;
  RunRecord rec;
  rec.method = "ksmtgp";
  rec.seed = cfg.seed;
  rec.trace_columns = {"common_best_fitness", "common_best_size",
                       "task1_best_fitness", "task1_best_overall",
                       "task2_best_fitness", "task2_best_overall"};

  for (int g = 0;; ++g) {
    FeatureCache cache;
    const std::uint64_t evals_before = counters.fitness_evals.load();

    parallel_for(static_cast<int>(common_pop.size()), cfg.threads, [&](int i) {
      common_pop[i].fitness = fitness_common(common_pop[i].trees[0], task1, task2,
                                             cfg.k_folds, cfg.seed, cache, &counters);
    });

    const int ct = best_index(common_pop);
    const TypedTree& ct_tree = common_pop[ct].trees[0];
    const bool ct_usable = *common_pop[ct].fitness > kWorstFitness;

    // The winning common tree's per-task matrices were already produced
    // during its own evaluation; fetch them from the generation cache.
    FeatureMatrix empty;
    std::shared_ptr<const FeatureMatrix> cm1, cm2;
    const std::uint64_t hits_before = cache.hits();
    if (ct_usable) {
      cm1 = cache.get_or_compute(cache_key(ct_tree, 0), [&] {
        return extract_features(ct_tree, task1.train_images, &counters);
      });
      cm2 = cache.get_or_compute(cache_key(ct_tree, 1), [&] {
        return extract_features(ct_tree, task2.train_images, &counters);
      });
    }
    rec.common_cache_hits += cache.hits() - hits_before;
    const FeatureMatrix& common1 = cm1 ? *cm1 : empty;
    const FeatureMatrix& common2 = cm2 ? *cm2 : empty;

    parallel_for(static_cast<int>(pop1.size()), cfg.threads, [&](int i) {
      pop1[i].fitness = fitness_task(pop1[i].trees[0], common1, task1, cfg.k_folds,
                                     fold1, cache, 0, &counters);
    });
    parallel_for(static_cast<int>(pop2.size()), cfg.threads, [&](int i) {
      pop2[i].fitness = fitness_task(pop2[i].trees[0], common2, task2, cfg.k_folds,
                                     fold2, cache, 1, &counters);
    });

    rec.fitness_evals_per_gen.push_back(counters.fitness_evals.load() - evals_before);

    const int b1 = best_index(pop1);
    const int b2 = best_index(pop2);
    const TypedTree common_for_solution = ct_usable ? ct_tree : TypedTree{};
    offer_best(best1, make_solution(pop1[b1].trees[0], common_for_solution,
                                    *pop1[b1].fitness, g));
    offer_best(best2, make_solution(pop2[b2].trees[0], common_for_solution,
                                    *pop2[b2].fitness, g));

    rec.trace.push_back(
        {g,
         {*common_pop[ct].fitness, static_cast<double>(ct_tree.size()),
          *pop1[b1].fitness, best1.fitness, *pop2[b2].fitness, best2.fitness}});

    if (g == cfg.generations) break;
    common_pop = breed_single(common_pop, cfg, rng_common, /*elitism=*/false);
    pop1 = breed_single(pop1, cfg, rng_task1, /*elitism=*/true);
    pop2 = breed_single(pop2, cfg, rng_task2, /*elitism=*/true);
  }

  rec.fitness_evals = counters.fitness_evals.load();
  rec.feature_extractions = counters.feature_extractions.load();
  rec.elapsed_seconds = elapsed_since(t0);
  return {{best1, best2}, std::move(rec)};
}

namespace {

// Shared generational loop for the single-task baselines (one or two trees).
MethodResult single_task_run(const TaskSpec& task, const EvoConfig& cfg,
                             bool two_trees, const char* method_name) {
  cfg.validate();
  task.validate(cfg.k_folds);
  const auto t0 = std::chrono::steady_clock::now();
  const PrimitiveSet& ps = primitive_set();
  Rng rng = Rng(cfg.seed).derive(kStreamTask1Pop);
  const std::uint64_t fold_seed = fold_seed_for_task(cfg.seed, 0);

  std::vector<Individual> pop;
  if (two_trees) {
    pop.reserve(cfg.pop_size);
    for (int i = 0; i < cfg.pop_size; ++i) {
      const int depth = gp::kMinInitDepth + (i % (gp::kMaxDepth - gp::kMinInitDepth + 1));
      const gp::GenMethod m = (i % 2 == 0) ? gp::GenMethod::Grow : gp::GenMethod::Full;
      const int mind = (m == gp::GenMethod::Grow) ? gp::kMinInitDepth : depth;
      Individual ind;
      ind.trees.push_back(gp::generate_tree(ps, rng, m, mind, depth));
      ind.trees.push_back(gp::generate_tree(ps, rng, m, mind, depth));
      pop.push_back(std::move(ind));
    }
  } else {
    pop = gp::init_population(ps, rng, cfg.pop_size);
  }

  Solution best;
  EvalCounters counters;
  RunRecord rec;
  rec.method = method_name;
  rec.seed = cfg.seed;
  rec.trace_columns = {"best_fitness", "best_overall"};

  const FeatureMatrix no_common;
  for (int g = 0;; ++g) {
    FeatureCache cache;
    const std::uint64_t evals_before = counters.fitness_evals.load();
    parallel_for(static_cast<int>(pop.size()), cfg.threads, [&](int i) {
      if (!two_trees) {
        pop[i].fitness = fitness_task(pop[i].trees[0], no_common, task, cfg.k_folds,
                                      fold_seed, cache, 0, &counters);
        return;
      }
      counters.fitness_evals.fetch_add(1);
      try {
        const auto ma = cache.get_or_compute(cache_key(pop[i].trees[0], 0), [&] {
          return extract_features(pop[i].trees[0], task.train_images, &counters);
        });
        const auto mb = cache.get_or_compute(cache_key(pop[i].trees[1], 0), [&] {
          return extract_features(pop[i].trees[1], task.train_images, &counters);
        });
        pop[i].fitness = normalized_cv(hstack(*ma, *mb), task, cfg.k_folds, fold_seed);
      } catch (const EvalError&) {
        pop[i].fitness = kWorstFitness;
      }
    });
    rec.fitness_evals_per_gen.push_back(counters.fitness_evals.load() - evals_before);

    const int b = best_index(pop);
    const TypedTree& second = two_trees ? pop[b].trees[1] : TypedTree{};
    offer_best(best, make_solution(pop[b].trees[0], second, *pop[b].fitness, g));
    rec.trace.push_back({g, {*pop[b].fitness, best.fitness}});

    if (g == cfg.generations) break;
    pop = two_trees ? breed_two_tree(pop, cfg, rng) : breed_single(pop, cfg, rng, true);
  }

  rec.fitness_evals = counters.fitness_evals.load();
  rec.feature_extractions = counters.feature_extractions.load();
  rec.elapsed_seconds = elapsed_since(t0);
  return {{best}, std::move(rec)};
}

}  // namespace

MethodResult fgp_run(const TaskSpec& task, const EvoConfig& cfg) {
  return single_task_run(task, cfg, /*two_trees=*/false, "fgp");
}

MethodResult mtfgp_run(const TaskSpec& task, const EvoConfig& cfg) {
  return single_task_run(task, cfg, /*two_trees=*/true, "mtfgp");
}

MethodResult mffgp_run(const TaskSpec& task1, const TaskSpec& task2,
                       const EvoConfig& cfg) {
  cfg.validate();
  task1.validate(cfg.k_folds);
  task2.validate(cfg.k_folds);
  const auto t0 = std::chrono::steady_clock::now();
  const PrimitiveSet& ps = primitive_set();
  Rng rng = Rng(cfg.seed).derive(kStreamCommonPop);
  const std::uint64_t fold1 = fold_seed_for_task(cfg.seed, 0);
  const std::uint64_t fold2 = fold_seed_for_task(cfg.seed, 1);
  const int n = 2 * cfg.pop_size;  // unified population across both tasks

  std::vector<Individual> pop = gp::init_population(ps, rng, n);
  std::vector<int> skill(n, -1);

  Solution best[2];
  EvalCounters counters;
  RunRecord rec;
  rec.method = "mffgp";
  rec.seed = cfg.seed;
  rec.trace_columns = {"task1_best_fitness", "task1_best_overall",
                       "task2_best_fitness", "task2_best_overall"};

  const FeatureMatrix no_common;
  const TaskSpec* tasks[2] = {&task1, &task2};
  const std::uint64_t folds[2] = {fold1, fold2};

  for (int g = 0;; ++g) {
    FeatureCache cache;
    const std::uint64_t evals_before = counters.fitness_evals.load();

    if (g == 0) {
      // initial dual-task evaluation decides each individual's skill factor
      std::vector<double> acc1(n), acc2(n);
      parallel_for(n, cfg.threads, [&](int i) {
        acc1[i] = fitness_task(pop[i].trees[0], no_common, task1, cfg.k_folds, fold1,
                               cache, 0, &counters);
        acc2[i] = fitness_task(pop[i].trees[0], no_common, task2, cfg.k_folds, fold2,
                               cache, 1, &counters);
      });
      auto factorial_rank = [&](const std::vector<double>& acc) {
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
          if (acc[a] != acc[b]) return acc[a] > acc[b];
          return pop[a].total_size() < pop[b].total_size();
        });
        std::vector<int> rank(n);
        for (int pos = 0; pos < n; ++pos) rank[order[pos]] = pos;
        return rank;
      };
      const std::vector<int> rank1 = factorial_rank(acc1);
      const std::vector<int> rank2 = factorial_rank(acc2);
      for (int i = 0; i < n; ++i) {
        if (rank1[i] < rank2[i]) {
          skill[i] = 0;
        } else if (rank2[i] < rank1[i]) {
          skill[i] = 1;
        } else {
          skill[i] = static_cast<int>(rng.index(2));
        }
        pop[i].fitness = (skill[i] == 0) ? acc1[i] : acc2[i];
      }
    } else {
      parallel_for(n, cfg.threads, [&](int i) {
        pop[i].fitness = fitness_task(pop[i].trees[0], no_common, *tasks[skill[i]],
                                      cfg.k_folds, folds[skill[i]], cache, skill[i],
                                      &counters);
      });
    }
    rec.fitness_evals_per_gen.push_back(counters.fitness_evals.load() - evals_before);

    // per-task champions
    int champ[2] = {-1, -1};
    for (int i = 0; i < n; ++i) {
      int& c = champ[skill[i]];
      if (c < 0) {
        c = i;
        continue;
      }
      const double fi = *pop[i].fitness, fc = *pop[c].fitness;
      if (fi > fc || (fi == fc && pop[i].total_size() < pop[c].total_size())) c = i;
    }
    std::vector<double> row;
    for (int t = 0; t < 2; ++t) {
      if (champ[t] >= 0) {
        offer_best(best[t],
                   make_solution(pop[champ[t]].trees[0], TypedTree{},
                                 *pop[champ[t]].fitness, g));
      }
      row.push_back(champ[t] >= 0 ? *pop[champ[t]].fitness : kWorstFitness);
      row.push_back(best[t].fitness);
    }
    rec.trace.push_back({g, std::move(row)});

    if (g == cfg.generations) break;

    // assortative mating with per-task elitism
    std::vector<Individual> next;
    std::vector<int> next_skill;
    next.reserve(n);
    next_skill.reserve(n);
    for (int t = 0; t < 2; ++t) {
      if (champ[t] >= 0) {
        Individual copy = pop[champ[t]];
        copy.fitness.reset();
        next.push_back(std::move(copy));
        next_skill.push_back(t);
      }
    }
    auto push_child = [&](Individual&& ind, int sk) {
      if (static_cast<int>(next.size()) < n) {
        next.push_back(std::move(ind));
        next_skill.push_back(sk);
      }
    };
    while (static_cast<int>(next.size()) < n) {
      const int i = gp::tournament_select(pop, rng, cfg.tournament_k);
      const int j = gp::tournament_select(pop, rng, cfg.tournament_k);
      if (skill[i] == skill[j] || rng.uniform() < kRmp) {
        auto offspring = gp::subtree_crossover(pop[i].trees[0], pop[j].trees[0], ps, rng);
        Individual a, b;
        a.trees.push_back(std::move(offspring.first));
        b.trees.push_back(std::move(offspring.second));
        push_child(std::move(a), rng.index(2) == 0 ? skill[i] : skill[j]);
        push_child(std::move(b), rng.index(2) == 0 ? skill[i] : skill[j]);
      } else {
        Individual a, b;
        a.trees.push_back(gp::subtree_mutation(pop[i].trees[0], ps, rng));
        b.trees.push_back(gp::subtree_mutation(pop[j].trees[0], ps, rng));
        push_child(std::move(a), skill[i]);
        push_child(std::move(b), skill[j]);
      }
    }
    pop = std::move(next);
    skill = std::move(next_skill);
  }

  rec.fitness_evals = counters.fitness_evals.load();
  rec.feature_extractions = counters.feature_extractions.load();
  rec.elapsed_seconds = elapsed_since(t0);
  return {{best[0], best[1]}, std::move(rec)};
}

namespace {

FeatureMatrix solution_features(const Solution& sol, const std::vector<Image>& images,
                                TransferMode mode) {
  FeatureMatrix out;
  out.rows = static_cast<int>(images.size());
  out.cols = 0;
  const bool use_task = (mode != TransferMode::CommonOnly) && !sol.task_tree.empty();
  const bool use_common = (mode != TransferMode::TaskOnly) && !sol.common_tree.empty();
  if (use_task) out = extract_features(sol.task_tree, images);
  if (use_common) {
    const FeatureMatrix mc = extract_features(sol.common_tree, images);
    out = hstack(out, mc);
  }
  return out;
}

double evaluate_on_split(const Solution& sol, const TaskSpec& task, TransferMode mode,
                         std::uint64_t seed) {
  const FeatureMatrix train = solution_features(sol, task.train_images, mode);
  const FeatureMatrix test = solution_features(sol, task.test_images, mode);
  learn::FeatureTable train_t = to_table(train, task.train_labels, task.num_classes);
  learn::FeatureTable test_t = to_table(test, task.test_labels, task.num_classes);
  const learn::Normalizer norm = learn::fit_normalizer(train_t);
  train_t = learn::apply_normalizer(norm, train_t);
  test_t = learn::apply_normalizer(norm, test_t);
  const learn::LinearModel model = learn::train_linear(train_t, derive_seed(seed, 7001));
  return learn::accuracy(model, test_t);
}

}  // namespace

const char* transfer_mode_name(TransferMode mode) {
  switch (mode) {
    case TransferMode::Both: return "both";
    case TransferMode::CommonOnly: return "common_only";
    case TransferMode::TaskOnly: return "task_only";
  }
  return "?";
}

double test_evaluate(const Solution& sol, const TaskSpec& task, std::uint64_t seed) {
  return evaluate_on_split(sol, task, TransferMode::Both, seed);
}

double transfer_evaluate(const Solution& sol, const TaskSpec& target,
                         TransferMode mode, std::uint64_t seed) {
  return evaluate_on_split(sol, target, mode, seed);
}

}  // namespace mtgp::mt
