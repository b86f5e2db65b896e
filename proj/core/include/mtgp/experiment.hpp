#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtgp/dataset.hpp"
#include "mtgp/multitask.hpp"

namespace mtgp::cli {

/// Raised for invalid configuration (bad key, bad value, inconsistent
/// method/task combination). The command-line tool maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Method { Ksmtgp, Fgp, Mtfgp, Mffgp, RawPixel, FixedDescriptor };

Method method_from_name(const std::string& name);  // throws ConfigError
const char* method_name(Method m);

/// Full description of one experiment: which method, which tasks (synthetic
/// pair or manifest datasets), evolution settings, replication and output.
struct ExperimentConfig {
  Method method = Method::Ksmtgp;

  bool use_synth = true;       // synthetic benchmark pair vs. manifest datasets
  data::SynthSpec synth;
  int synth_task = 1;          // task used by single-task methods: 1 or 2
  std::string task1_dir;       // dataset roots when use_synth == false
  std::string task2_dir;

  mt::EvoConfig evo;
  int runs = 30;
  std::uint64_t base_seed = 1;  // run i uses seed base_seed + i
  std::string out_dir = "out";
  std::string descriptor = "sift";  // for the fixed-descriptor baseline

  void validate() const;  // throws ConfigError
};

ExperimentConfig default_config();

/// Flat "key = value" file; '#' starts a comment; unknown keys are errors.
ExperimentConfig load_config_file(const std::filesystem::path& path);

/// Applies one key=value pair (same keys as the config file).
void apply_key(ExperimentConfig& cfg, const std::string& key,
               const std::string& value);

/// One results.csv row: a single run's outcome on a single task.
struct RunRow {
  std::string method;
  int run = 0;
  std::uint64_t seed = 0;
  std::string task;
  double best_fitness = 0.0;
  double test_accuracy = 0.0;
  int feature_count = 0;
  int common_tree_size = 0;
  int task_tree_size = 0;
};

struct ExperimentOutput {
  std::vector<RunRow> rows;                          // run-major, task order
  std::vector<mt::RunRecord> records;                // one per run
  std::vector<std::vector<mt::Solution>> solutions;  // [run][task]
  std::vector<std::string> task_names;
};

/// Executes cfg.runs independent runs (seeds base_seed + i) and writes
/// results.csv, summary.csv, timings.csv, trace_run<i>.csv and
/// best_task<k>_run<i>.tree under cfg.out_dir. Every file except timings.csv
/// is byte-deterministic for a given config.
ExperimentOutput run_experiment(const ExperimentConfig& cfg);

/// Significance comparison for one task, read back from results files.
struct TaskStats {
  std::string task;
  double statistic = 0.0;
  double p_value = 1.0;
  char verdict = '=';
};

/// Rank-sum comparison of test accuracies between two results.csv files,
/// one entry per task name appearing in both.
std::vector<TaskStats> compare_results(const std::filesystem::path& results_a,
                                       const std::filesystem::path& results_b);

struct TransferRow {
  std::string mode;
  int run = 0;
  double accuracy = 0.0;
};

/// Loads every best_task<source_task>_run<i>.tree under trees_dir, evaluates
/// it on `target` in all three transfer modes (run i uses seed base_seed + i)
/// and writes mode,run,accuracy rows to out_csv.
std::vector<TransferRow> transfer_command(const std::filesystem::path& trees_dir,
                                          int source_task,
                                          const mt::TaskSpec& target,
                                          std::uint64_t base_seed,
                                          const std::filesystem::path& out_csv);

/// Reads one saved tree file (task tree line, then optional common tree line).
mt::Solution load_solution_file(const std::filesystem::path& path);

}  // namespace mtgp::cli
