// Command-line driver: experiment runner, synthetic dataset writer, transfer
// evaluation, rank-sum statistics and tree export.

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mtgp/dataset.hpp"
#include "mtgp/experiment.hpp"
#include "mtgp/gp.hpp"
#include "mtgp/multitask.hpp"
#include "mtgp/stats.hpp"

namespace fs = std::filesystem;
using namespace mtgp;

namespace {

void print_run_summary(const cli::ExperimentOutput& out, const std::string& dir) {
  for (const std::string& task : out.task_names) {
    std::vector<double> acc;
    for (const cli::RunRow& r : out.rows) {
      if (r.task == task) acc.push_back(r.test_accuracy);
    }
    std::printf("%-20s max %.2f  mean %.2f +/- %.2f  (%zu runs)\n", task.c_str(),
                stats::max_value(acc), stats::mean(acc), stats::sample_stddev(acc),
                acc.size());
  }
  std::printf("artifacts written to %s\n", dir.c_str());
}

mt::TransferMode mode_from_name(const std::string& name) {
  if (name == "both") return mt::TransferMode::Both;
  if (name == "common_only") return mt::TransferMode::CommonOnly;
  if (name == "task_only") return mt::TransferMode::TaskOnly;
  throw cli::ConfigError("unknown mode '" + name +
                         "' (expected both, common_only or task_only)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multitask genetic programming for image feature learning"};
  app.require_subcommand(1);

  // ---- run ----
  auto* run = app.add_subcommand("run", "Run a configured experiment");
  std::string run_config, run_out, run_method;
  std::uint64_t run_seed = 0;
  int run_runs = 0;
  run->add_option("--config", run_config, "key=value config file");
  auto* opt_out = run->add_option("--out", run_out, "output directory");
  auto* opt_seed = run->add_option("--seed", run_seed, "base seed (run i uses seed+i)");
  auto* opt_runs = run->add_option("--runs", run_runs, "number of independent runs");
  auto* opt_method = run->add_option(
      "--method", run_method,
      "ksmtgp | fgp | mtfgp | mffgp | raw_pixel | fixed_descriptor");
  run->callback([&] {
    cli::ExperimentConfig cfg = run_config.empty()
                                    ? cli::default_config()
                                    : cli::load_config_file(run_config);
    if (opt_out->count() > 0) cfg.out_dir = run_out;
    if (opt_seed->count() > 0) cfg.base_seed = run_seed;
    if (opt_runs->count() > 0) cfg.runs = run_runs;
    if (opt_method->count() > 0) cfg.method = cli::method_from_name(run_method);
    const cli::ExperimentOutput out = cli::run_experiment(cfg);
    print_run_summary(out, cfg.out_dir);
  });

  // ---- synth ----
  auto* synth = app.add_subcommand(
      "synth", "Write the synthetic benchmark pair as PGM datasets");
  std::string synth_out;
  data::SynthSpec spec;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", spec.seed, "generator seed");
  synth->add_option("--height", spec.height, "image height");
  synth->add_option("--width", spec.width, "image width");
  synth->add_option("--train-per-class", spec.train_per_class, "training images per class");
  synth->add_option("--test-per-class", spec.test_per_class, "test images per class");
  synth->add_option("--noise", spec.noise_std, "pixel noise standard deviation");
  synth->callback([&] {
    try {
      spec.validate();
    } catch (const std::exception& e) {
      throw cli::ConfigError(e.what());
    }
    for (const data::SynthTask task :
         {data::SynthTask::Orientation, data::SynthTask::Frequency}) {
      const data::Dataset ds = data::generate_synth(spec, task);
      const fs::path dir = fs::path(synth_out) / ds.name;
      data::save_dataset(ds, dir);
      std::printf("%s: %zu images, %d classes -> %s\n", ds.name.c_str(),
                  ds.images.size(), ds.num_classes, dir.string().c_str());
    }
  });

  // ---- transfer ----
  auto* transfer = app.add_subcommand(
      "transfer", "Evaluate saved trees on a different dataset in all modes");
  std::string tr_trees, tr_target, tr_out;
  int tr_task = 1;
  std::uint64_t tr_seed = 1;
  transfer->add_option("--trees", tr_trees, "directory with best_task<k>_run<i>.tree files")
      ->required();
  transfer->add_option("--target", tr_target, "target dataset root (manifest.csv)")
      ->required();
  transfer->add_option("--task", tr_task, "source task number k (default 1)");
  transfer->add_option("--seed", tr_seed, "base evaluation seed");
  transfer->add_option("--out", tr_out, "output csv (default <trees>/transfer.csv)");
  transfer->callback([&] {
    const mt::TaskSpec target = data::to_task(data::load_dataset(tr_target));
    const fs::path out_csv =
        tr_out.empty() ? fs::path(tr_trees) / "transfer.csv" : fs::path(tr_out);
    const std::vector<cli::TransferRow> rows =
        cli::transfer_command(tr_trees, tr_task, target, tr_seed, out_csv);
    std::map<std::string, std::vector<double>> by_mode;
    std::vector<std::string> mode_order;
    for (const cli::TransferRow& r : rows) {
      if (by_mode.find(r.mode) == by_mode.end()) mode_order.push_back(r.mode);
      by_mode[r.mode].push_back(r.accuracy);
    }
    for (const std::string& mode : mode_order) {
      const std::vector<double>& acc = by_mode[mode];
      std::printf("%-12s mean %.2f +/- %.2f  (%zu runs)\n", mode.c_str(),
                  stats::mean(acc), stats::sample_stddev(acc), acc.size());
    }
    std::printf("rows written to %s\n", out_csv.string().c_str());
  });

  // ---- stats ----
  auto* st = app.add_subcommand(
      "stats", "Rank-sum comparison of test accuracies from two results.csv files");
  std::string stats_a, stats_b;
  st->add_option("results_a", stats_a, "first results.csv")->required();
  st->add_option("results_b", stats_b, "second results.csv")->required();
  st->callback([&] {
    for (const cli::TaskStats& ts : cli::compare_results(stats_a, stats_b)) {
      std::printf("%-20s statistic %+.6f  p %.6f  verdict %c\n", ts.task.c_str(),
                  ts.statistic, ts.p_value, ts.verdict);
    }
  });

  // ---- export-dot ----
  auto* dot = app.add_subcommand("export-dot", "Render a saved tree as GraphViz DOT");
  std::string dot_file, dot_out, dot_name = "tree";
  int dot_line = 1;
  dot->add_option("tree_file", dot_file, "saved .tree file")->required();
  dot->add_option("--line", dot_line, "1 = task tree, 2 = common tree");
  dot->add_option("--name", dot_name, "graph name");
  dot->add_option("--out", dot_out, "output file (default: stdout)");
  dot->callback([&] {
    if (dot_line != 1 && dot_line != 2) {
      throw cli::ConfigError("--line must be 1 or 2");
    }
    const mt::Solution sol = cli::load_solution_file(dot_file);
    const gp::TypedTree& tree = dot_line == 1 ? sol.task_tree : sol.common_tree;
    if (tree.empty()) {
      throw std::runtime_error(dot_file + ": no tree on line " +
                               std::to_string(dot_line));
    }
    const std::string text = gp::export_dot(tree, mt::primitive_set(), dot_name);
    if (dot_out.empty()) {
      std::fputs(text.c_str(), stdout);
    } else {
      std::FILE* f = std::fopen(dot_out.c_str(), "wb");
      if (f == nullptr) throw std::runtime_error("cannot write " + dot_out);
      std::fputs(text.c_str(), f);
      std::fclose(f);
    }
  });

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "Evaluate one saved tree file on a dataset");
  std::string ev_trees, ev_target, ev_mode = "both";
  std::uint64_t ev_seed = 1;
  ev->add_option("--trees", ev_trees, "saved .tree file")->required();
  ev->add_option("--target", ev_target, "dataset root (manifest.csv)")->required();
  ev->add_option("--mode", ev_mode, "both | common_only | task_only");
  ev->add_option("--seed", ev_seed, "evaluation seed");
  ev->callback([&] {
    const mt::Solution sol = cli::load_solution_file(ev_trees);
    const mt::TaskSpec target = data::to_task(data::load_dataset(ev_target));
    const double acc =
        mt::transfer_evaluate(sol, target, mode_from_name(ev_mode), ev_seed);
    std::printf("accuracy %.6f\n", acc);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the usage error
    return code == 0 ? 0 : 2;
  } catch (const cli::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
