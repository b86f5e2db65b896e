#include "mtgp/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "mtgp/imageops.hpp"
#include "mtgp/rng.hpp"
#include "mtgp/stats.hpp"

namespace fs = std::filesystem;

namespace mtgp::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

long long to_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not an integer: '" + value + "'");
  }
  if (used != value.size()) {
    throw ConfigError("config key '" + key + "': not an integer: '" + value + "'");
  }
  return v;
}

double to_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a number: '" + value + "'");
  }
  if (used != value.size()) {
    throw ConfigError("config key '" + key + "': not a number: '" + value + "'");
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key '" + key + "': not a boolean: '" + value + "'");
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << text;
  os.close();
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool is_two_task(Method m) { return m == Method::Ksmtgp || m == Method::Mffgp; }
bool is_pseudo(Method m) {
  return m == Method::RawPixel || m == Method::FixedDescriptor;
}

// ---- fixed-feature baselines (no evolution) --------------------------------

FeatVec fixed_features(const Image& img, Method m, const std::string& desc) {
  if (m == Method::RawPixel) return img.pix;
  if (desc == "sift") return imageops::sift_descriptor(img);
  if (desc == "hog") return imageops::hog_descriptor(img);
  return imageops::lbp_histogram(img);
}

learn::FeatureTable fixed_table(const std::vector<Image>& images,
                                const std::vector<int>& labels, int num_classes,
                                Method m, const std::string& desc) {
  learn::FeatureTable t;
  for (std::size_t i = 0; i < images.size(); ++i) {
    FeatVec f = fixed_features(images[i], m, desc);
    if (i == 0) {
      t = learn::FeatureTable(static_cast<int>(images.size()),
                              static_cast<int>(f.size()));
    } else if (static_cast<int>(f.size()) != t.cols) {
      throw ConfigError("raw_pixel needs uniformly sized images (got " +
                        std::to_string(f.size()) + " features after " +
                        std::to_string(t.cols) + ")");
    }
    std::copy(f.begin(), f.end(), t.row(static_cast<int>(i)));
    t.y[i] = labels[i];
  }
  t.num_classes = num_classes;
  return t;
}

mt::MethodResult pseudo_run(const mt::TaskSpec& task, const mt::EvoConfig& evo,
                            Method m, const std::string& desc) {
  const auto t0 = std::chrono::steady_clock::now();
  learn::FeatureTable train =
      fixed_table(task.train_images, task.train_labels, task.num_classes, m, desc);
  const learn::Normalizer norm = learn::fit_normalizer(train);
  train = learn::apply_normalizer(norm, train);

  mt::MethodResult res;
  mt::Solution sol;
  sol.fitness = learn::cv_accuracy(train, evo.k_folds, derive_seed(evo.seed, 21));
  sol.feature_count = train.cols;
  sol.found_generation = 0;
  res.solutions.push_back(std::move(sol));

  res.record.method = method_name(m);
  res.record.seed = evo.seed;
  res.record.fitness_evals = 1;
  res.record.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

double pseudo_test_accuracy(const mt::TaskSpec& task, Method m,
                            const std::string& desc, std::uint64_t seed) {
  learn::FeatureTable train =
      fixed_table(task.train_images, task.train_labels, task.num_classes, m, desc);
  learn::FeatureTable test =
      fixed_table(task.test_images, task.test_labels, task.num_classes, m, desc);
  const learn::Normalizer norm = learn::fit_normalizer(train);
  train = learn::apply_normalizer(norm, train);
  test = learn::apply_normalizer(norm, test);
  const learn::LinearModel model = learn::train_linear(train, derive_seed(seed, 7001));
  return learn::accuracy(model, test);
}

// ---- results.csv reader ----------------------------------------------------

struct ResultsFile {
  std::vector<std::string> task_order;
  std::map<std::string, std::vector<double>> accuracy;
};

ResultsFile read_results_csv(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty file: " + path.string());
  const std::vector<std::string> header = split_csv(line);
  int task_col = -1, acc_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "task") task_col = static_cast<int>(i);
    if (header[i] == "test_accuracy") acc_col = static_cast<int>(i);
  }
  if (task_col < 0 || acc_col < 0) {
    throw std::runtime_error(path.string() +
                             ": missing 'task'/'test_accuracy' columns");
  }
  ResultsFile out;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    const std::vector<std::string> cols = split_csv(line);
    if (static_cast<int>(cols.size()) <= std::max(task_col, acc_col)) {
      throw std::runtime_error(path.string() + ": short row: " + line);
    }
    const std::string& task = cols[task_col];
    if (out.accuracy.find(task) == out.accuracy.end()) out.task_order.push_back(task);
    out.accuracy[task].push_back(std::stod(cols[acc_col]));
  }
  return out;
}

}  // namespace

// ---- config ----------------------------------------------------------------

Method method_from_name(const std::string& name) {
  if (name == "ksmtgp") return Method::Ksmtgp;
  if (name == "fgp") return Method::Fgp;
  if (name == "mtfgp") return Method::Mtfgp;
  if (name == "mffgp") return Method::Mffgp;
  if (name == "raw_pixel") return Method::RawPixel;
  if (name == "fixed_descriptor") return Method::FixedDescriptor;
  throw ConfigError("unknown method '" + name +
                    "' (expected ksmtgp, fgp, mtfgp, mffgp, raw_pixel or "
                    "fixed_descriptor)");
}

const char* method_name(Method m) {
  switch (m) {
    case Method::Ksmtgp: return "ksmtgp";
    case Method::Fgp: return "fgp";
    case Method::Mtfgp: return "mtfgp";
    case Method::Mffgp: return "mffgp";
    case Method::RawPixel: return "raw_pixel";
    case Method::FixedDescriptor: return "fixed_descriptor";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  if (runs < 1) throw ConfigError("runs must be >= 1");
  try {
    evo.validate();
    if (use_synth) synth.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (use_synth) {
    if (synth_task != 1 && synth_task != 2) {
      throw ConfigError("synth_task must be 1 or 2");
    }
  } else {
    if (is_two_task(method)) {
      if (task1_dir.empty() || task2_dir.empty()) {
        throw ConfigError(std::string(method_name(method)) +
                          " requires exactly two tasks (task1_dir and task2_dir)");
      }
    } else {
      if (task1_dir.empty() || !task2_dir.empty()) {
        throw ConfigError(std::string(method_name(method)) +
                          " requires exactly one task (task1_dir only)");
      }
    }
  }
  if (method == Method::FixedDescriptor && descriptor != "sift" &&
      descriptor != "hog" && descriptor != "lbp") {
    throw ConfigError("descriptor must be sift, hog or lbp");
  }
}

ExperimentConfig default_config() { return {}; }

void apply_key(ExperimentConfig& cfg, const std::string& key,
               const std::string& value) {
  const auto int_of = [&] { return to_int(key, value); };
  const auto dbl_of = [&] { return to_double(key, value); };

  if (key == "method") {
    cfg.method = method_from_name(value);
  } else if (key == "runs") {
    cfg.runs = static_cast<int>(int_of());
  } else if (key == "base_seed" || key == "seed") {
    cfg.base_seed = static_cast<std::uint64_t>(int_of());
  } else if (key == "out_dir") {
    cfg.out_dir = value;
  } else if (key == "synth") {
    cfg.use_synth = to_bool(key, value);
  } else if (key == "synth_height") {
    cfg.synth.height = static_cast<int>(int_of());
  } else if (key == "synth_width") {
    cfg.synth.width = static_cast<int>(int_of());
  } else if (key == "synth_train_per_class") {
    cfg.synth.train_per_class = static_cast<int>(int_of());
  } else if (key == "synth_test_per_class") {
    cfg.synth.test_per_class = static_cast<int>(int_of());
  } else if (key == "synth_noise_std") {
    cfg.synth.noise_std = dbl_of();
  } else if (key == "synth_seed") {
    cfg.synth.seed = static_cast<std::uint64_t>(int_of());
  } else if (key == "synth_task") {
    cfg.synth_task = static_cast<int>(int_of());
  } else if (key == "task1_dir") {
    cfg.task1_dir = value;
    cfg.use_synth = false;
  } else if (key == "task2_dir") {
    cfg.task2_dir = value;
    cfg.use_synth = false;
  } else if (key == "pop_size") {
    cfg.evo.pop_size = static_cast<int>(int_of());
  } else if (key == "generations") {
    cfg.evo.generations = static_cast<int>(int_of());
  } else if (key == "p_crossover") {
    cfg.evo.p_crossover = dbl_of();
  } else if (key == "p_mutation") {
    cfg.evo.p_mutation = dbl_of();
  } else if (key == "p_elitism") {
    cfg.evo.p_elitism = dbl_of();
  } else if (key == "tournament_k") {
    cfg.evo.tournament_k = static_cast<int>(int_of());
  } else if (key == "k_folds") {
    cfg.evo.k_folds = static_cast<int>(int_of());
  } else if (key == "threads") {
    cfg.evo.threads = static_cast<int>(int_of());
  } else if (key == "descriptor") {
    cfg.descriptor = value;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

ExperimentConfig load_config_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file: " + path.string());
  ExperimentConfig cfg = default_config();
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": expected key = value");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": empty key");
    }
    try {
      apply_key(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " +
                        e.what());
    }
  }
  return cfg;
}

// ---- experiment ------------------------------------------------------------

ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();

  std::vector<mt::TaskSpec> tasks;
  if (cfg.use_synth) {
    auto [a, b] = data::generate_synth_pair(cfg.synth, cfg.synth);
    if (is_two_task(cfg.method)) {
      tasks = {std::move(a), std::move(b)};
    } else {
      tasks = {cfg.synth_task == 1 ? std::move(a) : std::move(b)};
    }
  } else {
    tasks.push_back(data::to_task(data::load_dataset(cfg.task1_dir)));
    if (is_two_task(cfg.method)) {
      tasks.push_back(data::to_task(data::load_dataset(cfg.task2_dir)));
    }
  }
  for (const mt::TaskSpec& t : tasks) {
    try {
      t.validate(cfg.evo.k_folds);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("task '") + t.name + "': " + e.what());
    }
  }

  ExperimentOutput out;
  for (const mt::TaskSpec& t : tasks) out.task_names.push_back(t.name);

  for (int i = 0; i < cfg.runs; ++i) {
    mt::EvoConfig evo = cfg.evo;
    evo.seed = cfg.base_seed + static_cast<std::uint64_t>(i);

    mt::MethodResult res;
    switch (cfg.method) {
      case Method::Ksmtgp: res = mt::ksmtgp_run(tasks[0], tasks[1], evo); break;
      case Method::Fgp: res = mt::fgp_run(tasks[0], evo); break;
      case Method::Mtfgp: res = mt::mtfgp_run(tasks[0], evo); break;
      case Method::Mffgp: res = mt::mffgp_run(tasks[0], tasks[1], evo); break;
      case Method::RawPixel:
      case Method::FixedDescriptor:
        res = pseudo_run(tasks[0], evo, cfg.method, cfg.descriptor);
        break;
    }

    for (std::size_t t = 0; t < res.solutions.size(); ++t) {
      const mt::Solution& sol = res.solutions[t];
      RunRow row;
      row.method = method_name(cfg.method);
      row.run = i;
      row.seed = evo.seed;
      row.task = tasks[t].name;
      row.best_fitness = sol.fitness;
      row.test_accuracy =
          is_pseudo(cfg.method)
              ? pseudo_test_accuracy(tasks[t], cfg.method, cfg.descriptor, evo.seed)
              : mt::test_evaluate(sol, tasks[t], evo.seed);
      row.feature_count = sol.feature_count;
      row.common_tree_size = sol.common_tree.size();
      row.task_tree_size = sol.task_tree.size();
      out.rows.push_back(std::move(row));
    }
    out.records.push_back(std::move(res.record));
    out.solutions.push_back(std::move(res.solutions));
  }

  // ---- write artifacts ----
  const fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output dir: " + dir.string());

  std::string results =
      "method,run,seed,task,best_fitness,test_accuracy,feature_count,"
      "common_tree_size,task_tree_size\n";
  for (const RunRow& r : out.rows) {
    results += r.method + ',' + std::to_string(r.run) + ',' +
               std::to_string(r.seed) + ',' + r.task + ',' +
               fmt6(r.best_fitness) + ',' + fmt6(r.test_accuracy) + ',' +
               std::to_string(r.feature_count) + ',' +
               std::to_string(r.common_tree_size) + ',' +
               std::to_string(r.task_tree_size) + '\n';
  }
  write_text_file(dir / "results.csv", results);

  std::string summary = "method,task,runs,max_accuracy,mean_accuracy,std_accuracy\n";
  for (const std::string& task : out.task_names) {
    std::vector<double> acc;
    for (const RunRow& r : out.rows) {
      if (r.task == task) acc.push_back(r.test_accuracy);
    }
    summary += std::string(method_name(cfg.method)) + ',' + task + ',' +
               std::to_string(acc.size()) + ',' + fmt6(stats::max_value(acc)) +
               ',' + fmt6(stats::mean(acc)) + ',' +
               fmt6(stats::sample_stddev(acc)) + '\n';
  }
  write_text_file(dir / "summary.csv", summary);

  // Wall-clock and instrumentation live apart from results.csv so everything
  // else stays byte-identical across repeated executions.
  std::string timings =
      "method,run,seed,elapsed_seconds,fitness_evals,feature_extractions,"
      "common_cache_hits\n";
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    const mt::RunRecord& rec = out.records[i];
    timings += std::string(method_name(cfg.method)) + ',' + std::to_string(i) +
               ',' + std::to_string(rec.seed) + ',' + fmt6(rec.elapsed_seconds) +
               ',' + std::to_string(rec.fitness_evals) + ',' +
               std::to_string(rec.feature_extractions) + ',' +
               std::to_string(rec.common_cache_hits) + '\n';
  }
  write_text_file(dir / "timings.csv", timings);

  for (std::size_t i = 0; i < out.records.size(); ++i) {
    const mt::RunRecord& rec = out.records[i];
    if (rec.trace_columns.empty()) continue;
    std::string trace = "generation";
    for (const std::string& c : rec.trace_columns) trace += ',' + c;
    trace += '\n';
    for (const mt::TraceRow& row : rec.trace) {
      trace += std::to_string(row.generation);
      for (double v : row.values) trace += ',' + fmt6(v);
      trace += '\n';
    }
    write_text_file(dir / ("trace_run" + std::to_string(i) + ".csv"), trace);
  }

  const gp::PrimitiveSet& ps = mt::primitive_set();
  for (std::size_t i = 0; i < out.solutions.size(); ++i) {
    for (std::size_t t = 0; t < out.solutions[i].size(); ++t) {
      const mt::Solution& sol = out.solutions[i][t];
      if (sol.task_tree.empty()) continue;  // fixed baselines have no trees
      std::string text = gp::serialize_tree(sol.task_tree, ps) + '\n';
      text += (sol.common_tree.empty() ? std::string()
                                       : gp::serialize_tree(sol.common_tree, ps)) +
              '\n';
      write_text_file(dir / ("best_task" + std::to_string(t + 1) + "_run" +
                             std::to_string(i) + ".tree"),
                      text);
    }
  }

  return out;
}

// ---- stats -----------------------------------------------------------------

std::vector<TaskStats> compare_results(const fs::path& results_a,
                                       const fs::path& results_b) {
  const ResultsFile a = read_results_csv(results_a);
  const ResultsFile b = read_results_csv(results_b);
  std::vector<TaskStats> out;
  for (const std::string& task : a.task_order) {
    const auto it = b.accuracy.find(task);
    if (it == b.accuracy.end()) continue;
    const std::vector<double>& sa = a.accuracy.at(task);
    const std::vector<double>& sb = it->second;
    TaskStats ts;
    ts.task = task;
    const stats::RanksumResult r = stats::wilcoxon_ranksum(sa, sb);
    ts.statistic = r.statistic;
    ts.p_value = r.p_value;
    ts.verdict = stats::ranksum_verdict(sa, sb);
    out.push_back(std::move(ts));
  }
  if (out.empty()) {
    throw std::runtime_error("no task names shared between " +
                             results_a.string() + " and " + results_b.string());
  }
  return out;
}

// ---- transfer --------------------------------------------------------------

mt::Solution load_solution_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read tree file: " + path.string());
  std::string task_line, common_line;
  std::getline(is, task_line);
  std::getline(is, common_line);
  task_line = trim(task_line);
  common_line = trim(common_line);
  if (task_line.empty()) {
    throw std::runtime_error(path.string() + ": first line must hold a tree");
  }
  const gp::PrimitiveSet& ps = mt::primitive_set();
  mt::Solution sol;
  try {
    sol.task_tree = gp::parse_tree(task_line, ps);
    if (!common_line.empty()) sol.common_tree = gp::parse_tree(common_line, ps);
  } catch (const gp::ParseError& e) {
    throw std::runtime_error(path.string() + ": " + e.what() + " (offset " +
                             std::to_string(e.position()) + ")");
  }
  sol.feature_count = mt::feature_dim(sol.task_tree) +
                      (sol.common_tree.empty() ? 0 : mt::feature_dim(sol.common_tree));
  return sol;
}

std::vector<TransferRow> transfer_command(const fs::path& trees_dir,
                                          int source_task,
                                          const mt::TaskSpec& target,
                                          std::uint64_t base_seed,
                                          const fs::path& out_csv) {
  std::vector<mt::Solution> sols;
  for (int i = 0;; ++i) {
    const fs::path p = trees_dir / ("best_task" + std::to_string(source_task) +
                                    "_run" + std::to_string(i) + ".tree");
    if (!fs::exists(p)) break;
    sols.push_back(load_solution_file(p));
  }
  if (sols.empty()) {
    throw std::runtime_error("no best_task" + std::to_string(source_task) +
                             "_run<i>.tree files under " + trees_dir.string());
  }

  std::vector<TransferRow> rows;
  std::string csv = "mode,run,accuracy\n";
  for (const mt::TransferMode mode :
       {mt::TransferMode::Both, mt::TransferMode::CommonOnly,
        mt::TransferMode::TaskOnly}) {
    for (std::size_t i = 0; i < sols.size(); ++i) {
      TransferRow row;
      row.mode = mt::transfer_mode_name(mode);
      row.run = static_cast<int>(i);
      row.accuracy = mt::transfer_evaluate(
          sols[i], target, mode, base_seed + static_cast<std::uint64_t>(i));
      csv += row.mode + ',' + std::to_string(row.run) + ',' +
             fmt6(row.accuracy) + '\n';
      rows.push_back(std::move(row));
    }
  }
  write_text_file(out_csv, csv);
  return rows;
}

}  // namespace mtgp::cli
