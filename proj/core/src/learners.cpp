#include "mtgp/learners.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

#include "mtgp/rng.hpp"

namespace mtgp::learn {

void FeatureTable::finalize_labels() {
  int maxy = -1;
  for (int v : y) {
    if (v < 0) throw std::invalid_argument("FeatureTable: negative label");
    maxy = std::max(maxy, v);
  }
  num_classes = maxy + 1;
}

Normalizer fit_normalizer(const FeatureTable& table) {
  if (table.rows == 0) throw std::invalid_argument("fit_normalizer: empty table");
  Normalizer norm;
  norm.mins.assign(table.cols, 0.0);
  norm.maxs.assign(table.cols, 0.0);
  for (int j = 0; j < table.cols; ++j) {
    double lo = table.at(0, j), hi = table.at(0, j);
    for (int i = 1; i < table.rows; ++i) {
      lo = std::min(lo, table.at(i, j));
      hi = std::max(hi, table.at(i, j));
    }
    norm.mins[j] = lo;
    norm.maxs[j] = hi;
  }
  return norm;
}

FeatureTable apply_normalizer(const Normalizer& norm, const FeatureTable& table) {
  if (static_cast<int>(norm.mins.size()) != table.cols) {
    throw std::invalid_argument("apply_normalizer: column count mismatch");
  }
  FeatureTable out = table;
  for (int j = 0; j < table.cols; ++j) {
    const double span = norm.maxs[j] - norm.mins[j];
    for (int i = 0; i < table.rows; ++i) {
      double& v = out.x[static_cast<std::size_t>(i) * table.cols + j];
      v = (span > 0.0) ? (v - norm.mins[j]) / span : 0.0;
    }
  }
  return out;
}

double LinearModel::decision(const double* features, int cls) const {
  const double* w = weights.data() + static_cast<std::size_t>(cls) * cols;
  double s = bias[cls];
  for (int j = 0; j < cols; ++j) s += w[j] * features[j];
  return s;
}

int LinearModel::predict(const double* features) const {
  int best = 0;
  double best_val = decision(features, 0);
  for (int c = 1; c < num_classes; ++c) {
    const double v = decision(features, c);
    if (v > best_val) {
      best_val = v;
      best = c;
    }
  }
  return best;
}

namespace {

constexpr int kMaxEpochs = 1000;
constexpr double kGapTol = 1e-4;
constexpr double kCReg = 1.0;

// One binary L1-loss dual coordinate descent problem. The bias is handled by
// augmenting every example with a constant feature 1; returns d+1 weights
// with the bias last.
std::vector<double> dcd_binary(const FeatureTable& table,
                               const std::vector<signed char>& ybin,
                               const std::vector<int>& order) {
  const int n = table.rows;
  const int d = table.cols;
  std::vector<double> w(d + 1, 0.0);
  std::vector<double> alpha(n, 0.0);
  std::vector<double> qdiag(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* xi = table.row(i);
    double q = 1.0;  // bias feature
    for (int j = 0; j < d; ++j) q += xi[j] * xi[j];
    qdiag[i] = q;
  }

  for (int epoch = 0; epoch < kMaxEpochs; ++epoch) {
    bool moved = false;
    for (int i : order) {
      const double* xi = table.row(i);
      double f = w[d];
      for (int j = 0; j < d; ++j) f += w[j] * xi[j];
      const double y = static_cast<double>(ybin[i]);
      const double g = y * f - 1.0;
      double pg = g;
      if (alpha[i] <= 0.0) {
        pg = std::min(g, 0.0);
      } else if (alpha[i] >= kCReg) {
        pg = std::max(g, 0.0);
      }
      if (pg == 0.0) continue;
      const double old = alpha[i];
      alpha[i] = std::clamp(old - g / qdiag[i], 0.0, kCReg);
      const double step = (alpha[i] - old) * y;
      if (step != 0.0) {
        for (int j = 0; j < d; ++j) w[j] += step * xi[j];
        w[d] += step;
        moved = true;
      }
    }
    if (!moved) break;

    // duality gap = primal - dual = ||w||^2 + C * sum(hinge) - sum(alpha)
    double wtw = 0.0;
    for (double v : w) wtw += v * v;
    double hinge = 0.0;
    for (int i = 0; i < n; ++i) {
      const double* xi = table.row(i);
      double f = w[d];
      for (int j = 0; j < d; ++j) f += w[j] * xi[j];
      hinge += std::max(0.0, 1.0 - static_cast<double>(ybin[i]) * f);
    }
    double asum = 0.0;
    for (double a : alpha) asum += a;
    if (wtw + kCReg * hinge - asum < kGapTol) break;
  }
  return w;
}

}  // namespace

LinearModel train_linear(const FeatureTable& table, std::uint64_t seed) {
  if (table.rows == 0) throw std::invalid_argument("train_linear: empty table");
  if (table.num_classes <= 0) {
    throw std::invalid_argument("train_linear: num_classes not set");
  }
  for (int v : table.y) {
    if (v < 0 || v >= table.num_classes) {
      throw std::invalid_argument("train_linear: label out of range");
    }
  }
  LinearModel model;
  model.num_classes = table.num_classes;
  model.cols = table.cols;
  model.c_reg = kCReg;
  model.weights.assign(static_cast<std::size_t>(table.num_classes) * table.cols, 0.0);
  model.bias.assign(table.num_classes, 0.0);
  if (table.num_classes == 1) {
    model.bias[0] = 1.0;  // constant predictor
    return model;
  }

  std::vector<int> order(table.rows);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);  // one permutation, shared by all one-vs-rest problems

  std::vector<signed char> ybin(table.rows);
  for (int cls = 0; cls < table.num_classes; ++cls) {
    for (int i = 0; i < table.rows; ++i) {
      ybin[i] = (table.y[i] == cls) ? 1 : -1;
    }
    const std::vector<double> w = dcd_binary(table, ybin, order);
    std::copy(w.begin(), w.end() - 1,
              model.weights.begin() + static_cast<std::size_t>(cls) * table.cols);
    model.bias[cls] = w.back();
  }
  return model;
}

double accuracy(const LinearModel& model, const FeatureTable& table) {
  if (table.rows == 0) return 0.0;
  int correct = 0;
  for (int i = 0; i < table.rows; ++i) {
    if (model.predict(table.row(i)) == table.y[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(table.rows);
}

std::vector<std::vector<int>> stratified_kfold(const std::vector<int>& labels, int k,
                                               std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("stratified_kfold: k must be >= 2");
  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
    by_class[labels[i]].push_back(i);
  }
  Rng rng(seed);
  std::vector<std::vector<int>> folds(k);
  int offset = 0;
  for (auto& [cls, idxs] : by_class) {
    if (static_cast<int>(idxs.size()) < k) {
      throw std::runtime_error("stratified_kfold: class " + std::to_string(cls) +
                               " has " + std::to_string(idxs.size()) +
                               " instances, fewer than k=" + std::to_string(k));
    }
    rng.shuffle(idxs);
    // keep dealing round-robin where the previous class left off so fold
    // totals stay balanced even when class sizes are not multiples of k
    for (std::size_t j = 0; j < idxs.size(); ++j) {
      folds[(offset + j) % k].push_back(idxs[j]);
    }
    offset = (offset + static_cast<int>(idxs.size())) % k;
  }
  return folds;
}

namespace {

FeatureTable subset(const FeatureTable& table, const std::vector<int>& idx) {
  FeatureTable out(static_cast<int>(idx.size()), table.cols);
  out.num_classes = table.num_classes;
  for (int i = 0; i < out.rows; ++i) {
    const double* src = table.row(idx[i]);
    std::copy(src, src + table.cols, out.row(i));
    out.y[i] = table.y[idx[i]];
  }
  return out;
}

}  // namespace

double cv_accuracy(const FeatureTable& table, int k, std::uint64_t seed) {
  const auto folds = stratified_kfold(table.y, k, seed);
  double total = 0.0;
  for (int fi = 0; fi < k; ++fi) {
    std::vector<int> train_idx;
    train_idx.reserve(table.rows);
    for (int fj = 0; fj < k; ++fj) {
      if (fj == fi) continue;
      train_idx.insert(train_idx.end(), folds[fj].begin(), folds[fj].end());
    }
    const FeatureTable train = subset(table, train_idx);
    const FeatureTable held_out = subset(table, folds[fi]);
    const LinearModel model = train_linear(train, derive_seed(seed, 1000 + fi));
    total += accuracy(model, held_out);
  }
  return total / static_cast<double>(k);
}

}  // namespace mtgp::learn
