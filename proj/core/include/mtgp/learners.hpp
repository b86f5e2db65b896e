#pragma once

#include <cstdint>
#include <vector>

namespace mtgp::learn {

/// Dense feature matrix with per-row labels. Rows correspond to images.
struct FeatureTable {
  int rows = 0;
  int cols = 0;
  int num_classes = 0;
  std::vector<double> x;  // row-major, rows*cols
  std::vector<int> y;     // length rows, values in [0, num_classes)

  FeatureTable() = default;
  FeatureTable(int r, int c) : rows(r), cols(c), x(static_cast<std::size_t>(r) * c, 0.0), y(r, 0) {}

  double* row(int i) { return x.data() + static_cast<std::size_t>(i) * cols; }
  const double* row(int i) const { return x.data() + static_cast<std::size_t>(i) * cols; }
  double at(int i, int j) const { return x[static_cast<std::size_t>(i) * cols + j]; }

  /// Sets num_classes from the max label. Throws if labels are inconsistent.
  void finalize_labels();
};

/// Per-column min/max learned from a training table.
struct Normalizer {
  std::vector<double> mins;
  std::vector<double> maxs;
};

/// Column-wise (x - min) / (max - min); constant columns map to 0. Values
/// from unseen data are not clamped.
Normalizer fit_normalizer(const FeatureTable& table);
FeatureTable apply_normalizer(const Normalizer& norm, const FeatureTable& table);

/// One-vs-rest linear max-margin classifier. Weights are (num_classes x cols);
/// trained with the regularization constant fixed at 1.
struct LinearModel {
  int num_classes = 0;
  int cols = 0;
  std::vector<double> weights;  // row-major, num_classes * cols
  std::vector<double> bias;     // length num_classes
  double c_reg = 1.0;

  double decision(const double* features, int cls) const;
  /// Argmax of decision values; ties resolve to the lowest class index.
  int predict(const double* features) const;
};

/// Deterministic dual coordinate descent on the L1-loss (hinge) dual, one
/// binary problem per class; epoch cap 1000, duality-gap tolerance 1e-4,
/// example order shuffled once from `seed`.
LinearModel train_linear(const FeatureTable& table, std::uint64_t seed);

/// 100 * correct / rows.
double accuracy(const LinearModel& model, const FeatureTable& table);

/// K disjoint folds; per-class counts across folds differ by at most 1.
/// Throws if any class has fewer than k members.
std::vector<std::vector<int>> stratified_kfold(const std::vector<int>& labels, int k,
                                               std::uint64_t seed);

/// Mean held-out-fold accuracy over stratified K folds. The table is expected
/// to be normalized already by the caller.
double cv_accuracy(const FeatureTable& table, int k, std::uint64_t seed);

}  // namespace mtgp::learn
