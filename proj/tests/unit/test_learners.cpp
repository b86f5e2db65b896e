#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "doctest.h"
#include "mtgp/learners.hpp"
#include "mtgp/rng.hpp"

using namespace mtgp;
using namespace mtgp::learn;

namespace {

// Two well-separated Gaussian-ish blobs per class on `dim` features.
FeatureTable blob_table(int per_class, int classes, int dim, std::uint64_t seed,
                        double spread = 0.05) {
  FeatureTable t(per_class * classes, dim);
  Rng rng(seed);
  int row = 0;
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per_class; ++i, ++row) {
      for (int j = 0; j < dim; ++j) {
        const double centre = (j % classes == c) ? 1.0 : 0.0;
        t.row(row)[j] = centre + rng.uniform(-spread, spread);
      }
      t.y[row] = c;
    }
  }
  t.finalize_labels();
  return t;
}

FeatureTable random_table(int rows, int dim, int classes, std::uint64_t seed) {
  FeatureTable t(rows, dim);
  Rng rng(seed);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < dim; ++j) t.row(i)[j] = rng.uniform();
    t.y[i] = i % classes;  // balanced labels independent of the features
  }
  t.finalize_labels();
  return t;
}

}  // namespace

TEST_CASE("normalizer maps the training range onto [0, 1]") {
  FeatureTable t(3, 2);
  t.row(0)[0] = 2.0; t.row(0)[1] = 5.0;
  t.row(1)[0] = 3.0; t.row(1)[1] = 5.0;
  t.row(2)[0] = 4.0; t.row(2)[1] = 5.0;
  t.finalize_labels();

  const Normalizer norm = fit_normalizer(t);
  const FeatureTable out = apply_normalizer(norm, t);
  CHECK(out.at(0, 0) == 0.0);
  CHECK(out.at(1, 0) == 0.5);
  CHECK(out.at(2, 0) == 1.0);
  // constant column collapses to 0
  CHECK(out.at(0, 1) == 0.0);
  CHECK(out.at(2, 1) == 0.0);

  FeatureTable unseen(1, 2);
  unseen.row(0)[0] = 6.0;  // past the training max: no clamping
  unseen.row(0)[1] = 9.0;
  const FeatureTable mapped = apply_normalizer(norm, unseen);
  CHECK(mapped.at(0, 0) == 2.0);
  CHECK(mapped.at(0, 1) == 0.0);
}

TEST_CASE("separable blobs train to perfect accuracy") {
  const FeatureTable t = blob_table(15, 4, 8, 1001);
  const LinearModel m = train_linear(t, 5);
  CHECK(m.c_reg == 1.0);
  CHECK(m.num_classes == 4);
  CHECK(m.cols == 8);
  CHECK(accuracy(m, t) == 100.0);
}

TEST_CASE("training is bitwise deterministic for equal seeds") {
  const FeatureTable t = blob_table(10, 3, 6, 1002, 0.3);
  const LinearModel a = train_linear(t, 9);
  const LinearModel b = train_linear(t, 9);
  CHECK(a.weights == b.weights);
  CHECK(a.bias == b.bias);
}

TEST_CASE("single-class training yields a constant predictor") {
  FeatureTable t(6, 3);
  Rng rng(33);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 3; ++j) t.row(i)[j] = rng.uniform();
    t.y[i] = 0;
  }
  t.finalize_labels();
  const LinearModel m = train_linear(t, 1);

  const FeatureTable probe = blob_table(5, 4, 3, 1003);
  for (int i = 0; i < probe.rows; ++i) CHECK(m.predict(probe.row(i)) == 0);
  CHECK(accuracy(m, probe) == 25.0);  // balanced four-class probe
}

TEST_CASE("accuracy agrees with a per-row tally") {
  const FeatureTable train = blob_table(12, 2, 4, 1004, 0.4);
  const FeatureTable test = blob_table(9, 2, 4, 1005, 0.4);
  const LinearModel m = train_linear(train, 2);
  int correct = 0;
  for (int i = 0; i < test.rows; ++i) {
    if (m.predict(test.row(i)) == test.y[i]) ++correct;
  }
  CHECK(accuracy(m, test) ==
        doctest::Approx(100.0 * correct / test.rows).epsilon(1e-12));
  CHECK(accuracy(m, train) == 100.0);
}

TEST_CASE("predict breaks decision ties towards the lowest class") {
  LinearModel m;
  m.num_classes = 3;
  m.cols = 2;
  m.weights = {1.0, 0.0, 1.0, 0.0, 0.0, 1.0};  // classes 0 and 1 identical
  m.bias = {0.0, 0.0, -5.0};
  const double x[2] = {2.0, 2.0};
  CHECK(m.predict(x) == 0);
}

TEST_CASE("stratified folds are balanced, disjoint and deterministic") {
  std::vector<int> labels;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 10; ++i) labels.push_back(c);
  }
  const auto folds = stratified_kfold(labels, 3, 77);
  REQUIRE(folds.size() == 3);
  std::set<int> seen;
  for (const auto& fold : folds) {
    CHECK(fold.size() == 10);
    std::map<int, int> per_class;
    for (int idx : fold) {
      CHECK(seen.insert(idx).second);  // disjoint
      ++per_class[labels[idx]];
    }
    for (const auto& [cls, count] : per_class) {
      CHECK(count >= 3);  // 10 items across 3 folds
      CHECK(count <= 4);
    }
  }
  CHECK(seen.size() == labels.size());

  // per-class sizes differ by at most one across folds
  for (int c = 0; c < 3; ++c) {
    int lo = 1 << 20, hi = 0;
    for (const auto& fold : folds) {
      int n = 0;
      for (int idx : fold) n += labels[idx] == c;
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
    CHECK(hi - lo <= 1);
  }

  const auto again = stratified_kfold(labels, 3, 77);
  CHECK(again == folds);
  const auto shuffled = stratified_kfold(labels, 3, 78);
  CHECK(shuffled != folds);  // different seed, different assignment

  std::vector<int> thin = {0, 0, 0, 1, 1};  // class 1 has fewer than k members
  CHECK_THROWS(stratified_kfold(thin, 3, 1));
}

TEST_CASE("uneven class sizes still split with at-most-one imbalance") {
  std::vector<int> labels(17, 0);
  for (int i = 0; i < 8; ++i) labels.push_back(1);
  const auto folds = stratified_kfold(labels, 5, 3);
  int total = 0;
  for (const auto& fold : folds) {
    int c0 = 0, c1 = 0;
    for (int idx : fold) (labels[idx] == 0 ? c0 : c1)++;
    CHECK(c0 >= 3);  // 17 over 5 folds: 3 or 4
    CHECK(c0 <= 4);
    CHECK(c1 >= 1);  // 8 over 5 folds: 1 or 2
    CHECK(c1 <= 2);
    total += c0 + c1;
  }
  CHECK(total == 25);
}

TEST_CASE("cross-validation is perfect on separable data") {
  FeatureTable t = blob_table(20, 3, 6, 1006);
  t = apply_normalizer(fit_normalizer(t), t);
  CHECK(cv_accuracy(t, 5, 13) == 100.0);
}

TEST_CASE("cross-validation on noise stays near chance") {
  int in_band = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    FeatureTable t = random_table(60, 4, 2, 5000 + seed);
    t = apply_normalizer(fit_normalizer(t), t);
    const double acc = cv_accuracy(t, 5, seed);
    CHECK(acc >= 0.0);
    CHECK(acc <= 100.0);
    if (acc >= 30.0 && acc <= 70.0) ++in_band;
  }
  CHECK(in_band >= 28);
}

TEST_CASE("cross-validation is invariant to exactly-representable affine maps") {
  // features on a 1/64 grid so 2x + 1 is exact; min-max normalisation then
  // produces bit-identical quotients and the learner sees identical input
  FeatureTable base(24, 5);
  Rng rng(88);
  for (int i = 0; i < 24; ++i) {
    for (int j = 0; j < 5; ++j) {
      base.row(i)[j] = static_cast<double>(rng.index(64)) / 64.0;
    }
    base.y[i] = i % 3;
  }
  base.finalize_labels();

  FeatureTable shifted = base;
  for (double& v : shifted.x) v = 2.0 * v + 1.0;

  const FeatureTable na = apply_normalizer(fit_normalizer(base), base);
  const FeatureTable nb = apply_normalizer(fit_normalizer(shifted), shifted);
  CHECK(na.x == nb.x);
  CHECK(cv_accuracy(na, 3, 21) == cv_accuracy(nb, 3, 21));
}

TEST_CASE("finalize_labels counts classes and rejects bad labels") {
  FeatureTable t(4, 2);
  t.y = {0, 2, 1, 2};
  t.finalize_labels();
  CHECK(t.num_classes == 3);
  FeatureTable bad(2, 2);
  bad.y = {0, -1};
  CHECK_THROWS(bad.finalize_labels());
}
