// Microbenchmarks for the hot paths of a run: filtering, descriptors, whole
// tree evaluation and classifier training.

#include <benchmark/benchmark.h>

#include "mtgp/gp.hpp"
#include "mtgp/imageops.hpp"
#include "mtgp/learners.hpp"
#include "mtgp/multitask.hpp"
#include "mtgp/rng.hpp"

namespace {

using namespace mtgp;

Image random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w);
  for (double& p : img.pix) p = rng.uniform();
  return img;
}

void bm_gaussian_filter(benchmark::State& state) {
  const Image img = random_image(64, 64, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(imageops::gaussian_filter(img, 2.0));
  }
}
BENCHMARK(bm_gaussian_filter);

void bm_convolve_7x7(benchmark::State& state) {
  const Image img = random_image(64, 64, 2);
  const imageops::Kernel k = imageops::gaussian_kernel(1.0);  // 7x7 taps
  for (auto _ : state) {
    benchmark::DoNotOptimize(imageops::convolve2d(img, k));
  }
}
BENCHMARK(bm_convolve_7x7);

void bm_gabor_filter(benchmark::State& state) {
  const Image img = random_image(32, 32, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(imageops::gabor_filter(img, 0.785398, 2));
  }
}
BENCHMARK(bm_gabor_filter);

void bm_sift_descriptor(benchmark::State& state) {
  const Image img = random_image(32, 32, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(imageops::sift_descriptor(img));
  }
}
BENCHMARK(bm_sift_descriptor);

void bm_lbp_histogram(benchmark::State& state) {
  const Image img = random_image(32, 32, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(imageops::lbp_histogram(img));
  }
}
BENCHMARK(bm_lbp_histogram);

void bm_eval_deep_tree(benchmark::State& state) {
  const gp::PrimitiveSet& ps = mt::primitive_set();
  const gp::TypedTree tree = gp::parse_tree(
      "Root3(LBP(Image), HOG(Gabor(Sqrt(W-Sub(Gau(Image, 1), 0.79, "
      "SobelY(Image), 0.994)), 2, 3)), SIFT(LoG1(LBP-F(Med(Min(Image))))))",
      ps);
  const Image img = random_image(32, 32, 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gp::eval_tree(tree, ps, img));
  }
}
BENCHMARK(bm_eval_deep_tree);

void bm_train_linear(benchmark::State& state) {
  Rng rng(7);
  learn::FeatureTable table(60, 192);
  for (int i = 0; i < table.rows; ++i) {
    table.y[i] = i % 4;
    for (int j = 0; j < table.cols; ++j) {
      table.row(i)[j] = rng.uniform() + (j % 4 == table.y[i] ? 0.5 : 0.0);
    }
  }
  table.finalize_labels();
  for (auto _ : state) {
    benchmark::DoNotOptimize(learn::train_linear(table, 42));
  }
}
BENCHMARK(bm_train_linear);

}  // namespace

BENCHMARK_MAIN();
