#pragma once

#include <vector>

#include "mtgp/image.hpp"

namespace mtgp::imageops {

// ---------------------------------------------------------------------------
// Dimensions and limits shared with the feature-learning layer.
// ---------------------------------------------------------------------------

inline constexpr int kSiftDim = 128;  // 4x4 cells x 8 orientation bins
inline constexpr int kHogDim = 64;    // 2x4 cells x 8 orientation bins
inline constexpr int kLbpDim = 59;    // 58 uniform patterns + 1 catch-all
inline constexpr int kMinDescriptorSize = 8;  // min height and width for descriptors

/// Parameter bundle for the parameterised filters. Mostly useful for
/// validating values drawn by the evolutionary layer.
struct FilterParams {
  double sigma = 1.0;   // Gaussian std-dev, [1, 3]
  int order_x = 0;      // derivative order along x, {0, 1, 2}
  int order_y = 0;      // derivative order along y, {0, 1, 2}
  int theta_index = 0;  // Gabor orientation index, {0..7} -> theta_index * pi/8
  int freq_index = 0;   // Gabor frequency index, {0..4}
  double n1 = 0.5;      // combine weight, [0, 1)
  double n2 = 0.5;      // combine weight, [0, 1)
  int pool_rows = 2;    // pooling window rows, {2, 4}
  int pool_cols = 2;    // pooling window cols, {2, 4}

  bool valid() const;
};

/// Small dense kernel; row-major, dimensions odd in both axes.
struct Kernel {
  int height = 0;
  int width = 0;
  std::vector<double> k;

  double at(int r, int c) const {
    return k[static_cast<std::size_t>(r) * width + c];
  }
};

// ---------------------------------------------------------------------------
// Kernel builders. Exposed so tests can inspect taps directly.
// ---------------------------------------------------------------------------

/// Sampled 2-D Gaussian, half-width ceil(3*sigma), renormalised to sum 1.
Kernel gaussian_kernel(double sigma);

/// 1-D Gaussian derivative taps in correlation orientation. order 0 sums to 1;
/// order 1 responds to a unit ramp with exactly 1; order 2 responds to x^2
/// with exactly 2 (zero mean). sigma > 0, order in {0, 1, 2}.
std::vector<double> gaussian_deriv_kernel_1d(double sigma, int order);

/// Radian spatial frequency for frequency index v: (pi/2) / sqrt(2)^v, v in {0..4}.
double gabor_frequency(int freq_index);

/// Real even Gabor kernel for orientation theta (radians) and frequency index.
/// Envelope sigma = pi / frequency; half-width ceil(3*sigma) capped to the cap
/// arguments; zero-DC corrected (mean subtracted).
Kernel gabor_kernel(double theta, int freq_index, int cap_half_h, int cap_half_w);

/// Sampled Laplacian-of-Gaussian, half-width ceil(3*sigma), mean subtracted.
Kernel log_kernel(double sigma);

// ---------------------------------------------------------------------------
// Filtering operators. All use reflected borders (edge pixels mirrored
// without duplicating the border sample) and preserve image size.
// ---------------------------------------------------------------------------

/// Reflected border index ("reflect 101"): -1 -> 1, n -> n-2.
int reflect_index(int i, int n);

/// Dense correlation of image with kernel (kernel is applied as given, not
/// flipped). Throws std::invalid_argument if either kernel extent is more
/// than twice the matching image extent.
Image convolve2d(const Image& img, const Kernel& kernel);

Image gaussian_filter(const Image& img, double sigma);

/// Separable Gaussian-derivative filter of orders (order_x, order_y).
/// Orders (0,0) reproduce gaussian_filter exactly.
Image gaussian_derivative(const Image& img, double sigma, int order_x, int order_y);

Image gabor_filter(const Image& img, double theta, int freq_index);

/// Fixed 3x3 Laplacian [[0,1,0],[1,-4,1],[0,1,0]].
Image laplacian(const Image& img);

Image log_filter(const Image& img, double sigma);

enum class SobelMode { X, Y, Magnitude };
Image sobel(const Image& img, SobelMode mode);

enum class WindowStat { Median, Mean, Min, Max };
/// 3x3 sliding-window statistic with reflected borders.
Image window_filter(const Image& img, WindowStat stat);

/// Per-pixel LBP code (8 neighbours, radius 1, reflected borders), divided by
/// 255 so output stays in [0, 1]. Bit k (MSB first) is set when the k-th
/// neighbour, clockwise from the top-left, is >= the centre.
Image lbp_code_map(const Image& img);

/// Gradient magnitude from central differences, normalised by the global max
/// (all zeros if the image is constant).
Image grad_magnitude_map(const Image& img);

enum class CombineSign { Add, Sub };
/// n1*a +/- n2*b on the top-left overlap when shapes differ.
Image weighted_combine(const Image& a, double n1, const Image& b, double n2,
                       CombineSign sign);

enum class Elementwise { Relu, Sqrt };
/// relu: max(0, x). sqrt: sqrt(|x|).
Image elementwise(const Image& img, Elementwise op);

/// Non-overlapping max pooling with a k1 (rows) x k2 (cols) window; ragged
/// tails pool over the partial window. If either pooled dimension would drop
/// below kMinDescriptorSize, returns the input unchanged.
Image max_pool(const Image& img, int k1, int k2);

// ---------------------------------------------------------------------------
// Descriptors. All throw EvalError when the image is smaller than
// kMinDescriptorSize in either dimension.
// ---------------------------------------------------------------------------

/// 128-dim SIFT-style descriptor over a whole-image 4x4 grid, 8 unsigned
/// orientation bins, L2-normalised, clipped at 0.2, renormalised.
FeatVec sift_descriptor(const Image& img);

/// 64-dim HOG-style descriptor over a 2 (rows) x 4 (cols) grid, 8 unsigned
/// orientation bins, same normalise/clip rule as SIFT.
FeatVec hog_descriptor(const Image& img);

/// 59-bin uniform-LBP histogram over interior pixels, normalised to sum 1.
FeatVec lbp_histogram(const Image& img);

}  // namespace mtgp::imageops
