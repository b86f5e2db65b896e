#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtgp {

/// Grayscale image, row-major doubles. Pixel values are nominally in [0, 1]
/// for inputs; intermediate results of filtering may leave that range.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pix;

  Image() = default;

  Image(int h, int w, double fill = 0.0) : height(h), width(w) {
    if (h <= 0 || w <= 0) {
      throw std::invalid_argument("Image: dimensions must be positive");
    }
    pix.assign(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill);
  }

  double& at(int r, int c) {
    return pix[static_cast<std::size_t>(r) * width + c];
  }
  double at(int r, int c) const {
    return pix[static_cast<std::size_t>(r) * width + c];
  }

  std::size_t size() const { return pix.size(); }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width;
  }
};

/// Flat feature vector produced by descriptor nodes and tree evaluation.
using FeatVec = std::vector<double>;

/// Raised when evaluating a feature tree on a concrete image fails
/// (image too small for a descriptor, oversized kernel, non-finite values).
/// Evolution treats it as "worst fitness", not as a crash.
class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mtgp
