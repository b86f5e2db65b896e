#include "mtgp/imageops.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace mtgp::imageops {

namespace {

constexpr double kPi = 3.14159265358979323846;

int half_width_for_sigma(double sigma) {
  return static_cast<int>(std::ceil(3.0 * sigma));
}

std::vector<double> sampled_gaussian_1d(double sigma, int hw) {
  std::vector<double> g(2 * hw + 1);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int j = -hw; j <= hw; ++j) {
    g[j + hw] = std::exp(-static_cast<double>(j) * j * inv);
  }
  return g;
}

// Horizontal correlation pass with a centred 1-D kernel, reflected borders.
Image correlate_rows(const Image& in, const std::vector<double>& k) {
  const int hw = static_cast<int>(k.size()) / 2;
  Image out(in.height, in.width);
  for (int r = 0; r < in.height; ++r) {
    const double* row = &in.pix[static_cast<std::size_t>(r) * in.width];
    double* orow = &out.pix[static_cast<std::size_t>(r) * in.width];
    const int lo = std::min(hw, in.width);
    const int hi = std::max(lo, in.width - hw);
    for (int c = 0; c < lo; ++c) {
      double s = 0.0;
      for (int j = -hw; j <= hw; ++j) {
        s += k[j + hw] * row[reflect_index(c + j, in.width)];
      }
      orow[c] = s;
    }
    for (int c = lo; c < hi; ++c) {
      double s = 0.0;
      for (int j = -hw; j <= hw; ++j) s += k[j + hw] * row[c + j];
      orow[c] = s;
    }
    for (int c = hi; c < in.width; ++c) {
      double s = 0.0;
      for (int j = -hw; j <= hw; ++j) {
        s += k[j + hw] * row[reflect_index(c + j, in.width)];
      }
      orow[c] = s;
    }
  }
  return out;
}

// Vertical correlation pass; same border rule as correlate_rows.
Image correlate_cols(const Image& in, const std::vector<double>& k) {
  const int hw = static_cast<int>(k.size()) / 2;
  Image out(in.height, in.width);
  for (int r = 0; r < in.height; ++r) {
    const bool interior = (r - hw >= 0) && (r + hw < in.height);
    double* orow = &out.pix[static_cast<std::size_t>(r) * in.width];
    if (interior) {
      for (int c = 0; c < in.width; ++c) {
        double s = 0.0;
        for (int j = -hw; j <= hw; ++j) {
          s += k[j + hw] * in.at(r + j, c);
        }
        orow[c] = s;
      }
    } else {
      for (int c = 0; c < in.width; ++c) {
        double s = 0.0;
        for (int j = -hw; j <= hw; ++j) {
          s += k[j + hw] * in.at(reflect_index(r + j, in.height), c);
        }
        orow[c] = s;
      }
    }
  }
  return out;
}

Kernel kernel_3x3(std::array<double, 9> taps) {
  Kernel k;
  k.height = 3;
  k.width = 3;
  k.k.assign(taps.begin(), taps.end());
  return k;
}

// Central-difference gradients, reflected borders, shared by the gradient
// magnitude map and the SIFT/HOG descriptors.
void central_gradients(const Image& img, Image& gx, Image& gy) {
  gx = Image(img.height, img.width);
  gy = Image(img.height, img.width);
  for (int r = 0; r < img.height; ++r) {
    const int rm = reflect_index(r - 1, img.height);
    const int rp = reflect_index(r + 1, img.height);
    for (int c = 0; c < img.width; ++c) {
      const int cm = reflect_index(c - 1, img.width);
      const int cp = reflect_index(c + 1, img.width);
      gx.at(r, c) = (img.at(r, cp) - img.at(r, cm)) / 2.0;
      gy.at(r, c) = (img.at(rp, c) - img.at(rm, c)) / 2.0;
    }
  }
}

// Unsigned orientation bin in [0, 8) for a gradient vector.
int orientation_bin(double gx, double gy) {
  double ang = std::atan2(gy, gx);
  if (ang < 0.0) ang += kPi;
  if (ang >= kPi) ang -= kPi;
  int bin = static_cast<int>(ang * (8.0 / kPi));
  if (bin > 7) bin = 7;
  return bin;
}

// L2-normalise, clip components at 0.2, renormalise. Zero vectors pass
// through untouched.
void normalise_clip(FeatVec& v) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  if (n2 <= 0.0) return;
  double inv = 1.0 / std::sqrt(n2);
  for (double& x : v) x *= inv;
  for (double& x : v) x = std::min(x, 0.2);
  n2 = 0.0;
  for (double x : v) n2 += x * x;
  if (n2 <= 0.0) return;
  inv = 1.0 / std::sqrt(n2);
  for (double& x : v) x *= inv;
}

void require_descriptor_size(const Image& img, const char* what) {
  if (img.height < kMinDescriptorSize || img.width < kMinDescriptorSize) {
    throw EvalError(std::string(what) + ": image " + std::to_string(img.height) +
                    "x" + std::to_string(img.width) + " is below the minimum " +
                    std::to_string(kMinDescriptorSize) + "x" +
                    std::to_string(kMinDescriptorSize));
  }
}

// Uniform-LBP bin lookup: codes with at most two 0/1 transitions around the
// circle get their own bin (58 of them, in ascending code order); everything
// else shares bin 58.
const std::array<int, 256>& uniform_lbp_bins() {
  static const std::array<int, 256> table = [] {
    std::array<int, 256> t{};
    int next = 0;
    for (int code = 0; code < 256; ++code) {
      const unsigned c = static_cast<unsigned>(code);
      const unsigned rot = ((c << 1) | (c >> 7)) & 0xffu;
      const int transitions = std::popcount(c ^ rot);
      t[code] = (transitions <= 2) ? next++ : kLbpDim - 1;
    }
    return t;
  }();
  return table;
}

// Neighbour offsets clockwise from the top-left; first neighbour maps to the
// most significant bit of the code.
constexpr std::array<std::pair<int, int>, 8> kLbpOffsets = {{
    {-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1},
}};

int lbp_code_at(const Image& img, int r, int c) {
  const double centre = img.at(r, c);
  int code = 0;
  for (int k = 0; k < 8; ++k) {
    const int nr = reflect_index(r + kLbpOffsets[k].first, img.height);
    const int nc = reflect_index(c + kLbpOffsets[k].second, img.width);
    if (img.at(nr, nc) >= centre) code |= 1 << (7 - k);
  }
  return code;
}

}  // namespace

bool FilterParams::valid() const {
  auto in = [](int v, int lo, int hi) { return v >= lo && v <= hi; };
  return sigma >= 1.0 && sigma <= 3.0 && in(order_x, 0, 2) && in(order_y, 0, 2) &&
         in(theta_index, 0, 7) && in(freq_index, 0, 4) && n1 >= 0.0 && n1 < 1.0 &&
         n2 >= 0.0 && n2 < 1.0 && (pool_rows == 2 || pool_rows == 4) &&
         (pool_cols == 2 || pool_cols == 4);
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

Image convolve2d(const Image& img, const Kernel& kernel) {
  if (kernel.height <= 0 || kernel.width <= 0 || kernel.height % 2 == 0 ||
      kernel.width % 2 == 0) {
    throw std::invalid_argument("convolve2d: kernel extents must be odd and positive");
  }
  if (kernel.height > 2 * img.height || kernel.width > 2 * img.width) {
    throw std::invalid_argument(
        "convolve2d: kernel " + std::to_string(kernel.height) + "x" +
        std::to_string(kernel.width) + " exceeds twice the image extent " +
        std::to_string(img.height) + "x" + std::to_string(img.width));
  }
  const int ch = kernel.height / 2;
  const int cw = kernel.width / 2;
  Image out(img.height, img.width);
  for (int r = 0; r < img.height; ++r) {
    const bool row_interior = (r - ch >= 0) && (r + ch < img.height);
    const int lo = std::min(cw, img.width);
    const int hi = std::max(lo, img.width - cw);
    for (int c = 0; c < img.width; ++c) {
      double s = 0.0;
      if (row_interior && c >= lo && c < hi) {
        const double* kp = kernel.k.data();
        for (int j = -ch; j <= ch; ++j) {
          const double* row = &img.pix[static_cast<std::size_t>(r + j) * img.width + c];
          for (int i = -cw; i <= cw; ++i) s += *kp++ * row[i];
        }
      } else {
        const double* kp = kernel.k.data();
        for (int j = -ch; j <= ch; ++j) {
          const int rr = reflect_index(r + j, img.height);
          const double* row = &img.pix[static_cast<std::size_t>(rr) * img.width];
          for (int i = -cw; i <= cw; ++i) {
            s += *kp++ * row[reflect_index(c + i, img.width)];
          }
        }
      }
      out.at(r, c) = s;
    }
  }
  return out;
}

Kernel gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be > 0");
  const int hw = half_width_for_sigma(sigma);
  Kernel k;
  k.height = k.width = 2 * hw + 1;
  k.k.resize(static_cast<std::size_t>(k.height) * k.width);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  double sum = 0.0;
  for (int y = -hw; y <= hw; ++y) {
    for (int x = -hw; x <= hw; ++x) {
      const double v = std::exp(-(static_cast<double>(x) * x + static_cast<double>(y) * y) * inv);
      k.k[static_cast<std::size_t>(y + hw) * k.width + (x + hw)] = v;
      sum += v;
    }
  }
  for (double& v : k.k) v /= sum;
  return k;
}

std::vector<double> gaussian_deriv_kernel_1d(double sigma, int order) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("gaussian_deriv_kernel_1d: sigma must be > 0");
  }
  if (order < 0 || order > 2) {
    throw std::invalid_argument("gaussian_deriv_kernel_1d: order must be 0, 1 or 2");
  }
  const int hw = half_width_for_sigma(sigma);
  std::vector<double> g = sampled_gaussian_1d(sigma, hw);
  std::vector<double> k(g.size());
  const int n = 2 * hw + 1;
  if (order == 0) {
    double sum = 0.0;
    for (double v : g) sum += v;
    for (int i = 0; i < n; ++i) k[i] = g[i] / sum;
    return k;
  }
  if (order == 1) {
    // Correlation orientation: positive taps on the right so an increasing
    // ramp gives a positive response. Normalised so the response to a unit
    // ramp is exactly 1.
    double m1 = 0.0;
    for (int j = -hw; j <= hw; ++j) {
      k[j + hw] = static_cast<double>(j) * g[j + hw];
      m1 += static_cast<double>(j) * k[j + hw];
    }
    for (double& v : k) v /= m1;
    return k;
  }
  // order == 2: sampled second derivative, then corrected to zero mean and a
  // second moment matching the continuous operator (response to x^2 is 2).
  const double s2 = sigma * sigma;
  double sum = 0.0;
  for (int j = -hw; j <= hw; ++j) {
    k[j + hw] = (static_cast<double>(j) * j - s2) / (s2 * s2) * g[j + hw];
    sum += k[j + hw];
  }
  const double mean = sum / n;
  double m2 = 0.0;
  for (int j = -hw; j <= hw; ++j) {
    k[j + hw] -= mean;
    m2 += static_cast<double>(j) * j * k[j + hw];
  }
  for (double& v : k) v *= 2.0 / m2;
  return k;
}

double gabor_frequency(int freq_index) {
  if (freq_index < 0 || freq_index > 4) {
    throw std::invalid_argument("gabor_frequency: index must be in 0..4");
  }
  return (kPi / 2.0) / std::pow(std::sqrt(2.0), freq_index);
}

Kernel gabor_kernel(double theta, int freq_index, int cap_half_h, int cap_half_w) {
  const double f = gabor_frequency(freq_index);
  const double sigma = kPi / f;
  const int want = half_width_for_sigma(sigma);
  const int hh = std::max(1, std::min(want, cap_half_h));
  const int hww = std::max(1, std::min(want, cap_half_w));
  Kernel k;
  k.height = 2 * hh + 1;
  k.width = 2 * hww + 1;
  k.k.resize(static_cast<std::size_t>(k.height) * k.width);
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  double sum = 0.0;
  for (int y = -hh; y <= hh; ++y) {
    for (int x = -hww; x <= hww; ++x) {
      const double along = x * ct + y * st;
      const double v =
          std::exp(-(static_cast<double>(x) * x + static_cast<double>(y) * y) * inv) *
          std::cos(f * along);
      k.k[static_cast<std::size_t>(y + hh) * k.width + (x + hww)] = v;
      sum += v;
    }
  }
  // Remove the DC component so constant regions map to zero.
  const double mean = sum / static_cast<double>(k.k.size());
  for (double& v : k.k) v -= mean;
  return k;
}

Kernel log_kernel(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("log_kernel: sigma must be > 0");
  const int hw = half_width_for_sigma(sigma);
  Kernel k;
  k.height = k.width = 2 * hw + 1;
  k.k.resize(static_cast<std::size_t>(k.height) * k.width);
  const double s2 = sigma * sigma;
  const double norm = -1.0 / (kPi * s2 * s2);
  double sum = 0.0;
  for (int y = -hw; y <= hw; ++y) {
    for (int x = -hw; x <= hw; ++x) {
      const double r2 = static_cast<double>(x) * x + static_cast<double>(y) * y;
      const double v = norm * (1.0 - r2 / (2.0 * s2)) * std::exp(-r2 / (2.0 * s2));
      k.k[static_cast<std::size_t>(y + hw) * k.width + (x + hw)] = v;
      sum += v;
    }
  }
  const double mean = sum / static_cast<double>(k.k.size());
  for (double& v : k.k) v -= mean;
  return k;
}

Image gaussian_filter(const Image& img, double sigma) {
  return gaussian_derivative(img, sigma, 0, 0);
}

Image gaussian_derivative(const Image& img, double sigma, int order_x, int order_y) {
  const std::vector<double> kx = gaussian_deriv_kernel_1d(sigma, order_x);
  const std::vector<double> ky = gaussian_deriv_kernel_1d(sigma, order_y);
  if (static_cast<int>(kx.size()) > 2 * img.width ||
      static_cast<int>(ky.size()) > 2 * img.height) {
    throw std::invalid_argument("gaussian_derivative: kernel exceeds twice the image extent");
  }
  return correlate_cols(correlate_rows(img, kx), ky);
}

Image gabor_filter(const Image& img, double theta, int freq_index) {
  const int cap = std::min(img.height, img.width) / 2;
  return convolve2d(img, gabor_kernel(theta, freq_index, cap, cap));
}

Image laplacian(const Image& img) {
  return convolve2d(img, kernel_3x3({0, 1, 0, 1, -4, 1, 0, 1, 0}));
}

Image log_filter(const Image& img, double sigma) {
  return convolve2d(img, log_kernel(sigma));
}

namespace {

// The standard 3x3 Sobel kernels, evaluated as a difference of two {1,2,1}
// smoothed samples. Grouping this way makes flat regions cancel exactly:
// both smoothed sums see identical values, and x - x == 0 in floating point,
// whereas a straight kernel accumulation leaves rounding residue.
double sobel_gx(const Image& img, int r, int c) {
  auto col = [&](int cc) {
    const int ci = reflect_index(cc, img.width);
    return img.at(reflect_index(r - 1, img.height), ci) + 2.0 * img.at(r, ci) +
           img.at(reflect_index(r + 1, img.height), ci);
  };
  return col(c + 1) - col(c - 1);
}

double sobel_gy(const Image& img, int r, int c) {
  auto row = [&](int rr) {
    const int ri = reflect_index(rr, img.height);
    return img.at(ri, reflect_index(c - 1, img.width)) + 2.0 * img.at(ri, c) +
           img.at(ri, reflect_index(c + 1, img.width));
  };
  return row(r + 1) - row(r - 1);
}

}  // namespace

Image sobel(const Image& img, SobelMode mode) {
  Image out(img.height, img.width);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      switch (mode) {
        case SobelMode::X:
          out.at(r, c) = sobel_gx(img, r, c);
          break;
        case SobelMode::Y:
          out.at(r, c) = sobel_gy(img, r, c);
          break;
        case SobelMode::Magnitude: {
          const double gx = sobel_gx(img, r, c);
          const double gy = sobel_gy(img, r, c);
          out.at(r, c) = std::sqrt(gx * gx + gy * gy);
          break;
        }
      }
    }
  }
  return out;
}

Image window_filter(const Image& img, WindowStat stat) {
  Image out(img.height, img.width);
  std::array<double, 9> w{};
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      int n = 0;
      for (int j = -1; j <= 1; ++j) {
        const int rr = reflect_index(r + j, img.height);
        for (int i = -1; i <= 1; ++i) {
          w[n++] = img.at(rr, reflect_index(c + i, img.width));
        }
      }
      switch (stat) {
        case WindowStat::Median:
          std::nth_element(w.begin(), w.begin() + 4, w.end());
          out.at(r, c) = w[4];
          break;
        case WindowStat::Mean: {
          double s = 0.0;
          for (double v : w) s += v;
          out.at(r, c) = s / 9.0;
          break;
        }
        case WindowStat::Min:
          out.at(r, c) = *std::min_element(w.begin(), w.end());
          break;
        case WindowStat::Max:
          out.at(r, c) = *std::max_element(w.begin(), w.end());
          break;
      }
    }
  }
  return out;
}

Image lbp_code_map(const Image& img) {
  Image out(img.height, img.width);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      out.at(r, c) = lbp_code_at(img, r, c) / 255.0;
    }
  }
  return out;
}

Image grad_magnitude_map(const Image& img) {
  Image gx, gy;
  central_gradients(img, gx, gy);
  Image out(img.height, img.width);
  double maxv = 0.0;
  for (std::size_t i = 0; i < out.pix.size(); ++i) {
    out.pix[i] = std::sqrt(gx.pix[i] * gx.pix[i] + gy.pix[i] * gy.pix[i]);
    maxv = std::max(maxv, out.pix[i]);
  }
  if (maxv > 0.0) {
    for (double& v : out.pix) v /= maxv;
  }
  return out;
}

Image weighted_combine(const Image& a, double n1, const Image& b, double n2,
                       CombineSign sign) {
  const int h = std::min(a.height, b.height);
  const int w = std::min(a.width, b.width);
  Image out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double x = n1 * a.at(r, c);
      const double y = n2 * b.at(r, c);
      out.at(r, c) = (sign == CombineSign::Add) ? x + y : x - y;
    }
  }
  return out;
}

Image elementwise(const Image& img, Elementwise op) {
  Image out(img.height, img.width);
  if (op == Elementwise::Relu) {
    for (std::size_t i = 0; i < img.pix.size(); ++i) {
      out.pix[i] = std::max(0.0, img.pix[i]);
    }
  } else {
    for (std::size_t i = 0; i < img.pix.size(); ++i) {
      out.pix[i] = std::sqrt(std::fabs(img.pix[i]));
    }
  }
  return out;
}

Image max_pool(const Image& img, int k1, int k2) {
  if (k1 <= 0 || k2 <= 0) throw std::invalid_argument("max_pool: window must be positive");
  const int oh = (img.height + k1 - 1) / k1;
  const int ow = (img.width + k2 - 1) / k2;
  if (oh < kMinDescriptorSize || ow < kMinDescriptorSize) {
    return img;  // pooling would make descriptors impossible; skip it
  }
  Image out(oh, ow);
  for (int r = 0; r < oh; ++r) {
    const int r0 = r * k1;
    const int r1 = std::min(r0 + k1, img.height);
    for (int c = 0; c < ow; ++c) {
      const int c0 = c * k2;
      const int c1 = std::min(c0 + k2, img.width);
      double m = img.at(r0, c0);
      for (int rr = r0; rr < r1; ++rr) {
        for (int cc = c0; cc < c1; ++cc) m = std::max(m, img.at(rr, cc));
      }
      out.at(r, c) = m;
    }
  }
  return out;
}

FeatVec sift_descriptor(const Image& img) {
  require_descriptor_size(img, "sift_descriptor");
  Image gx, gy;
  central_gradients(img, gx, gy);
  FeatVec v(kSiftDim, 0.0);
  for (int r = 0; r < img.height; ++r) {
    const int cell_r = std::min(3, r * 4 / img.height);
    for (int c = 0; c < img.width; ++c) {
      const int cell_c = std::min(3, c * 4 / img.width);
      const double dx = gx.at(r, c);
      const double dy = gy.at(r, c);
      const double mag = std::sqrt(dx * dx + dy * dy);
      if (mag <= 0.0) continue;
      v[(cell_r * 4 + cell_c) * 8 + orientation_bin(dx, dy)] += mag;
    }
  }
  normalise_clip(v);
  return v;
}

FeatVec hog_descriptor(const Image& img) {
  require_descriptor_size(img, "hog_descriptor");
  Image gx, gy;
  central_gradients(img, gx, gy);
  FeatVec v(kHogDim, 0.0);
  for (int r = 0; r < img.height; ++r) {
    const int cell_r = std::min(1, r * 2 / img.height);
    for (int c = 0; c < img.width; ++c) {
      const int cell_c = std::min(3, c * 4 / img.width);
      const double dx = gx.at(r, c);
      const double dy = gy.at(r, c);
      const double mag = std::sqrt(dx * dx + dy * dy);
      if (mag <= 0.0) continue;
      v[(cell_r * 4 + cell_c) * 8 + orientation_bin(dx, dy)] += mag;
    }
  }
  normalise_clip(v);
  return v;
}

FeatVec lbp_histogram(const Image& img) {
  require_descriptor_size(img, "lbp_histogram");
  const auto& bins = uniform_lbp_bins();
  FeatVec v(kLbpDim, 0.0);
  int count = 0;
  for (int r = 1; r < img.height - 1; ++r) {
    for (int c = 1; c < img.width - 1; ++c) {
      v[bins[lbp_code_at(img, r, c)]] += 1.0;
      ++count;
    }
  }
  for (double& x : v) x /= count;
  return v;
}

}  // namespace mtgp::imageops
