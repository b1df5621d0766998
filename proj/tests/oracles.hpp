#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance binary. Deliberately naive: no shared code with the library
// beyond its plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dps/backbone.hpp"
#include "dps/image.hpp"
#include "dps/tensor.hpp"

namespace oracle {

inline dps::Tensor3 random_tensor(std::mt19937_64& rng, std::size_t c, std::size_t h, std::size_t w,
                                  float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  dps::Tensor3 t(c, h, w);
  for (float& v : t.data()) v = u(rng);
  return t;
}

inline dps::Kernel4 random_kernels(std::mt19937_64& rng, std::size_t out, std::size_t in, std::size_t kh,
                                   std::size_t kw) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  dps::Kernel4 k{out, in, kh, kw, std::vector<float>(out * in * kh * kw)};
  for (float& v : k.values) v = u(rng);
  return k;
}

inline dps::Image random_image(std::mt19937_64& rng, std::size_t h, std::size_t w) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  dps::Image img(h, w);
  for (float& v : img.pixels()) v = u(rng);
  return img;
}

// Sliding window, one output element at a time, padding handled by bounds test.
inline std::vector<double> naive_conv(const dps::Tensor3& x, const dps::Kernel4& k, const std::vector<float>& bias,
                                      std::size_t stride, std::size_t pad, std::size_t& oh, std::size_t& ow) {
  const long H = static_cast<long>(x.height()), W = static_cast<long>(x.width());
  oh = static_cast<std::size_t>((H + 2 * static_cast<long>(pad) - static_cast<long>(k.kernel_h)) /
                                static_cast<long>(stride) + 1);
  ow = static_cast<std::size_t>((W + 2 * static_cast<long>(pad) - static_cast<long>(k.kernel_w)) /
                                static_cast<long>(stride) + 1);
  std::vector<double> out(k.out_channels * oh * ow);
  for (std::size_t o = 0; o < k.out_channels; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xo = 0; xo < ow; ++xo) {
        double s = bias.empty() ? 0.0 : bias[o];
        for (std::size_t i = 0; i < k.in_channels; ++i)
          for (std::size_t ky = 0; ky < k.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < k.kernel_w; ++kx) {
              const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(xo * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;
              s += static_cast<double>(x.at(i, iy, ix)) * k.at(o, i, ky, kx);
            }
        out[(o * oh + y) * ow + xo] = s;
      }
  return out;
}

inline dps::Tensor3 naive_maxpool(const dps::Tensor3& x, std::size_t kernel, std::size_t stride) {
  const std::size_t oh = (x.height() - kernel) / stride + 1;
  const std::size_t ow = (x.width() - kernel) / stride + 1;
  dps::Tensor3 out(x.channels(), oh, ow);
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xo = 0; xo < ow; ++xo) {
        float m = x.at(c, y * stride, xo * stride);
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) m = std::max(m, x.at(c, y * stride + ky, xo * stride + kx));
        out.at(c, y, xo) = m;
      }
  return out;
}

inline dps::Tensor3 circular_shift(const dps::Tensor3& t, std::size_t dy, std::size_t dx) {
  dps::Tensor3 out(t.channels(), t.height(), t.width());
  for (std::size_t c = 0; c < t.channels(); ++c)
    for (std::size_t y = 0; y < t.height(); ++y)
      for (std::size_t x = 0; x < t.width(); ++x)
        out.at(c, (y + dy) % t.height(), (x + dx) % t.width()) = t.at(c, y, x);
  return out;
}

// Closed-form output sizes of the three trunks, written out layer by layer.
inline std::size_t conv_size(std::size_t n, std::size_t k, std::size_t s, std::size_t p) {
  return (n + 2 * p - k) / s + 1;
}
inline std::size_t pool_floor(std::size_t n, std::size_t k, std::size_t s) { return (n - k) / s + 1; }
inline std::size_t pool_ceil(std::size_t n, std::size_t k, std::size_t s) {
  std::size_t o = (n - k + s - 1) / s + 1;
  if ((o - 1) * s >= n) --o;
  return o;
}

inline std::vector<dps::Shape3> expected_taps(dps::BackboneId id, std::size_t n) {
  using dps::BackboneId;
  std::vector<dps::Shape3> taps;
  if (id == BackboneId::kAlexNet) {
    const std::size_t a = conv_size(n, 11, 4, 2);
    const std::size_t b = pool_floor(a, 3, 2);
    const std::size_t c = pool_floor(b, 3, 2);
    taps = {{64, a, a}, {192, b, b}, {384, c, c}, {256, c, c}, {256, c, c}};
  } else if (id == BackboneId::kVgg16) {
    taps = {{64, n, n}, {128, n / 2, n / 2}, {256, n / 4, n / 4}, {512, n / 8, n / 8}, {512, n / 16, n / 16}};
  } else {
    const std::size_t a = conv_size(n, 3, 2, 0);
    const std::size_t b = pool_ceil(a, 3, 2);
    const std::size_t c = pool_ceil(b, 3, 2);
    const std::size_t d = pool_ceil(c, 3, 2);
    taps = {{64, a, a}, {128, b, b}, {256, c, c}, {384, d, d}, {384, d, d}, {512, d, d}, {512, d, d}};
  }
  return taps;
}

// f applied positionwise after pairing a_i with b_perm[i].
inline double paired_cost(const std::vector<double>& a, const std::vector<double>& b, const std::vector<int>& perm,
                          bool l2) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[static_cast<std::size_t>(perm[i])];
    s += l2 ? d * d : std::abs(d);
  }
  return s;
}

// Average precision of relevance flags listed in rank order.
inline double ap_of_ranking(const std::vector<bool>& relevant_in_rank_order) {
  double hits = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < relevant_in_rank_order.size(); ++i) {
    if (!relevant_in_rank_order[i]) continue;
    hits += 1.0;
    sum += hits / static_cast<double>(i + 1);
  }
  return hits > 0 ? sum / hits : 0.0;
}

// All s relevant items ranked last among n: (1/s) sum_{i=1..s} i / (n - s + i).
inline double worst_case_ap(std::size_t s, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 1; i <= s; ++i) sum += static_cast<double>(i) / static_cast<double>(n - s + i);
  return sum / static_cast<double>(s);
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dps_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
