#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dps/image.hpp"

namespace dps {

/// Dense C x H x W block of single-precision values, channel-major.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t channels, std::size_t height, std::size_t width, float fill = 0.0f);
  Tensor3(std::size_t channels, std::size_t height, std::size_t width, std::vector<float> data);

  std::size_t channels() const noexcept { return channels_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t plane_size() const noexcept { return height_ * width_; }
  std::size_t size() const noexcept { return data_.size(); }

  float& at(std::size_t c, std::size_t h, std::size_t w) {
    return data_[(c * height_ + h) * width_ + w];
  }
  float at(std::size_t c, std::size_t h, std::size_t w) const {
    return data_[(c * height_ + h) * width_ + w];
  }

  std::span<float> channel(std::size_t c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const float> channel(std::size_t c) const {
    return {data_.data() + c * plane_size(), plane_size()};
  }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  bool same_shape(const Tensor3& other) const noexcept {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> data_;
};

/// Convolution kernel bank, out x in x kh x kw.
struct Kernel4 {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::vector<float> values;

  float at(std::size_t o, std::size_t i, std::size_t y, std::size_t x) const {
    return values[((o * in_channels + i) * kernel_h + y) * kernel_w + x];
  }
};

struct ConvParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Cross-correlation with zero padding. Each output element is accumulated in
// double precision in (in-channel, ky, kx) order and rounded once. An empty
// `bias` means no bias.
Tensor3 conv2d(const Tensor3& input, const Kernel4& kernels, std::span<const float> bias,
               ConvParams params = {});

Tensor3 relu(const Tensor3& input);

// Floor output-size convention unless `ceil_mode` is set; with ceil_mode a
// window must still start inside the input.
Tensor3 maxpool2d(const Tensor3& input, std::size_t kernel, std::size_t stride,
                  bool ceil_mode = false);

// Stacks the channels of `parts` in order; all parts must share H and W.
Tensor3 concat_channels(std::span<const Tensor3* const> parts);

struct InputScaling {
  float shift[3] = {0.0f, 0.0f, 0.0f};
  float scale[3] = {1.0f, 1.0f, 1.0f};
};

// Maps an RGB image in [0,1] to a 3xHxW tensor via v -> (2v - 1 - shift_c) / scale_c.
Tensor3 normalize_input(const Image& image, const InputScaling& scaling);

inline constexpr float kDefaultUnitNormEpsilon = 1e-10f;

// Divides the channel vector at every (h, w) by its Euclidean length + epsilon.
Tensor3 channel_unit_normalize(const Tensor3& t, float epsilon = kDefaultUnitNormEpsilon);

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding);
std::size_t pool_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             bool ceil_mode);

}  // namespace dps
