#include "dps/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dps/error.hpp"

namespace dps {

namespace {

std::string dims(std::size_t c, std::size_t h, std::size_t w) {
  return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

}  // namespace

Tensor3::Tensor3(std::size_t channels, std::size_t height, std::size_t width, float fill)
    : channels_(channels), height_(height), width_(width), data_(channels * height * width, fill) {}

Tensor3::Tensor3(std::size_t channels, std::size_t height, std::size_t width, std::vector<float> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  if (data_.size() != channels * height * width) {
    throw Error(ErrorCode::kDimensionMismatch,
                "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                    dims(channels, height, width));
  }
}

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding) {
  if (stride == 0) throw Error(ErrorCode::kInvalidArgument, "conv stride must be >= 1");
  if (in + 2 * padding < kernel) return 0;
  return (in + 2 * padding - kernel) / stride + 1;
}

std::size_t pool_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             bool ceil_mode) {
  if (stride == 0) throw Error(ErrorCode::kInvalidArgument, "pool stride must be >= 1");
  if (in < kernel) return 0;
  if (!ceil_mode) return (in - kernel) / stride + 1;
  std::size_t out = (in - kernel + stride - 1) / stride + 1;
  if ((out - 1) * stride >= in) --out;
  return out;
}

Tensor3 conv2d(const Tensor3& input, const Kernel4& kernels, std::span<const float> bias,
               ConvParams params) {
  if (kernels.in_channels != input.channels()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "conv2d: input channels " + std::to_string(input.channels()) +
                    " != kernel in-channels " + std::to_string(kernels.in_channels));
  }
  if (kernels.values.size() !=
      kernels.out_channels * kernels.in_channels * kernels.kernel_h * kernels.kernel_w) {
    throw Error(ErrorCode::kDimensionMismatch, "conv2d: kernel value count does not match its shape");
  }
  if (!bias.empty() && bias.size() != kernels.out_channels) {
    throw Error(ErrorCode::kDimensionMismatch,
                "conv2d: bias length " + std::to_string(bias.size()) + " != out-channels " +
                    std::to_string(kernels.out_channels));
  }
  const std::size_t stride = params.stride;
  const std::size_t pad = params.padding;
  const std::size_t out_h = conv_output_size(input.height(), kernels.kernel_h, stride, pad);
  const std::size_t out_w = conv_output_size(input.width(), kernels.kernel_w, stride, pad);
  if (out_h == 0 || out_w == 0) {
    throw Error(ErrorCode::kDimensionMismatch,
                "conv2d: kernel " + std::to_string(kernels.kernel_h) + "x" +
                    std::to_string(kernels.kernel_w) + " does not fit padded input height/width " +
                    std::to_string(input.height()) + "x" + std::to_string(input.width()));
  }

  const auto in_h = static_cast<std::ptrdiff_t>(input.height());
  const auto in_w = static_cast<std::ptrdiff_t>(input.width());
  const auto s = static_cast<std::ptrdiff_t>(stride);
  const auto p = static_cast<std::ptrdiff_t>(pad);
  const auto ow = static_cast<std::ptrdiff_t>(out_w);

  // Valid output-column range per kx, shared by every row and channel.
  std::vector<std::ptrdiff_t> col_lo(kernels.kernel_w), col_hi(kernels.kernel_w);
  for (std::size_t kx = 0; kx < kernels.kernel_w; ++kx) {
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kx) - p;
    std::ptrdiff_t lo = off >= 0 ? 0 : (-off + s - 1) / s;
    std::ptrdiff_t hi = in_w - off <= 0 ? 0 : (in_w - 1 - off) / s + 1;
    col_lo[kx] = std::min(lo, ow);
    col_hi[kx] = std::clamp(hi, col_lo[kx], ow);
  }

  Tensor3 out(kernels.out_channels, out_h, out_w);
  std::vector<double> acc(out_h * out_w);
  for (std::size_t o = 0; o < kernels.out_channels; ++o) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t ic = 0; ic < kernels.in_channels; ++ic) {
      const float* plane = input.channel(ic).data();
      for (std::size_t ky = 0; ky < kernels.kernel_h; ++ky) {
        for (std::size_t kx = 0; kx < kernels.kernel_w; ++kx) {
          const double wgt = kernels.at(o, ic, ky, kx);
          const std::ptrdiff_t lo = col_lo[kx];
          const std::ptrdiff_t hi = col_hi[kx];
          const std::ptrdiff_t xoff = static_cast<std::ptrdiff_t>(kx) - p;
          for (std::size_t oy = 0; oy < out_h; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s +
                                      static_cast<std::ptrdiff_t>(ky) - p;
            if (iy < 0 || iy >= in_h) continue;
            const float* row = plane + iy * in_w;
            double* dst = acc.data() + oy * out_w;
            if (s == 1) {
              const float* src = row + xoff;
              for (std::ptrdiff_t ox = lo; ox < hi; ++ox) dst[ox] += wgt * src[ox];
            } else {
              for (std::ptrdiff_t ox = lo; ox < hi; ++ox) dst[ox] += wgt * row[ox * s + xoff];
            }
          }
        }
      }
    }
    const double b = bias.empty() ? 0.0 : bias[o];
    auto dst = out.channel(o);
    for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<float>(acc[i] + b);
  }
  return out;
}

Tensor3 relu(const Tensor3& input) {
  Tensor3 out = input;
  for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor3 maxpool2d(const Tensor3& input, std::size_t kernel, std::size_t stride, bool ceil_mode) {
  if (kernel == 0 || stride == 0) {
    throw Error(ErrorCode::kInvalidArgument, "maxpool2d: kernel and stride must be >= 1");
  }
  if (kernel > input.height() || kernel > input.width()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "maxpool2d: kernel " + std::to_string(kernel) + " exceeds spatial dims " +
                    std::to_string(input.height()) + "x" + std::to_string(input.width()));
  }
  const std::size_t out_h = pool_output_size(input.height(), kernel, stride, ceil_mode);
  const std::size_t out_w = pool_output_size(input.width(), kernel, stride, ceil_mode);
  Tensor3 out(input.channels(), out_h, out_w);
  for (std::size_t c = 0; c < input.channels(); ++c) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const std::size_t y0 = oy * stride;
      const std::size_t y1 = std::min(y0 + kernel, input.height());
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const std::size_t x0 = ox * stride;
        const std::size_t x1 = std::min(x0 + kernel, input.width());
        float m = input.at(c, y0, x0);
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x) m = std::max(m, input.at(c, y, x));
        out.at(c, oy, ox) = m;
      }
    }
  }
  return out;
}

Tensor3 concat_channels(std::span<const Tensor3* const> parts) {
  if (parts.empty()) throw Error(ErrorCode::kInvalidArgument, "concat_channels: no inputs");
  std::size_t channels = 0;
  for (const Tensor3* t : parts) {
    if (t->height() != parts[0]->height() || t->width() != parts[0]->width()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "concat_channels: height/width mismatch " + dims(t->channels(), t->height(), t->width()) +
                      " vs " + dims(parts[0]->channels(), parts[0]->height(), parts[0]->width()));
    }
    channels += t->channels();
  }
  std::vector<float> data;
  data.reserve(channels * parts[0]->plane_size());
  for (const Tensor3* t : parts) data.insert(data.end(), t->data().begin(), t->data().end());
  return Tensor3(channels, parts[0]->height(), parts[0]->width(), std::move(data));
}

Tensor3 normalize_input(const Image& image, const InputScaling& scaling) {
  Tensor3 out(3, image.height(), image.width());
  for (std::size_t c = 0; c < 3; ++c) {
    const float shift = scaling.shift[c];
    const float scale = scaling.scale[c];
    for (std::size_t y = 0; y < image.height(); ++y)
      for (std::size_t x = 0; x < image.width(); ++x)
        out.at(c, y, x) = (2.0f * image.at(y, x, c) - 1.0f - shift) / scale;
  }
  return out;
}

Tensor3 channel_unit_normalize(const Tensor3& t, float epsilon) {
  if (!(epsilon > 0.0f)) {
    throw Error(ErrorCode::kInvalidArgument, "channel_unit_normalize: epsilon must be > 0");
  }
  Tensor3 out = t;
  const std::size_t plane = t.plane_size();
  const auto src = t.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < plane; ++i) {
    double sq = 0.0;
    for (std::size_t c = 0; c < t.channels(); ++c) {
      const double v = src[c * plane + i];
      sq += v * v;
    }
    const double denom = std::sqrt(sq) + epsilon;
    for (std::size_t c = 0; c < t.channels(); ++c)
      dst[c * plane + i] = static_cast<float>(src[c * plane + i] / denom);
  }
  return out;
}

}  // namespace dps
