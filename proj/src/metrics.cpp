#include "dps/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dps/error.hpp"

namespace dps {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kPixelwise: return "pixelwise";
    case Method::kSpatial: return "spatial";
    case Method::kMean: return "mean";
    case Method::kSort: return "sort";
    case Method::kSpatialPlusMean: return "spatial+mean";
    case Method::kSpatialPlusSort: return "spatial+sort";
  }
  return "unknown";
}

std::string_view to_string(Norm n) { return n == Norm::kL1 ? "l1" : "l2"; }

std::optional<Method> parse_method(std::string_view s) {
  for (Method m : kAllMethods)
    if (to_string(m) == s) return m;
  return std::nullopt;
}

std::optional<Norm> parse_norm(std::string_view s) {
  if (s == "l1" || s == "L1") return Norm::kL1;
  if (s == "l2" || s == "L2") return Norm::kL2;
  return std::nullopt;
}

void MetricConfig::validate() const {
  if (method == Method::kPixelwise && backbone) {
    throw Error(ErrorCode::kInvalidArgument, "pixelwise metric takes no backbone");
  }
  if (method != Method::kPixelwise && !backbone) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(to_string(method)) + " metric requires a backbone");
  }
  if (!(nonspatial_weight >= 0.0) || !std::isfinite(nonspatial_weight)) {
    throw Error(ErrorCode::kInvalidArgument, "nonspatial weight must be finite and >= 0");
  }
  if (!(unit_norm_epsilon > 0.0f)) {
    throw Error(ErrorCode::kInvalidArgument, "unit-normalization epsilon must be > 0");
  }
}

std::string MetricConfig::id() const {
  std::string s(to_string(method));
  if (backbone) s += "/" + std::string(to_string(*backbone));
  s += "/" + std::string(to_string(norm));
  if (unit_normalize) s += "/unit";
  if (nonspatial_weight != 1.0 &&
      (method == Method::kSpatialPlusMean || method == Method::kSpatialPlusSort)) {
    s += "/w=" + std::to_string(nonspatial_weight);
  }
  return s;
}

double elementwise_norm_term(double diff, Norm norm) {
  return norm == Norm::kL1 ? std::abs(diff) : diff * diff;
}

namespace {

void require_same_shape(const FeatureStack& a, const FeatureStack& b, const char* what) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch, std::string(what) + ": stacks have " +
                                                   std::to_string(a.size()) + " vs " +
                                                   std::to_string(b.size()) + " layers");
  }
  for (std::size_t l = 0; l < a.size(); ++l) {
    const Tensor3& x = a.entries[l].tensor;
    const Tensor3& y = b.entries[l].tensor;
    if (!x.same_shape(y)) {
      throw Error(ErrorCode::kDimensionMismatch,
                  std::string(what) + ": layer " + std::to_string(l) + " shape " +
                      std::to_string(x.channels()) + "x" + std::to_string(x.height()) + "x" +
                      std::to_string(x.width()) + " vs " + std::to_string(y.channels()) + "x" +
                      std::to_string(y.height()) + "x" + std::to_string(y.width()));
    }
    if (x.size() == 0) {
      throw Error(ErrorCode::kDimensionMismatch, std::string(what) + ": empty layer " + std::to_string(l));
    }
  }
}

// Summed in sorted order so any spatial permutation yields the identical
// double, which keeps mean_distance exactly zero on permuted channels.
double channel_mean(std::span<const float> values, std::vector<float>& scratch) {
  scratch.assign(values.begin(), values.end());
  std::sort(scratch.begin(), scratch.end());
  double sum = 0.0;
  for (float v : scratch) sum += v;
  return sum / static_cast<double>(values.size());
}

}  // namespace

Distance pixelwise_distance(const Image& a, const Image& b, Norm norm) {
  if (!a.same_size(b)) {
    throw Error(ErrorCode::kDimensionMismatch,
                "pixelwise_distance: image sizes " + std::to_string(a.height()) + "x" +
                    std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                    std::to_string(b.width()));
  }
  if (a.empty()) throw Error(ErrorCode::kDimensionMismatch, "pixelwise_distance: empty images");
  double sum = 0.0;
  const auto& pa = a.pixels();
  const auto& pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i)
    sum += elementwise_norm_term(static_cast<double>(pa[i]) - pb[i], norm);
  return {sum / static_cast<double>(pa.size())};
}

Distance spatial_distance(const FeatureStack& a, const FeatureStack& b, Norm norm) {
  require_same_shape(a, b, "spatial_distance");
  double total = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) {
    const auto x = a.entries[l].tensor.data();
    const auto y = b.entries[l].tensor.data();
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
      sum += elementwise_norm_term(static_cast<double>(x[i]) - y[i], norm);
    total += sum / static_cast<double>(x.size());
  }
  return {total};
}

Distance mean_distance(const FeatureStack& a, const FeatureStack& b, Norm norm) {
  require_same_shape(a, b, "mean_distance");
  double total = 0.0;
  std::vector<float> scratch;
  for (std::size_t l = 0; l < a.size(); ++l) {
    const Tensor3& x = a.entries[l].tensor;
    const Tensor3& y = b.entries[l].tensor;
    double sum = 0.0;
    for (std::size_t c = 0; c < x.channels(); ++c)
      sum += elementwise_norm_term(
          channel_mean(x.channel(c), scratch) - channel_mean(y.channel(c), scratch), norm);
    total += sum / static_cast<double>(x.channels());
  }
  return {total};
}

Distance sort_distance(const FeatureStack& a, const FeatureStack& b, Norm norm) {
  require_same_shape(a, b, "sort_distance");
  double total = 0.0;
  std::vector<float> xs, ys;
  for (std::size_t l = 0; l < a.size(); ++l) {
    const Tensor3& x = a.entries[l].tensor;
    const Tensor3& y = b.entries[l].tensor;
    const std::size_t plane = x.plane_size();
    double layer = 0.0;
    for (std::size_t c = 0; c < x.channels(); ++c) {
      xs.assign(x.channel(c).begin(), x.channel(c).end());
      ys.assign(y.channel(c).begin(), y.channel(c).end());
      std::stable_sort(xs.begin(), xs.end(), std::greater<>());
      std::stable_sort(ys.begin(), ys.end(), std::greater<>());
      double sum = 0.0;
      for (std::size_t i = 0; i < plane; ++i)
        sum += elementwise_norm_term(static_cast<double>(xs[i]) - ys[i], norm);
      layer += sum / static_cast<double>(plane);
    }
    total += layer / static_cast<double>(x.channels());
  }
  return {total};
}

Distance combined_distance(const FeatureStack& a, const FeatureStack& b, Norm norm,
                           NonSpatial nonspatial, double nonspatial_weight) {
  const Distance spatial = spatial_distance(a, b, norm);
  const Distance other =
      nonspatial == NonSpatial::kMean ? mean_distance(a, b, norm) : sort_distance(a, b, norm);
  return {spatial.value + nonspatial_weight * other.value};
}

FeatureStack unit_normalize(const FeatureStack& stack, float epsilon) {
  FeatureStack out;
  out.entries.reserve(stack.size());
  for (const auto& e : stack.entries)
    out.entries.push_back({e.layer, channel_unit_normalize(e.tensor, epsilon)});
  return out;
}

namespace {

Distance dispatch(const FeatureStack& a, const FeatureStack& b, const MetricConfig& config) {
  switch (config.method) {
    case Method::kSpatial: return spatial_distance(a, b, config.norm);
    case Method::kMean: return mean_distance(a, b, config.norm);
    case Method::kSort: return sort_distance(a, b, config.norm);
    case Method::kSpatialPlusMean:
      return combined_distance(a, b, config.norm, NonSpatial::kMean, config.nonspatial_weight);
    case Method::kSpatialPlusSort:
      return combined_distance(a, b, config.norm, NonSpatial::kSort, config.nonspatial_weight);
    case Method::kPixelwise: break;
  }
  throw Error(ErrorCode::kInvalidArgument, "pixelwise metric has no feature-level form");
}

}  // namespace

Distance feature_distance(const FeatureStack& a, const FeatureStack& b, const MetricConfig& config) {
  if (!config.unit_normalize) return dispatch(a, b, config);
  return dispatch(unit_normalize(a, config.unit_norm_epsilon),
                  unit_normalize(b, config.unit_norm_epsilon), config);
}

Distance distance(const Image& a, const Image& b, const MetricConfig& config,
                  const FeatureExtractor* extractor) {
  config.validate();
  if (config.method == Method::kPixelwise) return pixelwise_distance(a, b, config.norm);
  if (!a.same_size(b)) {
    throw Error(ErrorCode::kDimensionMismatch, "distance: images differ in size");
  }
  if (!extractor) throw Error(ErrorCode::kInvalidArgument, "distance: no feature extractor");
  if (extractor->spec().id != *config.backbone) {
    throw Error(ErrorCode::kShapeMismatch,
                "distance: config wants " + std::string(to_string(*config.backbone)) +
                    " but weights are for " + std::string(to_string(extractor->spec().id)));
  }
  return feature_distance(extractor->extract(a), extractor->extract(b), config);
}

Distance distance(const Image& a, const Image& b, const MetricConfig& config,
                  const WeightContainer& weights) {
  config.validate();
  if (config.method == Method::kPixelwise) return pixelwise_distance(a, b, config.norm);
  const FeatureExtractor extractor(builtin_backbone(*config.backbone), weights);
  return distance(a, b, config, &extractor);
}

}  // namespace dps
