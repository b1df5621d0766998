#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "dps/backbone.hpp"
#include "dps/image.hpp"

namespace dps {

enum class Method { kPixelwise, kSpatial, kMean, kSort, kSpatialPlusMean, kSpatialPlusSort };
enum class Norm { kL1, kL2 };
enum class NonSpatial { kMean, kSort };

inline constexpr Method kAllMethods[] = {Method::kPixelwise, Method::kSpatial,
                                         Method::kMean,      Method::kSort,
                                         Method::kSpatialPlusMean, Method::kSpatialPlusSort};

std::string_view to_string(Method m);
std::string_view to_string(Norm n);
std::optional<Method> parse_method(std::string_view s);
std::optional<Norm> parse_norm(std::string_view s);

struct MetricConfig {
  Method method = Method::kSpatial;
  Norm norm = Norm::kL2;
  bool unit_normalize = false;
  std::optional<BackboneId> backbone;
  // Weight on the non-spatial term of the combined methods.
  double nonspatial_weight = 1.0;
  float unit_norm_epsilon = kDefaultUnitNormEpsilon;

  // pixelwise must not name a backbone; every other method must.
  void validate() const;
  // Stable identifier such as "sort/alexnet/l2" or "spatial/vgg16/l2/unit".
  std::string id() const;
};

/// Nonnegative dissimilarity; zero for identical inputs.
struct Distance {
  double value = 0.0;
  friend auto operator<=>(const Distance&, const Distance&) = default;
};

// |diff| for L1, diff^2 for L2 (no square root).
double elementwise_norm_term(double diff, Norm norm);

// Mean of the elementwise term over every pixel and channel.
Distance pixelwise_distance(const Image& a, const Image& b, Norm norm);

// sum_l 1/(C H W) sum_{c,h,w} f(a - b)
Distance spatial_distance(const FeatureStack& a, const FeatureStack& b, Norm norm);

// sum_l 1/C sum_c f(mean(a_c) - mean(b_c))
Distance mean_distance(const FeatureStack& a, const FeatureStack& b, Norm norm);

// sum_l 1/C sum_c 1/(H W) sum_i f(sortdesc(a_c)_i - sortdesc(b_c)_i)
Distance sort_distance(const FeatureStack& a, const FeatureStack& b, Norm norm);

Distance combined_distance(const FeatureStack& a, const FeatureStack& b, Norm norm,
                           NonSpatial nonspatial, double nonspatial_weight = 1.0);

FeatureStack unit_normalize(const FeatureStack& stack, float epsilon = kDefaultUnitNormEpsilon);

// Dispatches a non-pixelwise config on already-extracted stacks, applying
// unit-normalization first when the config asks for it.
Distance feature_distance(const FeatureStack& a, const FeatureStack& b, const MetricConfig& config);

// End-to-end: pixelwise configs ignore `extractor`, which may then be null.
Distance distance(const Image& a, const Image& b, const MetricConfig& config,
                  const FeatureExtractor* extractor);
Distance distance(const Image& a, const Image& b, const MetricConfig& config,
                  const WeightContainer& weights);

}  // namespace dps
