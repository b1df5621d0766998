#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dps/image.hpp"
#include "dps/tensor.hpp"
#include "dps/weights.hpp"

namespace dps {

enum class BackboneId { kSqueezeNet, kAlexNet, kVgg16 };

std::string_view to_string(BackboneId id);
std::optional<BackboneId> parse_backbone_id(std::string_view name);
inline constexpr BackboneId kAllBackbones[] = {BackboneId::kSqueezeNet, BackboneId::kAlexNet,
                                               BackboneId::kVgg16};

enum class LayerKind { kConv, kRelu, kMaxPool, kConcat };

struct LayerDesc {
  LayerKind kind = LayerKind::kRelu;
  std::string name;
  // Indices of producing layers; empty means "the previous layer" (or the
  // normalized image for layer 0).
  std::vector<std::size_t> inputs;
  std::size_t in_channels = 0;   // conv
  std::size_t out_channels = 0;  // conv
  std::size_t kernel = 0;        // conv, maxpool
  std::size_t stride = 1;        // conv, maxpool
  std::size_t padding = 0;       // conv
  bool ceil_mode = false;        // maxpool
};

struct BackboneSpec {
  BackboneId id = BackboneId::kAlexNet;
  std::vector<LayerDesc> layers;
  std::vector<std::size_t> taps;

  std::size_t conv_count() const;
};

struct Shape3 {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

// Parses a backbone description from JSON text and validates it.
BackboneSpec parse_backbone_spec(std::string_view json_text);
BackboneSpec load_backbone_spec(const std::filesystem::path& path);

// The bundled description for `id` (compiled in from data/backbones).
const BackboneSpec& builtin_backbone(BackboneId id);

// Checks tap ordering, tap kinds, input references and the channel chain.
void validate_spec(const BackboneSpec& spec);

// Output shape of every layer for a 3 x height x width input.
std::vector<Shape3> shape_chain(const BackboneSpec& spec, std::size_t height, std::size_t width);
std::vector<Shape3> tap_shapes(const BackboneSpec& spec, std::size_t height, std::size_t width);

// Every conv layer needs "<name>.weight" (out,in,k,k) and "<name>.bias" (out);
// extra records are rejected as well.
void validate_weights(const WeightContainer& weights, const BackboneSpec& spec);

// Reads a container and validates it against the bundled architecture it names.
WeightContainer load_weights(const std::filesystem::path& path);

// He-normal kernels and zero biases drawn from `seed`.
WeightContainer make_synthetic_weights(const BackboneSpec& spec, std::uint64_t seed,
                                       const InputScaling& scaling = {});

struct FeatureEntry {
  std::string layer;
  Tensor3 tensor;
  friend bool operator==(const FeatureEntry&, const FeatureEntry&) = default;
};

struct FeatureStack {
  std::vector<FeatureEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  bool same_shape(const FeatureStack& other) const;
  friend bool operator==(const FeatureStack&, const FeatureStack&) = default;
};

inline constexpr std::size_t kMinExtractSize = 32;

/// Weights bound to a backbone description, ready to run. Immutable once built, so one
/// instance can serve concurrent `extract` calls.
class FeatureExtractor {
 public:
  FeatureExtractor(BackboneSpec spec, const WeightContainer& weights);

  const BackboneSpec& spec() const noexcept { return spec_; }
  const InputScaling& scaling() const noexcept { return scaling_; }

  FeatureStack extract(const Image& image) const;
  // Output of every layer, for inspection tools.
  std::vector<Tensor3> run_all(const Image& image) const;

 private:
  struct ConvWeights {
    Kernel4 kernels;
    std::vector<float> bias;
  };

  std::vector<Tensor3> run(const Image& image, bool keep_all) const;

  BackboneSpec spec_;
  InputScaling scaling_;
  std::vector<ConvWeights> conv_;        // indexed by layer; empty for non-conv
  std::vector<std::size_t> last_use_;    // last layer index consuming each output
};

FeatureStack extract_features(const Image& image, const BackboneSpec& spec,
                              const WeightContainer& weights);

/// Reference activations written by the exporter for parity checks.
struct ActivationDump {
  std::string backbone_id;
  struct Sample {
    Image image;
    std::vector<Tensor3> taps;
  };
  std::vector<Sample> samples;
};

ActivationDump read_activation_dump(const std::filesystem::path& path);
void write_activation_dump(const ActivationDump& dump, const std::filesystem::path& path);

}  // namespace dps
