#include "dps/backbone.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "byte_io.hpp"
#include "dps/error.hpp"

namespace dps {

// Defined in the generated backbone_data.cpp.
std::string_view builtin_backbone_json(BackboneId id);

std::string_view to_string(BackboneId id) {
  switch (id) {
    case BackboneId::kSqueezeNet: return "squeezenet";
    case BackboneId::kAlexNet: return "alexnet";
    case BackboneId::kVgg16: return "vgg16";
  }
  return "unknown";
}

std::optional<BackboneId> parse_backbone_id(std::string_view name) {
  for (BackboneId id : kAllBackbones)
    if (to_string(id) == name) return id;
  return std::nullopt;
}

std::size_t BackboneSpec::conv_count() const {
  return static_cast<std::size_t>(std::count_if(
      layers.begin(), layers.end(), [](const LayerDesc& l) { return l.kind == LayerKind::kConv; }));
}

namespace {

LayerKind parse_kind(const std::string& s) {
  if (s == "conv") return LayerKind::kConv;
  if (s == "relu") return LayerKind::kRelu;
  if (s == "maxpool") return LayerKind::kMaxPool;
  if (s == "concat") return LayerKind::kConcat;
  throw Error(ErrorCode::kParse, "backbone description: unknown layer kind \"" + s + "\"");
}

std::vector<std::size_t> resolved_inputs(const BackboneSpec& spec, std::size_t i) {
  if (!spec.layers[i].inputs.empty()) return spec.layers[i].inputs;
  if (i == 0) return {};
  return {i - 1};
}

std::string layer_label(const BackboneSpec& spec, std::size_t i) {
  return std::string(to_string(spec.id)) + " layer " + std::to_string(i) + " (" +
         spec.layers[i].name + ")";
}

}  // namespace

BackboneSpec parse_backbone_spec(std::string_view json_text) {
  BackboneSpec spec;
  try {
    const auto j = nlohmann::json::parse(json_text);
    const std::string id = j.at("id").get<std::string>();
    auto parsed = parse_backbone_id(id);
    if (!parsed) throw Error(ErrorCode::kParse, "backbone description: unknown backbone id \"" + id + "\"");
    spec.id = *parsed;
    for (const auto& jl : j.at("layers")) {
      LayerDesc l;
      l.kind = parse_kind(jl.at("kind").get<std::string>());
      l.name = jl.at("name").get<std::string>();
      l.inputs = jl.value("inputs", std::vector<std::size_t>{});
      l.in_channels = jl.value("in", std::size_t{0});
      l.out_channels = jl.value("out", std::size_t{0});
      l.kernel = jl.value("kernel", std::size_t{0});
      l.stride = jl.value("stride", std::size_t{1});
      l.padding = jl.value("padding", std::size_t{0});
      l.ceil_mode = jl.value("ceil_mode", false);
      spec.layers.push_back(std::move(l));
    }
    spec.taps = j.at("taps").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("backbone description: ") + e.what());
  }
  validate_spec(spec);
  return spec;
}

BackboneSpec load_backbone_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_backbone_spec(ss.str());
}

const BackboneSpec& builtin_backbone(BackboneId id) {
  static const BackboneSpec specs[] = {
      parse_backbone_spec(builtin_backbone_json(BackboneId::kSqueezeNet)),
      parse_backbone_spec(builtin_backbone_json(BackboneId::kAlexNet)),
      parse_backbone_spec(builtin_backbone_json(BackboneId::kVgg16)),
  };
  return specs[static_cast<int>(id)];
}

void validate_spec(const BackboneSpec& spec) {
  if (spec.layers.empty()) throw Error(ErrorCode::kInvalidArgument, "backbone spec has no layers");
  std::vector<std::size_t> channels(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& l = spec.layers[i];
    const auto inputs = resolved_inputs(spec, i);
    for (std::size_t in : inputs) {
      if (in >= i) {
        throw Error(ErrorCode::kInvalidArgument,
                    layer_label(spec, i) + " reads from a later layer " + std::to_string(in));
      }
    }
    if (l.kind == LayerKind::kConcat ? inputs.size() < 2 : inputs.size() > 1) {
      throw Error(ErrorCode::kInvalidArgument, layer_label(spec, i) + " has a bad input count");
    }
    const std::size_t in_c = inputs.empty() ? 3 : channels[inputs[0]];
    switch (l.kind) {
      case LayerKind::kConv:
        if (l.kernel == 0 || l.stride == 0 || l.out_channels == 0) {
          throw Error(ErrorCode::kInvalidArgument, layer_label(spec, i) + " has zero kernel/stride/out");
        }
        if (l.in_channels != in_c) {
          throw Error(ErrorCode::kShapeMismatch,
                      layer_label(spec, i) + " expects " + std::to_string(l.in_channels) +
                          " input channels but receives " + std::to_string(in_c));
        }
        channels[i] = l.out_channels;
        break;
      case LayerKind::kMaxPool:
        if (l.kernel == 0 || l.stride == 0) {
          throw Error(ErrorCode::kInvalidArgument, layer_label(spec, i) + " has zero kernel/stride");
        }
        channels[i] = in_c;
        break;
      case LayerKind::kRelu:
        channels[i] = in_c;
        break;
      case LayerKind::kConcat:
        channels[i] = 0;
        for (std::size_t in : inputs) channels[i] += channels[in];
        break;
    }
  }
  if (spec.taps.empty()) throw Error(ErrorCode::kInvalidArgument, "backbone spec has no taps");
  for (std::size_t t = 0; t < spec.taps.size(); ++t) {
    const std::size_t idx = spec.taps[t];
    if (idx >= spec.layers.size()) {
      throw Error(ErrorCode::kOutOfRange, "tap index " + std::to_string(idx) + " out of range");
    }
    if (t > 0 && idx <= spec.taps[t - 1]) {
      throw Error(ErrorCode::kInvalidArgument, "tap indices must be strictly increasing");
    }
    const LayerDesc& l = spec.layers[idx];
    bool post_activation = l.kind == LayerKind::kRelu;
    if (l.kind == LayerKind::kConcat) {
      post_activation = std::all_of(l.inputs.begin(), l.inputs.end(), [&](std::size_t in) {
        return spec.layers[in].kind == LayerKind::kRelu;
      });
    }
    if (!post_activation) {
      throw Error(ErrorCode::kInvalidArgument,
                  "tap " + layer_label(spec, idx) + " is not a post-activation layer");
    }
  }
}

std::vector<Shape3> shape_chain(const BackboneSpec& spec, std::size_t height, std::size_t width) {
  std::vector<Shape3> shapes(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& l = spec.layers[i];
    const auto inputs = resolved_inputs(spec, i);
    const Shape3 in = inputs.empty() ? Shape3{3, height, width} : shapes[inputs[0]];
    switch (l.kind) {
      case LayerKind::kConv:
        shapes[i] = {l.out_channels, conv_output_size(in.height, l.kernel, l.stride, l.padding),
                     conv_output_size(in.width, l.kernel, l.stride, l.padding)};
        break;
      case LayerKind::kMaxPool:
        shapes[i] = {in.channels, pool_output_size(in.height, l.kernel, l.stride, l.ceil_mode),
                     pool_output_size(in.width, l.kernel, l.stride, l.ceil_mode)};
        break;
      case LayerKind::kRelu:
        shapes[i] = in;
        break;
      case LayerKind::kConcat:
        shapes[i] = in;
        shapes[i].channels = 0;
        for (std::size_t k : inputs) shapes[i].channels += shapes[k].channels;
        break;
    }
  }
  return shapes;
}

std::vector<Shape3> tap_shapes(const BackboneSpec& spec, std::size_t height, std::size_t width) {
  const auto all = shape_chain(spec, height, width);
  std::vector<Shape3> out;
  for (std::size_t t : spec.taps) out.push_back(all[t]);
  return out;
}

void validate_weights(const WeightContainer& weights, const BackboneSpec& spec) {
  if (weights.backbone_id != to_string(spec.id)) {
    throw Error(ErrorCode::kShapeMismatch, "weights are for \"" + weights.backbone_id +
                                               "\" but the architecture is " +
                                               std::string(to_string(spec.id)));
  }
  auto expect = [&](const std::string& name, const std::vector<std::uint32_t>& dims) {
    const WeightRecord* r = weights.find(name);
    if (!r) throw Error(ErrorCode::kShapeMismatch, "missing weight record " + name);
    if (r->dims != dims) {
      std::string got, want;
      for (auto d : r->dims) got += std::to_string(d) + " ";
      for (auto d : dims) want += std::to_string(d) + " ";
      throw Error(ErrorCode::kShapeMismatch,
                  "weight record " + name + " has dims [ " + got + "], expected [ " + want + "]");
    }
  };
  for (const LayerDesc& l : spec.layers) {
    if (l.kind != LayerKind::kConv) continue;
    const auto o = static_cast<std::uint32_t>(l.out_channels);
    const auto i = static_cast<std::uint32_t>(l.in_channels);
    const auto k = static_cast<std::uint32_t>(l.kernel);
    expect(l.name + ".weight", {o, i, k, k});
    expect(l.name + ".bias", {o});
  }
  if (weights.records.size() != 2 * spec.conv_count()) {
    throw Error(ErrorCode::kShapeMismatch,
                "weight container has " + std::to_string(weights.records.size()) +
                    " records, expected " + std::to_string(2 * spec.conv_count()));
  }
  for (float v : weights.scaling.scale) {
    if (!(std::isfinite(v) && v != 0.0f)) {
      throw Error(ErrorCode::kShapeMismatch, "input scale constants must be finite and nonzero");
    }
  }
}

WeightContainer load_weights(const std::filesystem::path& path) {
  WeightContainer c = read_weight_container(path);
  const auto id = parse_backbone_id(c.backbone_id);
  if (!id) {
    throw Error(ErrorCode::kShapeMismatch,
                path.string() + ": unknown backbone id \"" + c.backbone_id + "\"");
  }
  try {
    validate_weights(c, builtin_backbone(*id));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
  return c;
}

WeightContainer make_synthetic_weights(const BackboneSpec& spec, std::uint64_t seed,
                                       const InputScaling& scaling) {
  WeightContainer c;
  c.backbone_id = std::string(to_string(spec.id));
  c.scaling = scaling;
  std::mt19937_64 rng(seed);
  for (const LayerDesc& l : spec.layers) {
    if (l.kind != LayerKind::kConv) continue;
    const std::size_t fan_in = l.in_channels * l.kernel * l.kernel;
    std::normal_distribution<float> normal(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
    WeightRecord w{l.name + ".weight",
                   {static_cast<std::uint32_t>(l.out_channels),
                    static_cast<std::uint32_t>(l.in_channels), static_cast<std::uint32_t>(l.kernel),
                    static_cast<std::uint32_t>(l.kernel)},
                   std::vector<float>(l.out_channels * fan_in)};
    for (float& v : w.values) v = normal(rng);
    c.records.push_back(std::move(w));
    c.records.push_back({l.name + ".bias", {static_cast<std::uint32_t>(l.out_channels)},
                         std::vector<float>(l.out_channels, 0.0f)});
  }
  return c;
}

bool FeatureStack::same_shape(const FeatureStack& other) const {
  if (entries.size() != other.entries.size()) return false;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (!entries[i].tensor.same_shape(other.entries[i].tensor)) return false;
  return true;
}

FeatureExtractor::FeatureExtractor(BackboneSpec spec, const WeightContainer& weights)
    : spec_(std::move(spec)), scaling_(weights.scaling) {
  validate_spec(spec_);
  validate_weights(weights, spec_);
  conv_.resize(spec_.layers.size());
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerDesc& l = spec_.layers[i];
    if (l.kind != LayerKind::kConv) continue;
    const WeightRecord* w = weights.find(l.name + ".weight");
    const WeightRecord* b = weights.find(l.name + ".bias");
    conv_[i].kernels = {l.out_channels, l.in_channels, l.kernel, l.kernel, w->values};
    conv_[i].bias = b->values;
  }
  last_use_.assign(spec_.layers.size(), 0);
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    last_use_[i] = i;
    for (std::size_t in : resolved_inputs(spec_, i)) last_use_[in] = std::max(last_use_[in], i);
  }
}

std::vector<Tensor3> FeatureExtractor::run(const Image& image, bool keep_all) const {
  if (image.height() < kMinExtractSize || image.width() < kMinExtractSize) {
    throw Error(ErrorCode::kInvalidArgument,
                "feature extraction needs at least " + std::to_string(kMinExtractSize) + "x" +
                    std::to_string(kMinExtractSize) + " pixels, got " +
                    std::to_string(image.height()) + "x" + std::to_string(image.width()));
  }
  std::vector<bool> is_tap(spec_.layers.size(), false);
  for (std::size_t t : spec_.taps) is_tap[t] = true;

  const Tensor3 input = normalize_input(image, scaling_);
  std::vector<Tensor3> out(spec_.layers.size());
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerDesc& l = spec_.layers[i];
    const auto inputs = resolved_inputs(spec_, i);
    const Tensor3& src = inputs.empty() ? input : out[inputs[0]];
    switch (l.kind) {
      case LayerKind::kConv:
        out[i] = conv2d(src, conv_[i].kernels, conv_[i].bias, {l.stride, l.padding});
        break;
      case LayerKind::kRelu:
        out[i] = relu(src);
        break;
      case LayerKind::kMaxPool:
        out[i] = maxpool2d(src, l.kernel, l.stride, l.ceil_mode);
        break;
      case LayerKind::kConcat: {
        std::vector<const Tensor3*> parts;
        for (std::size_t k : inputs) parts.push_back(&out[k]);
        out[i] = concat_channels(parts);
        break;
      }
    }
    if (!keep_all) {
      for (std::size_t k : inputs)
        if (last_use_[k] == i && !is_tap[k]) out[k] = Tensor3();
    }
  }
  return out;
}

FeatureStack FeatureExtractor::extract(const Image& image) const {
  auto outputs = run(image, false);
  FeatureStack stack;
  for (std::size_t t : spec_.taps) stack.entries.push_back({spec_.layers[t].name, std::move(outputs[t])});
  return stack;
}

std::vector<Tensor3> FeatureExtractor::run_all(const Image& image) const { return run(image, true); }

FeatureStack extract_features(const Image& image, const BackboneSpec& spec,
                              const WeightContainer& weights) {
  return FeatureExtractor(spec, weights).extract(image);
}

namespace {
constexpr char kDumpMagic[4] = {'D', 'P', 'S', 'A'};
constexpr std::uint16_t kDumpVersion = 1;
}  // namespace

// "DPSA" | version u16 | id length u8 + id | sample count u32 | per sample:
// H u32, W u32, H*W*3 f32 RGB | tap count u32 | per tap: C,H,W u32 + values.
ActivationDump read_activation_dump(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes, path.string());
  if (bytes.size() < 4 || r.bytes(4) != std::string_view(kDumpMagic, 4)) {
    throw Error(ErrorCode::kBadMagic, path.string() + ": bad activation dump magic");
  }
  if (const auto v = r.u16(); v != kDumpVersion) {
    throw Error(ErrorCode::kVersionMismatch, path.string() + ": activation dump version " +
                                                 std::to_string(v));
  }
  ActivationDump dump;
  dump.backbone_id = r.bytes(r.u8());
  const std::uint32_t n = r.u32();
  for (std::uint32_t s = 0; s < n; ++s) {
    ActivationDump::Sample sample;
    const std::uint32_t h = r.u32();
    const std::uint32_t w = r.u32();
    sample.image = Image(h, w);
    r.f32_array(sample.image.pixels().data(), sample.image.pixels().size());
    const std::uint32_t taps = r.u32();
    for (std::uint32_t t = 0; t < taps; ++t) {
      const std::uint32_t c = r.u32(), th = r.u32(), tw = r.u32();
      Tensor3 tensor(c, th, tw);
      r.f32_array(tensor.data().data(), tensor.size());
      sample.taps.push_back(std::move(tensor));
    }
    dump.samples.push_back(std::move(sample));
  }
  return dump;
}

void write_activation_dump(const ActivationDump& dump, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.bytes(std::string_view(kDumpMagic, 4));
  w.u16(kDumpVersion);
  w.u8(static_cast<std::uint8_t>(dump.backbone_id.size()));
  w.bytes(dump.backbone_id);
  w.u32(static_cast<std::uint32_t>(dump.samples.size()));
  for (const auto& s : dump.samples) {
    w.u32(static_cast<std::uint32_t>(s.image.height()));
    w.u32(static_cast<std::uint32_t>(s.image.width()));
    for (float v : s.image.pixels()) w.f32(v);
    w.u32(static_cast<std::uint32_t>(s.taps.size()));
    for (const Tensor3& t : s.taps) {
      w.u32(static_cast<std::uint32_t>(t.channels()));
      w.u32(static_cast<std::uint32_t>(t.height()));
      w.u32(static_cast<std::uint32_t>(t.width()));
      for (float v : t.data()) w.f32(v);
    }
  }
  detail::write_file(path, w.buffer());
}

}  // namespace dps
