#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dps/backbone.hpp"
#include "dps/image.hpp"
#include "dps/metrics.hpp"

namespace dps {

inline constexpr std::size_t kProbeSize = 96;

enum class ProbeCategory { kInvert, kRotate, kTranslate, kColorStain };
inline constexpr ProbeCategory kAllCategories[] = {ProbeCategory::kInvert, ProbeCategory::kRotate,
                                                   ProbeCategory::kTranslate,
                                                   ProbeCategory::kColorStain};
std::string_view to_string(ProbeCategory c);

enum class PatternKind { kBwPattern, kRegionScene, kColoredShapes };

struct ProbeCase {
  ProbeCategory category = ProbeCategory::kInvert;
  Image original;
  Image distorted;
  // The seven shared references, or the single pair-specific one for color stain.
  std::vector<Image> references;
  std::string label;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  std::string case_label;
  ProbeCategory category = ProbeCategory::kInvert;
  std::string config_id;
  bool passed = false;  // distance_to_distorted < min_reference_distance, strictly
  double distance_to_distorted = 0.0;
  double min_reference_distance = 0.0;
};

namespace color {
inline constexpr Rgb kBlack{0.0f, 0.0f, 0.0f};
inline constexpr Rgb kWhite{1.0f, 1.0f, 1.0f};
inline constexpr Rgb kGray{0.5f, 0.5f, 0.5f};
inline constexpr Rgb kRed{1.0f, 0.0f, 0.0f};
inline constexpr Rgb kGreen{0.0f, 1.0f, 0.0f};
inline constexpr Rgb kBlue{0.0f, 0.0f, 1.0f};
}  // namespace color

// Black, white, gray, red, green, blue, then one image of uniform random pixels.
std::vector<Image> gen_references(std::uint64_t seed);

Image gen_pattern(PatternKind kind, std::uint64_t seed);

Image invert(const Image& image);

// Shifts the whole image by (dx, dy); vacated pixels take `fill`.
Image translate_region(const Image& image, int dx, int dy, const Rgb& fill);

// Rotates counter-clockwise (as displayed) about the image center with
// bilinear sampling. Multiples of 90 degrees on square images are exact
// lattice permutations.
Image rotate(const Image& image, double degrees, const Rgb& fill);

// Most frequent exact color.
Rgb background_color(const Image& image);

struct Box {
  std::size_t y0 = 0, x0 = 0, y1 = 0, x1 = 0;  // half-open
  bool empty() const noexcept { return y1 <= y0 || x1 <= x0; }
};

// Bounding box of every pixel that differs from the background color.
Box structured_bounds(const Image& image);

// Background pixels become `background_recolor`; `stain_count` seeded blobs of
// `stain_color` land outside the structured region. Non-background pixels are
// never modified.
Image apply_color_stain(const Image& image, const Rgb& background_recolor, std::size_t stain_count,
                        const Rgb& stain_color, std::uint64_t seed);

// Same background as `original`, with its structure replaced by a differently
// shaped and colored one inside the same bounds.
Image gen_color_stain_reference(const Image& original, std::uint64_t seed);

struct SuiteSizes {
  std::size_t invert = 15;
  std::size_t rotate_originals = 6;
  std::vector<double> rotate_angles{22.5, 45.0, 67.5, 90.0, 180.0};
  std::size_t translate = 5;
  std::vector<int> translate_shifts{24, 32, 40};
  std::size_t color_stain = 5;

  // Five probes per category (one rotate original at five angles).
  static SuiteSizes reduced();
};

std::vector<ProbeCase> gen_probe_suite(std::uint64_t root_seed, const SuiteSizes& sizes = {});

struct PassCount {
  std::size_t passed = 0;
  std::size_t total = 0;
};

struct ProbeTable {
  std::vector<MetricConfig> configs;  // row order
  std::vector<std::string> config_ids;
  std::map<std::pair<std::string, ProbeCategory>, PassCount> counts;
  std::vector<ProbeResult> results;

  PassCount count(const std::string& config_id, ProbeCategory category) const;
};

using ExtractorSet = std::map<BackboneId, FeatureExtractor>;

ProbeTable run_probe_suite(const std::vector<ProbeCase>& cases,
                           const std::vector<MetricConfig>& configs,
                           const ExtractorSet& extractors);

// Every method on every backbone plus pixelwise, L2, optional unit-normalization.
std::vector<MetricConfig> default_probe_configs(const std::vector<BackboneId>& backbones,
                                                bool unit_normalize = false);

// One JSON object per line: a "case" record per probe case, then a "result"
// record per (case, config).
void write_probe_records(std::ostream& out, const std::vector<ProbeCase>& cases,
                         const ProbeTable& table);

// Rows of configs, columns Invert / Rotate / Translate / Color Stain.
std::string format_probe_table(const ProbeTable& table);

struct ClaimCheck {
  std::string name;
  bool holds = false;
  std::string detail;
};

// The directional behaviour expected of pixel-wise and deep metrics on the
// suite: (a) pixelwise fails every invert probe, (b) spatial/mean/sort without
// normalization pass every invert probe, (c) spatial fails every translate
// probe, (d) mean and sort pass every translate probe, (e) mean and sort pass
// at least `rotate_fraction` of rotate probes. Claims whose configs are absent
// from the table are skipped.
std::vector<ClaimCheck> check_directional_claims(const ProbeTable& table,
                                                 double rotate_fraction = 0.9);

}  // namespace dps
