#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dps/image.hpp"
#include "dps/metrics.hpp"
#include "dps/probes.hpp"

namespace dps {

struct TwoAFCSample {
  Image ref;
  Image p0;
  Image p1;
  double judge = 0.5;  // fraction of annotators preferring p1
  std::string subdivision;
};

struct JNDSample {
  Image a;
  Image b;
  double same_rate = 0.0;  // fraction of annotators answering "same"
};

struct Manifest {
  std::vector<TwoAFCSample> two_afc;
  std::vector<JNDSample> jnd;
};

// Tab-separated, one record per line, paths relative to the manifest:
//   2AFC <subdivision> <ref> <p0> <p1> <judge>
//   JND <a> <b> <same_rate>
// Blank lines and lines starting with '#' are ignored.
Manifest load_manifest(const std::filesystem::path& path);

struct SubdivisionScore {
  std::string subdivision;
  double score = 0.0;
  std::size_t samples = 0;
};

struct PairDistances {
  double d0 = 0.0;
  double d1 = 0.0;
  double judge = 0.5;
  std::string subdivision;
};

// Credit per sample is judge when d1 < d0, 1 - judge when d0 < d1 and 0.5 on
// an exact tie; a subdivision scores the mean credit. Subdivisions keep their
// order of first appearance.
std::vector<SubdivisionScore> score_2afc_distances(const std::vector<PairDistances>& samples);

std::vector<SubdivisionScore> score_2afc(const std::vector<TwoAFCSample>& samples, const MetricConfig& config,
                                         const ExtractorSet& extractors);

struct RankedPair {
  double distance = 0.0;
  double same_rate = 0.0;
};

// Average precision of "same" pairs (same_rate > 0.5) when ranked by
// ascending distance, ties broken by input order.
double score_jnd_distances(const std::vector<RankedPair>& pairs);

double score_jnd(const std::vector<JNDSample>& samples, const MetricConfig& config,
                 const ExtractorSet& extractors);

struct GroupScore {
  std::string name;
  std::vector<std::string> members;
  double score = 0.0;
};

struct EvalReport {
  std::string config_id;
  std::vector<SubdivisionScore> subdivisions;
  std::vector<GroupScore> groups;
  double all = 0.0;
  std::optional<double> jnd;
};

// Group "All" columns and the overall "All" are unweighted subdivision means.
EvalReport aggregate_report(const std::vector<SubdivisionScore>& subdivisions, std::optional<double> jnd,
                            std::string config_id = {});

std::string format_report(const EvalReport& report);
std::string report_records(const EvalReport& report);

enum class SyntheticDistortion { kBrightness, kNoise, kBlur, kTranslate, kRotate };
std::string_view to_string(SyntheticDistortion d);

struct SyntheticSet {
  std::filesystem::path manifest;
  Manifest samples;
};

inline constexpr std::size_t kSyntheticPatchSize = 64;

// Writes `n` 2AFC triplets (p0 a mild, p1 a severe version of the same
// distortion; judge 0) plus n JND pairs into `dir`, subdivision tag = the
// distortion name. Images are quantized to 8 bits before use so the PNGs
// reload exactly.
SyntheticSet gen_synthetic_2afc(std::uint64_t seed, std::size_t n, const std::filesystem::path& dir,
                                const std::vector<SyntheticDistortion>& kinds = {
                                    SyntheticDistortion::kBrightness, SyntheticDistortion::kNoise,
                                    SyntheticDistortion::kBlur, SyntheticDistortion::kTranslate,
                                    SyntheticDistortion::kRotate});

}  // namespace dps
