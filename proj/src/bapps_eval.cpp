#include "dps/bapps_eval.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dps/error.hpp"

namespace dps {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

std::string row_context(const std::filesystem::path& path, std::size_t row) {
  return path.string() + ":" + std::to_string(row) + ": ";
}

double parse_fraction(const std::string& text, const std::filesystem::path& path, std::size_t row,
                      const char* field) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || errno == ERANGE || !std::isfinite(v)) {
    throw Error(ErrorCode::kParse, row_context(path, row) + field + " \"" + text + "\" is not a number");
  }
  if (v < 0.0 || v > 1.0) {
    throw Error(ErrorCode::kOutOfRange, row_context(path, row) + field + " " + text + " outside [0,1]");
  }
  return v;
}

Image load_image(const std::filesystem::path& base, const std::string& rel, const std::filesystem::path& path,
                 std::size_t row) {
  const std::filesystem::path p = std::filesystem::path(rel).is_absolute() ? std::filesystem::path(rel) : base / rel;
  if (!std::filesystem::exists(p)) {
    throw Error(ErrorCode::kIo, row_context(path, row) + "missing image " + p.string());
  }
  try {
    return read_png(p);
  } catch (const Error& e) {
    throw Error(e.code(), row_context(path, row) + e.what());
  }
}

std::string format_fraction(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open manifest " + path.string());
  const std::filesystem::path base = path.parent_path();
  Manifest m;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_tabs(line);
    if (f[0] == "2AFC") {
      if (f.size() != 6) {
        throw Error(ErrorCode::kParse, row_context(path, row) + "2AFC row needs 6 fields, got " + std::to_string(f.size()));
      }
      TwoAFCSample s;
      s.subdivision = f[1];
      s.judge = parse_fraction(f[5], path, row, "judge");
      s.ref = load_image(base, f[2], path, row);
      s.p0 = load_image(base, f[3], path, row);
      s.p1 = load_image(base, f[4], path, row);
      if (!s.ref.same_size(s.p0) || !s.ref.same_size(s.p1)) {
        throw Error(ErrorCode::kDimensionMismatch, row_context(path, row) + "triplet images differ in size");
      }
      m.two_afc.push_back(std::move(s));
    } else if (f[0] == "JND") {
      if (f.size() != 4) {
        throw Error(ErrorCode::kParse, row_context(path, row) + "JND row needs 4 fields, got " + std::to_string(f.size()));
      }
      JNDSample s;
      s.same_rate = parse_fraction(f[3], path, row, "same_rate");
      s.a = load_image(base, f[1], path, row);
      s.b = load_image(base, f[2], path, row);
      if (!s.a.same_size(s.b)) {
        throw Error(ErrorCode::kDimensionMismatch, row_context(path, row) + "JND images differ in size");
      }
      m.jnd.push_back(std::move(s));
    } else {
      throw Error(ErrorCode::kParse, row_context(path, row) + "unknown record type \"" + f[0] + "\"");
    }
  }
  return m;
}

std::vector<SubdivisionScore> score_2afc_distances(const std::vector<PairDistances>& samples) {
  if (samples.empty()) throw Error(ErrorCode::kDegenerateInput, "score_2afc: no samples");
  std::vector<SubdivisionScore> scores;
  std::vector<double> credit_sums;
  for (const PairDistances& s : samples) {
    auto it = std::find_if(scores.begin(), scores.end(),
                           [&](const SubdivisionScore& sc) { return sc.subdivision == s.subdivision; });
    if (it == scores.end()) {
      scores.push_back({s.subdivision, 0.0, 0});
      credit_sums.push_back(0.0);
      it = scores.end() - 1;
    }
    const std::size_t k = static_cast<std::size_t>(it - scores.begin());
    double credit = 0.5;
    if (s.d1 < s.d0) credit = s.judge;
    else if (s.d0 < s.d1) credit = 1.0 - s.judge;
    credit_sums[k] += credit;
    ++it->samples;
  }
  for (std::size_t k = 0; k < scores.size(); ++k)
    scores[k].score = credit_sums[k] / static_cast<double>(scores[k].samples);
  return scores;
}

std::vector<SubdivisionScore> score_2afc(const std::vector<TwoAFCSample>& samples, const MetricConfig& config,
                                         const ExtractorSet& extractors) {
  config.validate();
  const FeatureExtractor* extractor = nullptr;
  if (config.backbone) {
    auto it = extractors.find(*config.backbone);
    if (it == extractors.end()) {
      throw Error(ErrorCode::kInvalidArgument, "no weights loaded for " + std::string(to_string(*config.backbone)));
    }
    extractor = &it->second;
  }
  std::vector<PairDistances> measured;
  measured.reserve(samples.size());
  for (const TwoAFCSample& s : samples) {
    measured.push_back({distance(s.ref, s.p0, config, extractor).value,
                        distance(s.ref, s.p1, config, extractor).value, s.judge, s.subdivision});
  }
  return score_2afc_distances(measured);
}

double score_jnd_distances(const std::vector<RankedPair>& pairs) {
  const auto relevant = static_cast<std::size_t>(
      std::count_if(pairs.begin(), pairs.end(), [](const RankedPair& p) { return p.same_rate > 0.5; }));
  if (relevant == 0 || relevant == pairs.size()) {
    throw Error(ErrorCode::kDegenerateInput,
                "score_jnd: need both same (same_rate > 0.5) and different pairs; got " +
                    std::to_string(relevant) + " same of " + std::to_string(pairs.size()));
  }
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pairs[a].distance < pairs[b].distance; });
  double precision_sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (pairs[order[rank]].same_rate > 0.5) {
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return precision_sum / static_cast<double>(relevant);
}

double score_jnd(const std::vector<JNDSample>& samples, const MetricConfig& config, const ExtractorSet& extractors) {
  config.validate();
  const FeatureExtractor* extractor = nullptr;
  if (config.backbone) {
    auto it = extractors.find(*config.backbone);
    if (it == extractors.end()) {
      throw Error(ErrorCode::kInvalidArgument, "no weights loaded for " + std::string(to_string(*config.backbone)));
    }
    extractor = &it->second;
  }
  std::vector<RankedPair> pairs;
  pairs.reserve(samples.size());
  for (const JNDSample& s : samples) pairs.push_back({distance(s.a, s.b, config, extractor).value, s.same_rate});
  return score_jnd_distances(pairs);
}

EvalReport aggregate_report(const std::vector<SubdivisionScore>& subdivisions, std::optional<double> jnd,
                            std::string config_id) {
  if (subdivisions.empty()) throw Error(ErrorCode::kDegenerateInput, "aggregate_report: no subdivisions");
  static const std::vector<std::pair<std::string, std::vector<std::string>>> kGroups = {
      {"Distortions", {"traditional", "CNN-based"}},
      {"Real Algorithms", {"superresolution", "video deblurring", "colorization", "frame interpolation"}},
  };
  EvalReport report;
  report.config_id = std::move(config_id);
  report.subdivisions = subdivisions;
  report.jnd = jnd;

  std::vector<bool> grouped(subdivisions.size(), false);
  auto add_group = [&](const std::string& name, auto&& member_of) {
    GroupScore g{name, {}, 0.0};
    for (std::size_t k = 0; k < subdivisions.size(); ++k) {
      if (grouped[k] || !member_of(subdivisions[k].subdivision)) continue;
      grouped[k] = true;
      g.members.push_back(subdivisions[k].subdivision);
      g.score += subdivisions[k].score;
    }
    if (g.members.empty()) return;
    g.score /= static_cast<double>(g.members.size());
    report.groups.push_back(std::move(g));
  };
  for (const auto& [name, members] : kGroups) {
    add_group(name, [&](const std::string& s) { return std::find(members.begin(), members.end(), s) != members.end(); });
  }
  add_group("Other", [](const std::string&) { return true; });

  double sum = 0.0;
  for (const auto& s : subdivisions) sum += s.score;
  report.all = sum / static_cast<double>(subdivisions.size());
  return report;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream out;
  char buf[160];
  if (!report.config_id.empty()) out << "Metric: " << report.config_id << '\n';
  for (const GroupScore& g : report.groups) {
    out << g.name << '\n';
    for (const std::string& m : g.members) {
      const auto it = std::find_if(report.subdivisions.begin(), report.subdivisions.end(),
                                   [&](const SubdivisionScore& s) { return s.subdivision == m; });
      std::snprintf(buf, sizeof buf, "  %-24s %6.1f  (n=%zu)\n", m.c_str(), 100.0 * it->score, it->samples);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "  %-24s %6.1f\n", "All", 100.0 * g.score);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "%-26s %6.1f\n", "2AFC All", 100.0 * report.all);
  out << buf;
  if (report.jnd) {
    std::snprintf(buf, sizeof buf, "%-26s %6.1f\n", "JND", 100.0 * *report.jnd);
  } else {
    std::snprintf(buf, sizeof buf, "%-26s %6s\n", "JND", "-");
  }
  out << buf;
  return out.str();
}

std::string report_records(const EvalReport& report) {
  std::ostringstream out;
  for (const auto& s : report.subdivisions) {
    nlohmann::ordered_json j{{"type", "subdivision"}, {"config", report.config_id}, {"name", s.subdivision},
                             {"score", s.score}, {"samples", s.samples}};
    out << j.dump() << '\n';
  }
  for (const auto& g : report.groups) {
    nlohmann::ordered_json j{{"type", "group"}, {"config", report.config_id}, {"name", g.name},
                             {"members", g.members}, {"score", g.score}};
    out << j.dump() << '\n';
  }
  nlohmann::ordered_json all{{"type", "all"}, {"config", report.config_id}, {"score", report.all}};
  out << all.dump() << '\n';
  nlohmann::ordered_json jnd{{"type", "jnd"}, {"config", report.config_id}};
  jnd["score"] = report.jnd ? nlohmann::ordered_json(*report.jnd) : nlohmann::ordered_json(nullptr);
  out << jnd.dump() << '\n';
  return out.str();
}

std::string_view to_string(SyntheticDistortion d) {
  switch (d) {
    case SyntheticDistortion::kBrightness: return "brightness";
    case SyntheticDistortion::kNoise: return "noise";
    case SyntheticDistortion::kBlur: return "blur";
    case SyntheticDistortion::kTranslate: return "translate";
    case SyntheticDistortion::kRotate: return "rotate";
  }
  return "unknown";
}

namespace {

void quantize(Image& img) {
  img.clamp();
  for (float& v : img.pixels()) v = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;
}

// Center 64x64 crop of a probe pattern, squeezed into [0.2, 0.8] so offsets
// of either sign stay clear of saturation.
Image synthetic_base(std::uint64_t seed, std::size_t index) {
  static constexpr PatternKind kinds[] = {PatternKind::kRegionScene, PatternKind::kColoredShapes,
                                          PatternKind::kBwPattern};
  const Image full = gen_pattern(kinds[index % 3], seed);
  const std::size_t off = (full.height() - kSyntheticPatchSize) / 2;
  Image img(kSyntheticPatchSize, kSyntheticPatchSize);
  for (std::size_t y = 0; y < kSyntheticPatchSize; ++y)
    for (std::size_t x = 0; x < kSyntheticPatchSize; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = 0.2f + 0.6f * full.at(y + off, x + off, c);
  quantize(img);
  return img;
}

Image box_blur(const Image& img, int radius) {
  Image out(img.height(), img.width());
  const long h = static_cast<long>(img.height()), w = static_cast<long>(img.width());
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double sum = 0.0;
        int n = 0;
        for (long dy = -radius; dy <= radius; ++dy)
          for (long dx = -radius; dx <= radius; ++dx) {
            const long yy = std::clamp(y + dy, 0L, h - 1), xx = std::clamp(x + dx, 0L, w - 1);
            sum += img.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx), c);
            ++n;
          }
        out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) = static_cast<float>(sum / n);
      }
  return out;
}

Rgb mean_color(const Image& img) {
  double s[3] = {0, 0, 0};
  for (std::size_t i = 0; i < img.pixels().size(); ++i) s[i % 3] += img.pixels()[i];
  const double n = static_cast<double>(img.height() * img.width());
  return {static_cast<float>(s[0] / n), static_cast<float>(s[1] / n), static_cast<float>(s[2] / n)};
}

// Mild or severe version of one distortion family; severe is strictly
// further from `base` for every family.
Image distort(const Image& base, SyntheticDistortion kind, bool severe, double magnitude,
              const std::vector<float>& noise_field) {
  Image out = base;
  switch (kind) {
    case SyntheticDistortion::kBrightness: {
      const double delta = severe ? magnitude + 0.1 : magnitude;
      for (float& v : out.pixels()) v = static_cast<float>(v + delta);
      break;
    }
    case SyntheticDistortion::kNoise: {
      const double amp = severe ? 3.0 * magnitude : magnitude;
      for (std::size_t i = 0; i < out.pixels().size(); ++i)
        out.pixels()[i] = static_cast<float>(out.pixels()[i] + amp * noise_field[i]);
      break;
    }
    case SyntheticDistortion::kBlur:
      out = box_blur(base, severe ? 3 : 1);
      break;
    case SyntheticDistortion::kTranslate: {
      const int shift = severe ? 10 : 2;
      out = translate_region(base, shift, shift / 2, mean_color(base));
      break;
    }
    case SyntheticDistortion::kRotate:
      out = rotate(base, severe ? 30.0 : 5.0, mean_color(base));
      break;
  }
  quantize(out);
  return out;
}

}  // namespace

SyntheticSet gen_synthetic_2afc(std::uint64_t seed, std::size_t n, const std::filesystem::path& dir,
                                const std::vector<SyntheticDistortion>& kinds) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "gen_synthetic_2afc: n must be >= 1");
  if (kinds.empty()) throw Error(ErrorCode::kInvalidArgument, "gen_synthetic_2afc: no distortion kinds");
  std::error_code ec;
  std::filesystem::create_directories(dir / "img", ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + (dir / "img").string() + ": " + ec.message());

  SyntheticSet set;
  set.manifest = dir / "manifest.tsv";
  std::ofstream manifest(set.manifest, std::ios::trunc);
  if (!manifest) throw Error(ErrorCode::kIo, "cannot write " + set.manifest.string());

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  char name[64];
  auto save = [&](const Image& img, const char* fmt, std::size_t i) {
    std::snprintf(name, sizeof name, fmt, i);
    write_png(img, dir / "img" / name);
    return std::string("img/") + name;
  };
  auto noise_for = [&](const Image& base) {
    std::vector<float> field(base.pixels().size());
    for (float& v : field) v = static_cast<float>(2.0 * unit(rng) - 1.0);
    return field;
  };

  for (std::size_t i = 0; i < n; ++i) {
    const SyntheticDistortion kind = kinds[i % kinds.size()];
    const Image base = synthetic_base(rng(), i);
    const double magnitude = 0.03 + 0.05 * unit(rng);
    const auto field = noise_for(base);
    TwoAFCSample s{base, distort(base, kind, false, magnitude, field),
                   distort(base, kind, true, magnitude, field), 0.0, std::string(to_string(kind))};
    manifest << "2AFC\t" << s.subdivision << '\t' << save(s.ref, "2afc_%05zu_ref.png", i) << '\t'
             << save(s.p0, "2afc_%05zu_p0.png", i) << '\t' << save(s.p1, "2afc_%05zu_p1.png", i) << '\t'
             << format_fraction(s.judge) << '\n';
    set.samples.two_afc.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const SyntheticDistortion kind = kinds[i % kinds.size()];
    const Image base = synthetic_base(rng(), i + 1);
    const double magnitude = 0.03 + 0.05 * unit(rng);
    const auto field = noise_for(base);
    const bool same = i % 2 == 0;
    JNDSample s{base, same ? base : distort(base, kind, true, magnitude, field), same ? 1.0 : 0.0};
    manifest << "JND\t" << save(s.a, "jnd_%05zu_a.png", i) << '\t' << save(s.b, "jnd_%05zu_b.png", i) << '\t'
             << format_fraction(s.same_rate) << '\n';
    set.samples.jnd.push_back(std::move(s));
  }
  if (!manifest) throw Error(ErrorCode::kIo, "write failed for " + set.manifest.string());
  return set;
}

}  // namespace dps
