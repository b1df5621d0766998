// dps: command-line front end for the deep perceptual similarity toolkit.
//
//   dps compare A.png B.png --method sort --backbone alexnet --weights alexnet.dpsw
//   dps probe --seed 1 --out report.txt
//   dps eval manifest.tsv --method mean --backbone vgg16 --unit-normalize --out report.txt
//   dps dump-features img.png --backbone squeezenet --layer 1 --out maps/
//   dps gen-synthetic --seed 3 --n 50 --out synth/
//   dps make-weights --backbone alexnet --seed 1 --out alexnet.dpsw

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dps/bapps_eval.hpp"
#include "dps/backbone.hpp"
#include "dps/error.hpp"
#include "dps/metrics.hpp"
#include "dps/probes.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kCompute = 4 };

// Invalid flag combinations detected after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(dps::ErrorCode code) {
  switch (code) {
    case dps::ErrorCode::kBadMagic:
    case dps::ErrorCode::kVersionMismatch:
    case dps::ErrorCode::kShapeMismatch:
    case dps::ErrorCode::kTruncated:
    case dps::ErrorCode::kIo:
    case dps::ErrorCode::kParse:
    case dps::ErrorCode::kOutOfRange:
    case dps::ErrorCode::kDegenerateInput:
      return kData;
    case dps::ErrorCode::kDimensionMismatch:
    case dps::ErrorCode::kInvalidArgument:
      return kCompute;
  }
  return kCompute;
}

struct MetricFlags {
  std::string method = "spatial";
  std::string norm = "l2";
  std::vector<std::string> backbones;
  std::string weights;
  bool unit_normalize = false;

  void attach(CLI::App* app, bool multi_backbone) {
    app->add_option("--method", method, "pixelwise|spatial|mean|sort|spatial+mean|spatial+sort")
        ->check(CLI::IsMember({"pixelwise", "spatial", "mean", "sort", "spatial+mean", "spatial+sort"}));
    app->add_option("--norm", norm, "l1|l2")->check(CLI::IsMember({"l1", "l2"}));
    auto* b = app->add_option("--backbone", backbones, "squeezenet|alexnet|vgg16")
                  ->check(CLI::IsMember({"squeezenet", "alexnet", "vgg16"}));
    if (!multi_backbone) b->expected(1);
    app->add_option("--weights", weights,
                    "weight container, or a directory of <backbone>.dpsw files (default: $DPS_WEIGHTS_DIR)");
    app->add_flag("--unit-normalize", unit_normalize, "channel-wise unit-normalize features");
  }

  dps::MetricConfig single_config() const {
    dps::MetricConfig config;
    config.method = *dps::parse_method(method);
    config.norm = *dps::parse_norm(norm);
    config.unit_normalize = unit_normalize;
    if (backbones.size() > 1) throw UsageError("only one --backbone may be given here");
    if (!backbones.empty()) config.backbone = dps::parse_backbone_id(backbones.front());
    if (config.method == dps::Method::kPixelwise) {
      if (config.backbone) throw UsageError("--method pixelwise takes no --backbone");
      if (unit_normalize) throw UsageError("--unit-normalize has no effect on pixelwise");
    } else if (!config.backbone) {
      throw UsageError("--method " + method + " requires --backbone");
    }
    return config;
  }
};

fs::path resolve_weights(const std::string& flag, dps::BackboneId id) {
  const std::string file = std::string(dps::to_string(id)) + ".dpsw";
  if (!flag.empty()) {
    const fs::path p(flag);
    return fs::is_directory(p) ? p / file : p;
  }
  if (const char* dir = std::getenv("DPS_WEIGHTS_DIR"); dir && *dir) return fs::path(dir) / file;
  throw UsageError("no weights for " + std::string(dps::to_string(id)) +
                   ": pass --weights or set DPS_WEIGHTS_DIR");
}

dps::ExtractorSet load_extractors(const std::string& weights_flag, const std::vector<dps::BackboneId>& ids) {
  dps::ExtractorSet set;
  for (dps::BackboneId id : ids) {
    if (set.count(id)) continue;
    const dps::WeightContainer w = dps::load_weights(resolve_weights(weights_flag, id));
    if (w.backbone_id != dps::to_string(id)) {
      throw dps::Error(dps::ErrorCode::kShapeMismatch, "weights hold " + w.backbone_id + ", expected " +
                                                           std::string(dps::to_string(id)));
    }
    set.emplace(id, dps::FeatureExtractor(dps::builtin_backbone(id), w));
  }
  return set;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw dps::Error(dps::ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw dps::Error(dps::ErrorCode::kIo, "write failed for " + path.string());
}

std::string format_distance(double v) {
  if (v == 0.0) return "0.000000";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

int cmd_compare(const std::string& a_path, const std::string& b_path, const MetricFlags& flags) {
  const dps::MetricConfig config = flags.single_config();
  const dps::Image a = dps::read_png(a_path);
  const dps::Image b = dps::read_png(b_path);
  dps::ExtractorSet extractors;
  if (config.backbone) extractors = load_extractors(flags.weights, {*config.backbone});
  const dps::FeatureExtractor* ex = config.backbone ? &extractors.at(*config.backbone) : nullptr;
  std::cout << format_distance(dps::distance(a, b, config, ex).value) << '\n';
  return kOk;
}

struct ProbeFlags {
  std::uint64_t seed = 1;
  bool reduced = false;
  std::string out;
};

int cmd_probe(const ProbeFlags& pf, const MetricFlags& flags, bool method_given) {
  std::vector<dps::BackboneId> backbones;
  for (const auto& b : flags.backbones) backbones.push_back(*dps::parse_backbone_id(b));

  std::vector<dps::MetricConfig> configs;
  if (method_given) {
    const dps::Method m = *dps::parse_method(flags.method);
    const dps::Norm n = *dps::parse_norm(flags.norm);
    if (m == dps::Method::kPixelwise) {
      if (!backbones.empty()) throw UsageError("--method pixelwise takes no --backbone");
      configs.push_back({m, n, false, std::nullopt});
    } else {
      if (backbones.empty()) backbones.assign(std::begin(dps::kAllBackbones), std::end(dps::kAllBackbones));
      for (dps::BackboneId b : backbones) configs.push_back({m, n, flags.unit_normalize, b});
    }
  } else {
    if (backbones.empty()) backbones.assign(std::begin(dps::kAllBackbones), std::end(dps::kAllBackbones));
    configs = dps::default_probe_configs(backbones, flags.unit_normalize);
    for (auto& c : configs) c.norm = *dps::parse_norm(flags.norm);
  }

  std::vector<dps::BackboneId> needed;
  for (const auto& c : configs)
    if (c.backbone) needed.push_back(*c.backbone);
  const dps::ExtractorSet extractors = load_extractors(flags.weights, needed);

  const auto cases = dps::gen_probe_suite(pf.seed, pf.reduced ? dps::SuiteSizes::reduced() : dps::SuiteSizes{});
  const dps::ProbeTable table = dps::run_probe_suite(cases, configs, extractors);

  std::string report = "Probe suite, seed " + std::to_string(pf.seed) + ", " + std::to_string(cases.size()) +
                       " cases\n\n" + dps::format_probe_table(table);
  const auto claims = dps::check_directional_claims(table);
  if (!claims.empty()) {
    report += "\nDirectional checks\n";
    for (const auto& c : claims) report += std::string(c.holds ? "  holds   " : "  VIOLATED ") + c.name + "\n";
  }
  if (pf.out.empty()) {
    std::cout << report;
  } else {
    write_text(pf.out, report);
    std::ofstream records(pf.out + ".jsonl", std::ios::trunc);
    if (!records) throw dps::Error(dps::ErrorCode::kIo, "cannot write " + pf.out + ".jsonl");
    dps::write_probe_records(records, cases, table);
    std::cout << report;
  }
  return kOk;
}

int cmd_eval(const std::string& manifest_path, const MetricFlags& flags, const std::string& out) {
  const dps::MetricConfig config = flags.single_config();
  const dps::Manifest manifest = dps::load_manifest(manifest_path);
  if (manifest.two_afc.empty()) {
    throw dps::Error(dps::ErrorCode::kDegenerateInput, manifest_path + ": manifest has no 2AFC rows");
  }
  dps::ExtractorSet extractors;
  if (config.backbone) extractors = load_extractors(flags.weights, {*config.backbone});
  const auto subdivisions = dps::score_2afc(manifest.two_afc, config, extractors);
  std::optional<double> jnd;
  if (!manifest.jnd.empty()) jnd = dps::score_jnd(manifest.jnd, config, extractors);
  const dps::EvalReport report = dps::aggregate_report(subdivisions, jnd, config.id());
  const std::string text = dps::format_report(report);
  if (!out.empty()) {
    write_text(out, text);
    write_text(out + ".jsonl", dps::report_records(report));
  }
  std::cout << text;
  return kOk;
}

int cmd_dump_features(const std::string& image_path, const MetricFlags& flags, std::size_t layer,
                      const std::string& out_dir) {
  if (flags.backbones.size() != 1) throw UsageError("dump-features needs exactly one --backbone");
  const dps::BackboneId id = *dps::parse_backbone_id(flags.backbones.front());
  const dps::Image image = dps::read_png(image_path);
  const dps::ExtractorSet extractors = load_extractors(flags.weights, {id});
  const dps::FeatureExtractor& ex = extractors.at(id);
  if (layer >= ex.spec().taps.size()) {
    throw dps::Error(dps::ErrorCode::kOutOfRange, "layer index " + std::to_string(layer) + " out of range; " +
                                                      std::string(dps::to_string(id)) + " has " +
                                                      std::to_string(ex.spec().taps.size()) + " taps");
  }
  const dps::FeatureStack stack = ex.extract(image);
  const dps::Tensor3& t = stack.entries[layer].tensor;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw dps::Error(dps::ErrorCode::kIo, "cannot create " + out_dir + ": " + ec.message());
  std::vector<float> plane(t.plane_size());
  char name[32];
  for (std::size_t c = 0; c < t.channels(); ++c) {
    const auto ch = t.channel(c);
    const auto [lo, hi] = std::minmax_element(ch.begin(), ch.end());
    const float range = *hi - *lo;
    // zero-range channels render mid-gray
    for (std::size_t i = 0; i < ch.size(); ++i) plane[i] = range > 0.0f ? (ch[i] - *lo) / range : 0.5f;
    std::snprintf(name, sizeof name, "ch_%04zu.png", c);
    dps::write_gray_png(plane, t.height(), t.width(), fs::path(out_dir) / name);
  }
  std::cout << stack.entries[layer].layer << ": " << t.channels() << " maps of " << t.height() << "x" << t.width()
            << " written to " << out_dir << '\n';
  return kOk;
}

int cmd_gen_synthetic(std::uint64_t seed, std::size_t n, const std::string& out_dir,
                      const std::vector<std::string>& kinds) {
  std::vector<dps::SyntheticDistortion> parsed;
  for (const auto& k : kinds) {
    bool found = false;
    for (auto d : {dps::SyntheticDistortion::kBrightness, dps::SyntheticDistortion::kNoise,
                   dps::SyntheticDistortion::kBlur, dps::SyntheticDistortion::kTranslate,
                   dps::SyntheticDistortion::kRotate}) {
      if (dps::to_string(d) == k) {
        parsed.push_back(d);
        found = true;
      }
    }
    if (!found) throw UsageError("unknown distortion kind \"" + k + "\"");
  }
  const auto set = parsed.empty() ? dps::gen_synthetic_2afc(seed, n, out_dir)
                                  : dps::gen_synthetic_2afc(seed, n, out_dir, parsed);
  std::cout << set.manifest.string() << '\n';
  return kOk;
}

int cmd_make_weights(const std::string& backbone, std::uint64_t seed, const std::string& out) {
  const dps::BackboneId id = *dps::parse_backbone_id(backbone);
  dps::store_weights(dps::make_synthetic_weights(dps::builtin_backbone(id), seed), out);
  std::cout << out << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep perceptual similarity metrics, probes and 2AFC/JND evaluation"};
  app.require_subcommand(1);

  MetricFlags compare_flags;
  std::string compare_a, compare_b;
  auto* compare = app.add_subcommand("compare", "print the distance between two PNG images");
  compare->add_option("image_a", compare_a)->required();
  compare->add_option("image_b", compare_b)->required();
  compare_flags.attach(compare, false);

  MetricFlags probe_flags;
  ProbeFlags probe_opts;
  auto* probe = app.add_subcommand("probe", "run the distortion probe suite and write a pass/fail table");
  probe_flags.attach(probe, true);
  probe->add_option("--seed", probe_opts.seed, "root seed of the generated suite");
  probe->add_flag("--reduced", probe_opts.reduced, "five probes per category");
  probe->add_option("--out", probe_opts.out, "report path; records go to <out>.jsonl");

  MetricFlags eval_flags;
  std::string eval_manifest, eval_out;
  auto* eval = app.add_subcommand("eval", "score a metric on a 2AFC/JND manifest");
  eval->add_option("manifest", eval_manifest)->required();
  eval_flags.attach(eval, false);
  eval->add_option("--out", eval_out, "report path; records go to <out>.jsonl");

  MetricFlags dump_flags;
  std::string dump_image, dump_out;
  std::size_t dump_layer = 0;
  auto* dump = app.add_subcommand("dump-features", "write per-channel grayscale PNGs of one tap");
  dump->add_option("image", dump_image)->required();
  dump_flags.attach(dump, false);
  dump->add_option("--layer", dump_layer, "tap index (0-based)")->required();
  dump->add_option("--out", dump_out, "output directory")->required();

  std::uint64_t synth_seed = 1;
  std::size_t synth_n = 50;
  std::string synth_out;
  std::vector<std::string> synth_kinds;
  auto* synth = app.add_subcommand("gen-synthetic", "write a synthetic 2AFC/JND manifest with images");
  synth->add_option("--seed", synth_seed);
  synth->add_option("--n", synth_n, "number of 2AFC triplets (and JND pairs)")->check(CLI::PositiveNumber);
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--kinds", synth_kinds, "brightness,noise,blur,translate,rotate")->delimiter(',');

  std::string make_backbone, make_out;
  std::uint64_t make_seed = 1;
  auto* make = app.add_subcommand("make-weights", "write a He-initialized synthetic weight container");
  make->add_option("--backbone", make_backbone)->required()->check(CLI::IsMember({"squeezenet", "alexnet", "vgg16"}));
  make->add_option("--seed", make_seed);
  make->add_option("--out", make_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*compare) return cmd_compare(compare_a, compare_b, compare_flags);
    if (*probe) return cmd_probe(probe_opts, probe_flags, probe->count("--method") > 0);
    if (*eval) return cmd_eval(eval_manifest, eval_flags, eval_out);
    if (*dump) return cmd_dump_features(dump_image, dump_flags, dump_layer, dump_out);
    if (*synth) return cmd_gen_synthetic(synth_seed, synth_n, synth_out, synth_kinds);
    if (*make) return cmd_make_weights(make_backbone, make_seed, make_out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const dps::Error& e) {
    std::cerr << "error (" << dps::to_string(e.code()) << "): " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCompute;
  }
  return kUsage;
}
