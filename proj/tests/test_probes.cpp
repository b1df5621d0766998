#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "dps/error.hpp"
#include "dps/probes.hpp"
#include "oracles.hpp"

using dps::Image;
using dps::PatternKind;
using dps::ProbeCategory;

namespace {

bool is_constant(const Image& img) {
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x)
      if (img.pixel(y, x) != img.pixel(0, 0)) return false;
  return true;
}

}  // namespace

TEST_CASE("references") {
  const auto refs = dps::gen_references(5);
  REQUIRE(refs.size() == 7);
  const dps::Rgb mono[] = {dps::color::kBlack, dps::color::kWhite, dps::color::kGray,
                           dps::color::kRed,   dps::color::kGreen, dps::color::kBlue};
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(is_constant(refs[i]));
    CHECK(refs[i].pixel(0, 0) == mono[i]);
    CHECK(refs[i].height() == dps::kProbeSize);
  }
  CHECK(dps::gen_references(5)[6] == refs[6]);
  CHECK_FALSE(dps::gen_references(6)[6] == refs[6]);
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (std::size_t y = 0; y < 96; ++y)
      for (std::size_t x = 0; x < 96; ++x) sum += refs[6].at(y, x, c);
    const double mean = sum / (96.0 * 96.0);
    CHECK(mean >= 0.45);
    CHECK(mean <= 0.55);
  }
}

TEST_CASE("pattern generators") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const Image bw = dps::gen_pattern(PatternKind::kBwPattern, seed);
    CHECK(bw.height() == 96);
    CHECK(bw.width() == 96);
    for (float v : bw.pixels()) REQUIRE((v == 0.0f || v == 1.0f));
    CHECK(bw == dps::gen_pattern(PatternKind::kBwPattern, seed));

    const Image scene = dps::gen_pattern(PatternKind::kRegionScene, seed);
    const dps::Box box = dps::structured_bounds(scene);
    REQUIRE_FALSE(box.empty());
    // structure confined to a single 48x48 quadrant
    CHECK(box.y1 - 1 - box.y0 < 48);
    CHECK(box.x1 - 1 - box.x0 < 48);
    CHECK((box.y0 / 48 == (box.y1 - 1) / 48));
    CHECK((box.x0 / 48 == (box.x1 - 1) / 48));
    const dps::Rgb bg = dps::background_color(scene);
    const std::size_t qy = box.y0 / 48 * 48, qx = box.x0 / 48 * 48;
    for (std::size_t y = 0; y < 96; ++y)
      for (std::size_t x = 0; x < 96; ++x) {
        const bool in_quadrant = y >= qy && y < qy + 48 && x >= qx && x < qx + 48;
        if (!in_quadrant) REQUIRE(scene.pixel(y, x) == bg);
      }

    const Image shapes = dps::gen_pattern(PatternKind::kColoredShapes, seed);
    CHECK(shapes == dps::gen_pattern(PatternKind::kColoredShapes, seed));
    CHECK_FALSE(dps::structured_bounds(shapes).empty());
  }
}

TEST_CASE("invert") {
  const Image p = dps::gen_pattern(PatternKind::kColoredShapes, 3);
  CHECK(dps::invert(dps::invert(p)) == p);
  CHECK(dps::invert(Image(4, 4, dps::color::kBlack)) == Image(4, 4, dps::color::kWhite));
  CHECK(dps::invert(Image(4, 4, dps::color::kGray)) == Image(4, 4, dps::color::kGray));
}

TEST_CASE("translate_region") {
  const Image scene = dps::gen_pattern(PatternKind::kRegionScene, 4);
  const dps::Rgb bg = dps::background_color(scene);
  CHECK(dps::translate_region(scene, 0, 0, bg) == scene);

  const dps::Box box = dps::structured_bounds(scene);
  const int dx = box.x0 >= 48 ? -24 : 24;
  const Image moved = dps::translate_region(scene, dx, 0, bg);
  for (std::size_t y = box.y0; y < box.y1; ++y)
    for (std::size_t x = box.x0; x < box.x1; ++x)
      REQUIRE(moved.pixel(y, static_cast<std::size_t>(static_cast<long>(x) + dx)) == scene.pixel(y, x));
  CHECK(dps::translate_region(moved, -dx, 0, bg) == scene);
  const Image both = dps::translate_region(scene, dx, box.y0 >= 48 ? -24 : 24, bg);
  CHECK(dps::translate_region(both, -dx, box.y0 >= 48 ? 24 : -24, bg) == scene);
  CHECK_THROWS_AS(dps::translate_region(scene, 96, 0, bg), dps::Error);
  CHECK_THROWS_AS(dps::translate_region(scene, 0, -96, bg), dps::Error);
}

TEST_CASE("rotate") {
  const Image p = dps::gen_pattern(PatternKind::kBwPattern, 7);
  const dps::Rgb fill = dps::color::kBlack;
  const Image twice = dps::rotate(dps::rotate(p, 180.0, fill), 180.0, fill);
  for (std::size_t i = 0; i < p.pixels().size(); ++i) REQUIRE(std::abs(twice.pixels()[i] - p.pixels()[i]) <= 1e-6f);

  // counter-clockwise as displayed: (y, x) -> (n-1-x, y)
  const Image r90 = dps::rotate(p, 90.0, fill);
  for (std::size_t y = 0; y < 96; ++y)
    for (std::size_t x = 0; x < 96; ++x) REQUIRE(r90.pixel(95 - x, y) == p.pixel(y, x));
  for (float v : r90.pixels()) REQUIRE((v == 0.0f || v == 1.0f));

  const Image flat(96, 96, {0.2f, 0.4f, 0.6f});
  const Image r = dps::rotate(flat, 22.5, {0.2f, 0.4f, 0.6f});
  for (std::size_t i = 0; i < r.pixels().size(); ++i) REQUIRE(std::abs(r.pixels()[i] - flat.pixels()[i]) <= 1e-6f);
}

TEST_CASE("color stain") {
  const Image orig = dps::gen_pattern(PatternKind::kColoredShapes, 9);
  const dps::Rgb bg = dps::background_color(orig);
  CHECK(dps::apply_color_stain(orig, bg, 0, dps::color::kRed, 1) == orig);

  const dps::Rgb dark{0.1f, 0.35f, 0.1f}, yellow{0.95f, 0.9f, 0.1f};
  const Image stained = dps::apply_color_stain(orig, dark, 4, yellow, 2);
  CHECK(stained == dps::apply_color_stain(orig, dark, 4, yellow, 2));
  bool any_stain = false;
  for (std::size_t y = 0; y < 96; ++y)
    for (std::size_t x = 0; x < 96; ++x) {
      if (orig.pixel(y, x) != bg) REQUIRE(stained.pixel(y, x) == orig.pixel(y, x));
      any_stain = any_stain || stained.pixel(y, x) == yellow;
    }
  CHECK(any_stain);

  const Image ref = dps::gen_color_stain_reference(orig, 5);
  CHECK(ref == dps::gen_color_stain_reference(orig, 5));
  const dps::Box box = dps::structured_bounds(orig);
  for (std::size_t y = 0; y < 96; ++y)
    for (std::size_t x = 0; x < 96; ++x) {
      const bool inside = y >= box.y0 && y < box.y1 && x >= box.x0 && x < box.x1;
      if (!inside) REQUIRE(ref.pixel(y, x) == bg);
    }
  CHECK(dps::pixelwise_distance(ref, orig, dps::Norm::kL2).value > 0.0);
}

TEST_CASE("suite generation") {
  const auto suite = dps::gen_probe_suite(7);
  std::map<ProbeCategory, std::size_t> counts;
  std::set<std::string> labels;
  for (const auto& c : suite) {
    ++counts[c.category];
    labels.insert(c.label);
    CHECK(c.original.height() == 96);
    CHECK(c.distorted.same_size(c.original));
    CHECK(c.references.size() == (c.category == ProbeCategory::kColorStain ? 1u : 7u));
  }
  CHECK(counts[ProbeCategory::kInvert] == 15);
  CHECK(counts[ProbeCategory::kRotate] == 30);
  CHECK(counts[ProbeCategory::kTranslate] == 5);
  CHECK(counts[ProbeCategory::kColorStain] == 5);
  CHECK(labels.size() == suite.size());

  const auto again = dps::gen_probe_suite(7);
  REQUIRE(again.size() == suite.size());
  for (std::size_t i = 0; i < suite.size(); ++i) {
    CHECK(again[i].distorted == suite[i].distorted);
    CHECK(again[i].references == suite[i].references);
  }
  CHECK_FALSE(dps::gen_probe_suite(8)[0].original == suite[0].original);
  CHECK(dps::gen_probe_suite(7, dps::SuiteSizes::reduced()).size() == 20);
}

TEST_CASE("pixelwise fails every inversion; empty config list") {
  const auto suite = dps::gen_probe_suite(3);
  const std::vector<dps::MetricConfig> pix{{dps::Method::kPixelwise, dps::Norm::kL2, false, std::nullopt}};
  const auto table = dps::run_probe_suite(suite, pix, {});
  CHECK(table.count("pixelwise/l2", ProbeCategory::kInvert).passed == 0);
  CHECK(table.count("pixelwise/l2", ProbeCategory::kInvert).total == 15);
  for (const auto& r : table.results) CHECK(r.passed == (r.distance_to_distorted < r.min_reference_distance));

  const auto claims = dps::check_directional_claims(table);
  REQUIRE(claims.size() == 1);
  CHECK(claims[0].holds);

  const auto empty = dps::run_probe_suite(suite, {}, {});
  CHECK(empty.results.empty());
  CHECK(empty.counts.empty());

  std::ostringstream records;
  dps::write_probe_records(records, suite, table);
  std::size_t lines = 0;
  for (char ch : records.str()) lines += ch == '\n';
  CHECK(lines == 2 * suite.size());
  CHECK(dps::format_probe_table(table).find("0/15") != std::string::npos);
}

TEST_CASE("deep configs need extractors") {
  const auto suite = dps::gen_probe_suite(3, dps::SuiteSizes::reduced());
  const std::vector<dps::MetricConfig> sort{{dps::Method::kSort, dps::Norm::kL2, false, dps::BackboneId::kAlexNet}};
  CHECK_THROWS_AS(dps::run_probe_suite(suite, sort, {}), dps::Error);
  CHECK(dps::default_probe_configs({dps::BackboneId::kAlexNet}).size() == 6);
}
