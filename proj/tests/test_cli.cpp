#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "dps/image.hpp"
#include "dps/probes.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int status = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(DPS_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = oracle::scratch_dir("cli");
    const auto r = run("make-weights --backbone alexnet --seed 1 --out " + (d / "alexnet.dpsw").string());
    if (r.status != 0) throw std::runtime_error("make-weights failed: " + r.out);
    return d;
  }();
  return dir;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

double pearson(const std::vector<float>& a, const std::vector<float>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

std::vector<float> gray_of(const fs::path& p) {
  const dps::Image img = dps::read_png(p);
  std::vector<float> out;
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x) out.push_back(img.at(y, x, 0));
  return out;
}

}  // namespace

TEST_CASE("usage errors exit with 2 before any work") {
  CHECK(run("").status == 2);
  CHECK(run("frobnicate").status == 2);
  CHECK(run("compare a.png b.png --method sort").status == 2);
  CHECK(run("compare a.png b.png --method pixelwise --backbone vgg16").status == 2);
  CHECK(run("compare a.png b.png --method median").status == 2);
  CHECK(run("compare a.png b.png --norm l3").status == 2);
  CHECK(run("--help").status == 0);
}

TEST_CASE("compare") {
  const auto& dir = workdir();
  const dps::Image scene = dps::gen_pattern(dps::PatternKind::kRegionScene, 2);
  const dps::Rgb bg = dps::background_color(scene);
  const dps::Box box = dps::structured_bounds(scene);
  const dps::Image moved = dps::translate_region(scene, box.x0 >= 48 ? -24 : 24, 0, bg);
  dps::write_png(scene, dir / "scene.png");
  dps::write_png(moved, dir / "moved.png");
  const std::string w = " --backbone alexnet --weights " + q(dir / "alexnet.dpsw");

  for (const char* m : {"spatial", "mean", "sort", "spatial+mean", "spatial+sort"}) {
    const auto r = run("compare " + q(dir / "scene.png") + " " + q(dir / "scene.png") + " --method " + m + w);
    CHECK(r.status == 0);
    CHECK(r.out == "0.000000\n");
  }
  CHECK(run("compare " + q(dir / "scene.png") + " " + q(dir / "scene.png") + " --method pixelwise").out ==
        "0.000000\n");

  const auto sort = run("compare " + q(dir / "scene.png") + " " + q(dir / "moved.png") + " --method sort" + w);
  const auto spatial = run("compare " + q(dir / "scene.png") + " " + q(dir / "moved.png") + " --method spatial" + w);
  REQUIRE(sort.status == 0);
  REQUIRE(spatial.status == 0);
  CHECK(std::stod(sort.out) < std::stod(spatial.out));

  // weights passed as a directory, or through the environment
  CHECK(run("compare " + q(dir / "scene.png") + " " + q(dir / "moved.png") +
            " --method sort --backbone alexnet --weights " + q(dir))
            .out == sort.out);
  CHECK(run("compare " + q(dir / "scene.png") + " " + q(dir / "moved.png") + " --method sort --backbone vgg16 --weights " +
            q(dir))
            .status == 3);

  CHECK(run("compare " + q(dir / "absent.png") + " " + q(dir / "scene.png") + " --method pixelwise").status == 3);
  dps::write_png(dps::Image(32, 32), dir / "small.png");
  CHECK(run("compare " + q(dir / "small.png") + " " + q(dir / "scene.png") + " --method pixelwise").status == 4);
}

TEST_CASE("probe with pixelwise only") {
  const auto& dir = workdir();
  const auto a = run("probe --method pixelwise --seed 4 --out " + q(dir / "p1.txt"));
  const auto b = run("probe --method pixelwise --seed 4 --out " + q(dir / "p2.txt"));
  REQUIRE(a.status == 0);
  REQUIRE(b.status == 0);
  const std::string report = slurp(dir / "p1.txt");
  CHECK(report == slurp(dir / "p2.txt"));
  CHECK(slurp(dir / "p1.txt.jsonl") == slurp(dir / "p2.txt.jsonl"));
  CHECK(report.find("0/15") != std::string::npos);
}

TEST_CASE("eval") {
  const auto& dir = workdir();
  REQUIRE(run("gen-synthetic --seed 5 --n 10 --kinds brightness --out " + q(dir / "synth")).status == 0);
  const auto r = run("eval " + q(dir / "synth" / "manifest.tsv") + " --method pixelwise --out " + q(dir / "eval.txt"));
  REQUIRE(r.status == 0);
  const std::string report = slurp(dir / "eval.txt");
  CHECK(report.find("All                       100.0") != std::string::npos);
  CHECK(fs::exists(dir / "eval.txt.jsonl"));

  std::ofstream(dir / "empty.tsv") << "# nothing\n";
  CHECK(run("eval " + q(dir / "empty.tsv") + " --method pixelwise").status == 3);
  CHECK(run("gen-synthetic --kinds sparkle --out " + q(dir / "x")).status == 2);
}

TEST_CASE("dump-features") {
  const auto& dir = workdir();
  const std::string w = " --backbone alexnet --weights " + q(dir / "alexnet.dpsw");
  // A gray whose normalized value is exactly zero keeps every activation at
  // zero (synthetic biases are zero), so each channel has zero range.
  dps::write_png(dps::Image(64, 64, {0.5f, 0.5f, 0.5f}), dir / "flat.png");
  const float gray = dps::read_png(dir / "flat.png").at(0, 0, 0);
  auto zeroed = dps::make_synthetic_weights(dps::builtin_backbone(dps::BackboneId::kAlexNet), 1);
  for (float& s : zeroed.scaling.shift) s = 2.0f * gray - 1.0f;
  dps::store_weights(zeroed, dir / "zeroed.dpsw");
  REQUIRE(run("dump-features " + q(dir / "flat.png") + " --backbone alexnet --weights " + q(dir / "zeroed.dpsw") +
              " --layer 1 --out " + q(dir / "flat"))
              .status == 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "flat")) {
    ++files;
    for (float v : gray_of(e.path())) REQUIRE(std::abs(v - 0.5f) <= 1.0f / 255.0f);
  }
  CHECK(files == 192);
  CHECK(run("dump-features " + q(dir / "flat.png") + w + " --layer 5 --out " + q(dir / "bad")).status == 3);

  // Nonzero constant input: maps are constant away from the zero-padded border.
  dps::write_png(dps::Image(128, 128, dps::color::kBlack), dir / "black.png");
  REQUIRE(run("dump-features " + q(dir / "black.png") + w + " --layer 0 --out " + q(dir / "black")).status == 0);
  for (const auto& e : fs::directory_iterator(dir / "black")) {
    const dps::Image m = dps::read_png(e.path());
    REQUIRE(m.height() == 31);
    for (std::size_t y = 1; y < 30; ++y)
      for (std::size_t x = 1; x < 30; ++x) REQUIRE(m.pixel(y, x) == m.pixel(1, 1));
  }

  // an image and its inversion share structure on some second-relu channels
  const dps::Image bw = dps::gen_pattern(dps::PatternKind::kBwPattern, 1);
  dps::write_png(bw, dir / "bw.png");
  dps::write_png(dps::invert(bw), dir / "bw_inv.png");
  REQUIRE(run("dump-features " + q(dir / "bw.png") + w + " --layer 1 --out " + q(dir / "bw")).status == 0);
  REQUIRE(run("dump-features " + q(dir / "bw_inv.png") + w + " --layer 1 --out " + q(dir / "bw_inv")).status == 0);
  double best = -1.0;
  for (const auto& e : fs::directory_iterator(dir / "bw"))
    best = std::max(best, pearson(gray_of(e.path()), gray_of(dir / "bw_inv" / e.path().filename())));
  MESSAGE("best per-channel correlation " << best);
  CHECK(best > 0.9);
}
