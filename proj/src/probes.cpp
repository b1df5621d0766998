#include "dps/probes.hpp"

#include <algorithm>
#include <bit>
#include <functional>
#include <limits>
#include <map>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "dps/error.hpp"

namespace dps {

std::string_view to_string(ProbeCategory c) {
  switch (c) {
    case ProbeCategory::kInvert: return "invert";
    case ProbeCategory::kRotate: return "rotate";
    case ProbeCategory::kTranslate: return "translate";
    case ProbeCategory::kColorStain: return "color_stain";
  }
  return "unknown";
}

namespace {

std::uint64_t mix_seed(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index) {
  return mix_seed(mix_seed(root ^ (stream << 48)) + index);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  int range(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  bool coin() { return range(0, 1) == 1; }
  template <class T>
  const T& pick(const std::vector<T>& items) {
    return items[static_cast<std::size_t>(range(0, static_cast<int>(items.size()) - 1))];
  }

 private:
  std::mt19937_64 engine_;
};

const std::vector<Rgb>& saturated_palette() {
  static const std::vector<Rgb> palette = {
      {1.0f, 0.0f, 0.0f}, {0.0f, 0.8f, 0.0f}, {0.0f, 0.0f, 1.0f},   {1.0f, 0.55f, 0.0f},
      {0.6f, 0.0f, 0.8f}, {0.0f, 0.8f, 0.8f}, {0.9f, 0.9f, 0.0f},   {0.8f, 0.0f, 0.5f},
      {0.3f, 0.2f, 0.1f}, {0.1f, 0.4f, 0.2f}, {0.95f, 0.6f, 0.7f},  {0.2f, 0.3f, 0.6f},
  };
  return palette;
}

float color_gap(const Rgb& a, const Rgb& b) {
  return std::max({std::abs(a[0] - b[0]), std::abs(a[1] - b[1]), std::abs(a[2] - b[2])});
}

void fill_circle(Image& img, double cy, double cx, double r, const Rgb& c) {
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      if (dy * dy + dx * dx <= r * r) img.set_pixel(y, x, c);
    }
}

void fill_rect(Image& img, long y0, long x0, long y1, long x1, const Rgb& c) {
  const long h = static_cast<long>(img.height()), w = static_cast<long>(img.width());
  for (long y = std::max(0L, y0); y < std::min(h, y1); ++y)
    for (long x = std::max(0L, x0); x < std::min(w, x1); ++x)
      img.set_pixel(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c);
}

// Disk whose radius wobbles with two angular harmonics.
struct Blob {
  double cy, cx, radius, a2, p2, a3, p3;

  static Blob random(Rng& rng, double cy, double cx, double radius) {
    return {cy, cx, radius, rng.uniform(0.08, 0.25), rng.uniform(0.0, 6.3),
            rng.uniform(0.05, 0.18), rng.uniform(0.0, 6.3)};
  }
  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double theta = std::atan2(dy, dx);
    const double r = radius * (1.0 + a2 * std::sin(2.0 * theta + p2) + a3 * std::sin(3.0 * theta + p3));
    return dy * dy + dx * dx <= r * r;
  }
  template <class Fn>
  void for_each_pixel(const Image& img, Fn&& fn) const {
    const double reach = radius * 1.5 + 1.0;
    const long y0 = std::max(0L, static_cast<long>(std::floor(cy - reach)));
    const long y1 = std::min(static_cast<long>(img.height()), static_cast<long>(std::ceil(cy + reach)) + 1);
    const long x0 = std::max(0L, static_cast<long>(std::floor(cx - reach)));
    const long x1 = std::min(static_cast<long>(img.width()), static_cast<long>(std::ceil(cx + reach)) + 1);
    for (long y = y0; y < y1; ++y)
      for (long x = x0; x < x1; ++x)
        if (contains(static_cast<double>(y), static_cast<double>(x)))
          fn(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  }
};

Image gen_bw_pattern(Rng& rng) {
  const std::size_t n = kProbeSize;
  const Rgb fg = rng.coin() ? color::kWhite : color::kBlack;
  const Rgb bg = fg == color::kWhite ? color::kBlack : color::kWhite;
  Image img(n, n, bg);
  switch (rng.range(0, 4)) {
    case 0: {  // stripes
      const int period = rng.range(8, 24);
      const int phase = rng.range(0, period - 1);
      const int orientation = rng.range(0, 3);
      for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
          const long coord[] = {static_cast<long>(y), static_cast<long>(x), static_cast<long>(x + y),
                                static_cast<long>(x + n - y)};
          if ((coord[orientation] + phase) % period < period / 2) img.set_pixel(y, x, fg);
        }
      break;
    }
    case 1: {  // checkerboard
      const int cell = rng.range(6, 24);
      const int oy = rng.range(0, cell - 1), ox = rng.range(0, cell - 1);
      for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x)
          if (((static_cast<int>(y) + oy) / cell + (static_cast<int>(x) + ox) / cell) % 2 == 0)
            img.set_pixel(y, x, fg);
      break;
    }
    case 2: {  // scattered shapes
      const int count = rng.range(3, 7);
      for (int i = 0; i < count; ++i) {
        const double cy = rng.uniform(10, 86), cx = rng.uniform(10, 86);
        if (rng.coin()) {
          fill_circle(img, cy, cx, rng.uniform(6, 20), fg);
        } else {
          const long hh = rng.range(4, 16), hw = rng.range(4, 16);
          fill_rect(img, static_cast<long>(cy) - hh, static_cast<long>(cx) - hw,
                    static_cast<long>(cy) + hh, static_cast<long>(cx) + hw, fg);
        }
      }
      break;
    }
    case 3: {  // concentric rings
      const double cy = rng.uniform(24, 72), cx = rng.uniform(24, 72);
      const double period = rng.uniform(6, 16);
      for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
          const double r = std::hypot(static_cast<double>(y) - cy, static_cast<double>(x) - cx);
          if (std::fmod(r, period) < period / 2) img.set_pixel(y, x, fg);
        }
      break;
    }
    default: {  // grid lines
      const int spacing = rng.range(12, 32);
      const int thick = rng.range(2, 5);
      const int off = rng.range(0, spacing - 1);
      for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x)
          if ((static_cast<int>(y) + off) % spacing < thick || (static_cast<int>(x) + off) % spacing < thick)
            img.set_pixel(y, x, fg);
      break;
    }
  }
  return img;
}

// Structured block occupies [q+4, q+44) of one 48x48 quadrant.
constexpr std::size_t kRegionInset = 4;
constexpr std::size_t kRegionSize = 40;

Image gen_region_scene(Rng& rng) {
  static const std::vector<Rgb> backgrounds = {color::kWhite, color::kBlack, color::kGray};
  const Rgb bg = rng.pick(backgrounds);
  Image img(kProbeSize, kProbeSize, bg);
  const int quadrant = rng.range(0, 3);
  const std::size_t y0 = (quadrant / 2) * (kProbeSize / 2) + kRegionInset;
  const std::size_t x0 = (quadrant % 2) * (kProbeSize / 2) + kRegionInset;
  // 2x2 blocks of random color, then a few solid shapes on top
  for (std::size_t y = 0; y < kRegionSize; y += 2)
    for (std::size_t x = 0; x < kRegionSize; x += 2) {
      const Rgb c{static_cast<float>(rng.uniform(0.05, 0.95)), static_cast<float>(rng.uniform(0.05, 0.95)),
                  static_cast<float>(rng.uniform(0.05, 0.95))};
      fill_rect(img, static_cast<long>(y0 + y), static_cast<long>(x0 + x), static_cast<long>(y0 + y + 2),
                static_cast<long>(x0 + x + 2), c);
    }
  Image shapes = img;
  const int count = rng.range(3, 6);
  for (int i = 0; i < count; ++i) {
    const Rgb& c = rng.pick(saturated_palette());
    const double cy = static_cast<double>(y0) + rng.uniform(6, kRegionSize - 6);
    const double cx = static_cast<double>(x0) + rng.uniform(6, kRegionSize - 6);
    if (rng.coin()) {
      fill_circle(shapes, cy, cx, rng.uniform(3, 9), c);
    } else {
      const long hh = rng.range(2, 8), hw = rng.range(2, 8);
      fill_rect(shapes, static_cast<long>(cy) - hh, static_cast<long>(cx) - hw, static_cast<long>(cy) + hh,
                static_cast<long>(cx) + hw, c);
    }
  }
  // keep shapes inside the block
  for (std::size_t y = y0; y < y0 + kRegionSize; ++y)
    for (std::size_t x = x0; x < x0 + kRegionSize; ++x) img.set_pixel(y, x, shapes.pixel(y, x));
  return img;
}

Image gen_colored_shapes(Rng& rng) {
  static const std::vector<Rgb> backgrounds = {
      color::kWhite, {0.85f, 0.85f, 0.85f}, {1.0f, 0.97f, 0.85f}, {0.85f, 0.92f, 1.0f}};
  const Rgb bg = rng.pick(backgrounds);
  Image img(kProbeSize, kProbeSize, bg);
  const int quadrant = rng.range(0, 3);
  const double qy = (quadrant / 2) * (kProbeSize / 2.0), qx = (quadrant % 2) * (kProbeSize / 2.0);
  const int count = rng.range(2, 4);
  std::vector<Rgb> used;
  for (int i = 0; i < count; ++i) {
    Rgb c = rng.pick(saturated_palette());
    for (int tries = 0; tries < 8 && std::find(used.begin(), used.end(), c) != used.end(); ++tries)
      c = rng.pick(saturated_palette());
    used.push_back(c);
    const Blob blob = Blob::random(rng, qy + rng.uniform(14, 34), qx + rng.uniform(14, 34), rng.uniform(7, 12));
    blob.for_each_pixel(img, [&](std::size_t y, std::size_t x) { img.set_pixel(y, x, c); });
  }
  return img;
}

Image recenter(const Image& img) {
  const Box box = structured_bounds(img);
  if (box.empty()) return img;
  const long cy = static_cast<long>(box.y0 + box.y1) / 2, cx = static_cast<long>(box.x0 + box.x1) / 2;
  const long mid = static_cast<long>(kProbeSize / 2);
  return translate_region(img, static_cast<int>(mid - cx), static_cast<int>(mid - cy), background_color(img));
}

Rgb darker(const Rgb& c, float factor) { return {c[0] * factor, c[1] * factor, c[2] * factor}; }

}  // namespace

std::vector<Image> gen_references(std::uint64_t seed) {
  std::vector<Image> refs;
  for (const Rgb& c : {color::kBlack, color::kWhite, color::kGray, color::kRed, color::kGreen, color::kBlue})
    refs.emplace_back(kProbeSize, kProbeSize, c);
  Image noise(kProbeSize, kProbeSize);
  std::mt19937_64 engine(seed);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  for (float& v : noise.pixels()) v = unit(engine);
  refs.push_back(std::move(noise));
  return refs;
}

Image gen_pattern(PatternKind kind, std::uint64_t seed) {
  Rng rng(seed);
  switch (kind) {
    case PatternKind::kBwPattern: return gen_bw_pattern(rng);
    case PatternKind::kRegionScene: return gen_region_scene(rng);
    case PatternKind::kColoredShapes: return gen_colored_shapes(rng);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown pattern kind");
}

Image invert(const Image& image) {
  Image out = image;
  for (float& v : out.pixels()) v = 1.0f - v;
  return out;
}

Image translate_region(const Image& image, int dx, int dy, const Rgb& fill) {
  const long h = static_cast<long>(image.height()), w = static_cast<long>(image.width());
  if (std::labs(dx) >= w || std::labs(dy) >= h) {
    throw Error(ErrorCode::kOutOfRange, "translate_region: offset (" + std::to_string(dx) + ", " +
                                            std::to_string(dy) + ") exceeds image " +
                                            std::to_string(h) + "x" + std::to_string(w));
  }
  Image out(image.height(), image.width(), fill);
  for (long y = 0; y < h; ++y) {
    const long sy = y - dy;
    if (sy < 0 || sy >= h) continue;
    for (long x = 0; x < w; ++x) {
      const long sx = x - dx;
      if (sx < 0 || sx >= w) continue;
      out.set_pixel(static_cast<std::size_t>(y), static_cast<std::size_t>(x),
                    image.pixel(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)));
    }
  }
  return out;
}

Image rotate(const Image& image, double degrees, const Rgb& fill) {
  const std::size_t h = image.height(), w = image.width();
  double turns = std::fmod(degrees, 360.0);
  if (turns < 0) turns += 360.0;
  const bool right_angle = std::fmod(turns, 90.0) == 0.0;
  Image out(h, w, fill);
  if (right_angle && (h == w || turns == 0.0 || turns == 180.0)) {
    const int quarter = static_cast<int>(turns / 90.0);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        // source of output pixel (y, x) for a counter-clockwise turn
        std::size_t sy = y, sx = x;
        switch (quarter) {
          case 1: sy = x; sx = w - 1 - y; break;
          case 2: sy = h - 1 - y; sx = w - 1 - x; break;
          case 3: sy = h - 1 - x; sx = y; break;
          default: break;
        }
        out.set_pixel(y, x, image.pixel(sy, sx));
      }
    return out;
  }
  const double rad = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0, cx = (static_cast<double>(w) - 1.0) / 2.0;
  auto sample = [&](long y, long x, std::size_t c) -> double {
    if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return fill[c];
    return image.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c);
  };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      // inverse map; y grows downward so a visual counter-clockwise turn is
      // a clockwise turn in (x, y) coordinates
      const double ox = static_cast<double>(x) - cx, oy = static_cast<double>(y) - cy;
      const double sx = cs * ox - sn * oy + cx;
      const double sy = sn * ox + cs * oy + cy;
      if (sx <= -1.0 || sy <= -1.0 || sx >= static_cast<double>(w) || sy >= static_cast<double>(h)) continue;
      const long x0 = static_cast<long>(std::floor(sx)), y0 = static_cast<long>(std::floor(sy));
      const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = sample(y0, x0, c) * (1.0 - fx) + sample(y0, x0 + 1, c) * fx;
        const double bottom = sample(y0 + 1, x0, c) * (1.0 - fx) + sample(y0 + 1, x0 + 1, c) * fx;
        out.at(y, x, c) = static_cast<float>(top * (1.0 - fy) + bottom * fy);
      }
    }
  out.clamp();
  return out;
}

Rgb background_color(const Image& image) {
  std::map<Rgb, std::size_t> counts;
  for (std::size_t y = 0; y < image.height(); ++y)
    for (std::size_t x = 0; x < image.width(); ++x) ++counts[image.pixel(y, x)];
  if (counts.empty()) return color::kBlack;
  return std::max_element(counts.begin(), counts.end(),
                          [](const auto& a, const auto& b) { return a.second < b.second; })
      ->first;
}

Box structured_bounds(const Image& image) {
  const Rgb bg = background_color(image);
  Box box{image.height(), image.width(), 0, 0};
  for (std::size_t y = 0; y < image.height(); ++y)
    for (std::size_t x = 0; x < image.width(); ++x)
      if (image.pixel(y, x) != bg) {
        box.y0 = std::min(box.y0, y);
        box.x0 = std::min(box.x0, x);
        box.y1 = std::max(box.y1, y + 1);
        box.x1 = std::max(box.x1, x + 1);
      }
  if (box.y1 == 0) return {};
  return box;
}

Image apply_color_stain(const Image& image, const Rgb& background_recolor, std::size_t stain_count,
                        const Rgb& stain_color, std::uint64_t seed) {
  const Rgb bg = background_color(image);
  const Box box = structured_bounds(image);
  Image out = image;
  std::vector<bool> is_bg(image.height() * image.width());
  for (std::size_t y = 0; y < image.height(); ++y)
    for (std::size_t x = 0; x < image.width(); ++x)
      if (image.pixel(y, x) == bg) {
        is_bg[y * image.width() + x] = true;
        out.set_pixel(y, x, background_recolor);
      }
  constexpr long kMargin = 3;
  auto near_structure = [&](std::size_t y, std::size_t x) {
    if (box.empty()) return false;
    const long ly = static_cast<long>(y), lx = static_cast<long>(x);
    return ly >= static_cast<long>(box.y0) - kMargin && ly < static_cast<long>(box.y1) + kMargin &&
           lx >= static_cast<long>(box.x0) - kMargin && lx < static_cast<long>(box.x1) + kMargin;
  };
  Rng rng(seed);
  std::size_t placed = 0;
  for (std::size_t attempt = 0; placed < stain_count && attempt < stain_count * 50; ++attempt) {
    const Blob blob = Blob::random(rng, rng.uniform(0, static_cast<double>(image.height())),
                                   rng.uniform(0, static_cast<double>(image.width())), rng.uniform(2.5, 6.0));
    bool clear = true;
    blob.for_each_pixel(image, [&](std::size_t y, std::size_t x) { clear = clear && !near_structure(y, x); });
    if (!clear) continue;
    blob.for_each_pixel(image, [&](std::size_t y, std::size_t x) {
      if (is_bg[y * image.width() + x]) out.set_pixel(y, x, stain_color);
    });
    ++placed;
  }
  return out;
}

Image gen_color_stain_reference(const Image& original, std::uint64_t seed) {
  const Rgb bg = background_color(original);
  Box box = structured_bounds(original);
  if (box.empty()) box = {kProbeSize / 2 - 16, kProbeSize / 2 - 16, kProbeSize / 2 + 16, kProbeSize / 2 + 16};
  box.y1 = std::min(box.y1, original.height());
  box.x1 = std::min(box.x1, original.width());

  std::vector<Rgb> structure_colors;
  for (std::size_t y = box.y0; y < box.y1; ++y)
    for (std::size_t x = box.x0; x < box.x1; ++x) {
      const Rgb c = original.pixel(y, x);
      if (c != bg && std::find(structure_colors.begin(), structure_colors.end(), c) == structure_colors.end())
        structure_colors.push_back(c);
    }
  std::vector<Rgb> candidates;
  for (const Rgb& c : saturated_palette()) {
    bool distinct = color_gap(c, bg) > 0.3f;
    for (const Rgb& s : structure_colors) distinct = distinct && color_gap(c, s) > 0.3f;
    if (distinct) candidates.push_back(c);
  }
  if (candidates.empty()) candidates = {invert(Image(1, 1, bg)).pixel(0, 0)};

  Image out = original;
  for (std::size_t y = box.y0; y < box.y1; ++y)
    for (std::size_t x = box.x0; x < box.x1; ++x)
      if (out.pixel(y, x) != bg) out.set_pixel(y, x, bg);

  // Axis-aligned bars and a triangle: a different shape family from the blobs.
  Rng rng(seed);
  const long y0 = static_cast<long>(box.y0), x0 = static_cast<long>(box.x0);
  const long bh = static_cast<long>(box.y1 - box.y0), bw = static_cast<long>(box.x1 - box.x0);
  const int bars = rng.range(2, 4);
  for (int i = 0; i < bars; ++i) {
    const Rgb& c = rng.pick(candidates);
    if (rng.coin()) {
      const long thick = std::max(2L, bh / 6);
      const long top = y0 + rng.range(0, static_cast<int>(std::max(1L, bh - thick)));
      fill_rect(out, top, x0, top + thick, x0 + bw, c);
    } else {
      const long thick = std::max(2L, bw / 6);
      const long left = x0 + rng.range(0, static_cast<int>(std::max(1L, bw - thick)));
      fill_rect(out, y0, left, y0 + bh, left + thick, c);
    }
  }
  const Rgb& tri = rng.pick(candidates);
  for (long y = 0; y < bh; ++y) {
    const long half = (y * bw) / (2 * std::max(1L, bh));
    fill_rect(out, y0 + y, x0 + bw / 2 - half, y0 + y + 1, x0 + bw / 2 + half + 1, tri);
  }
  return out;
}

SuiteSizes SuiteSizes::reduced() {
  SuiteSizes s;
  s.invert = 5;
  s.rotate_originals = 1;
  s.translate = 5;
  s.color_stain = 5;
  return s;
}

std::vector<ProbeCase> gen_probe_suite(std::uint64_t root_seed, const SuiteSizes& sizes) {
  enum Stream : std::uint64_t { kRefs = 1, kInvert, kRotate, kTranslate, kStain, kStainRef, kStainParams };
  const auto shared_refs = gen_references(derive_seed(root_seed, kRefs, 0));
  std::vector<ProbeCase> cases;
  char label[64];

  for (std::size_t i = 0; i < sizes.invert; ++i) {
    const std::uint64_t seed = derive_seed(root_seed, kInvert, i);
    Image original = gen_pattern(PatternKind::kBwPattern, seed);
    std::snprintf(label, sizeof label, "invert-%02zu", i);
    cases.push_back({ProbeCategory::kInvert, original, invert(original), shared_refs, label, seed});
  }

  for (std::size_t i = 0; i < sizes.rotate_originals; ++i) {
    const std::uint64_t seed = derive_seed(root_seed, kRotate, i);
    const PatternKind kind = i % 2 == 0 ? PatternKind::kRegionScene : PatternKind::kColoredShapes;
    const Image original = recenter(gen_pattern(kind, seed));
    const Rgb bg = background_color(original);
    for (double angle : sizes.rotate_angles) {
      std::snprintf(label, sizeof label, "rotate-%02zu-%.1f", i, angle);
      cases.push_back({ProbeCategory::kRotate, original, rotate(original, angle, bg), shared_refs, label, seed});
    }
  }

  for (std::size_t i = 0; i < sizes.translate; ++i) {
    const std::uint64_t seed = derive_seed(root_seed, kTranslate, i);
    const Image original = gen_pattern(PatternKind::kRegionScene, seed);
    const Box box = structured_bounds(original);
    const int shift = sizes.translate_shifts[i % sizes.translate_shifts.size()];
    const int sx = (box.x0 + box.x1) / 2 < kProbeSize / 2 ? shift : -shift;
    const int sy = (box.y0 + box.y1) / 2 < kProbeSize / 2 ? shift : -shift;
    const int axes = static_cast<int>(i % 3);  // 0: x, 1: y, 2: both
    const int dx = axes == 1 ? 0 : sx;
    const int dy = axes == 0 ? 0 : sy;
    std::snprintf(label, sizeof label, "translate-%02zu-dx%d-dy%d", i, dx, dy);
    cases.push_back({ProbeCategory::kTranslate, original,
                     translate_region(original, dx, dy, background_color(original)), shared_refs, label, seed});
  }

  static const std::vector<Rgb> recolors = {{0.1f, 0.45f, 0.1f}, {0.55f, 0.35f, 0.2f}, {0.3f, 0.3f, 0.55f},
                                            {0.6f, 0.6f, 0.6f}, {0.45f, 0.1f, 0.1f}};
  static const std::vector<Rgb> stain_colors = {{1.0f, 0.9f, 0.1f}, {0.9f, 0.9f, 0.9f}, {0.1f, 0.1f, 0.1f},
                                                {0.2f, 0.9f, 0.9f}};
  for (std::size_t i = 0; i < sizes.color_stain; ++i) {
    const std::uint64_t seed = derive_seed(root_seed, kStain, i);
    const Image original = gen_pattern(PatternKind::kColoredShapes, seed);
    Rng params(derive_seed(root_seed, kStainParams, i));
    const Rgb recolor = darker(params.pick(recolors), static_cast<float>(params.uniform(0.8, 1.0)));
    const std::size_t stains = i % 2 == 0 ? static_cast<std::size_t>(params.range(8, 16)) : 0;
    const Rgb stain = params.pick(stain_colors);
    Image distorted = apply_color_stain(original, recolor, stains, stain, seed ^ 0x5a5a5a5aULL);
    Image reference = gen_color_stain_reference(original, derive_seed(root_seed, kStainRef, i));
    std::snprintf(label, sizeof label, "color_stain-%02zu", i);
    cases.push_back({ProbeCategory::kColorStain, original, std::move(distorted), {std::move(reference)}, label, seed});
  }
  return cases;
}

PassCount ProbeTable::count(const std::string& config_id, ProbeCategory category) const {
  auto it = counts.find({config_id, category});
  return it == counts.end() ? PassCount{} : it->second;
}

namespace {

struct ImageKey {
  std::uint64_t hash;
  BackboneId backbone;
  bool unit;
  bool operator==(const ImageKey&) const = default;
};

struct ImageKeyHash {
  std::size_t operator()(const ImageKey& k) const {
    return static_cast<std::size_t>(k.hash ^ (static_cast<std::uint64_t>(k.backbone) << 1) ^ (k.unit ? 1u : 0u));
  }
};

std::uint64_t content_hash(const Image& image) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&](std::uint64_t v) { h = (h ^ v) * 1099511628211ULL; };
  feed(image.height());
  feed(image.width());
  for (float v : image.pixels()) feed(std::bit_cast<std::uint32_t>(v));
  return h;
}

// Memoizes (optionally unit-normalized) feature stacks by image content.
class FeatureCache {
 public:
  explicit FeatureCache(const ExtractorSet& extractors) : extractors_(extractors) {}

  const FeatureStack& get(const Image& image, BackboneId backbone, bool unit, float epsilon) {
    const ImageKey key{content_hash(image), backbone, unit};
    auto [lo, hi] = entries_.equal_range(key);
    for (auto it = lo; it != hi; ++it)
      if (it->second.image == image) return *it->second.stack;
    std::shared_ptr<const FeatureStack> stack;
    if (unit) {
      stack = std::make_shared<FeatureStack>(unit_normalize(get(image, backbone, false, epsilon), epsilon));
    } else {
      auto ex = extractors_.find(backbone);
      if (ex == extractors_.end()) {
        throw Error(ErrorCode::kInvalidArgument,
                    "no weights loaded for backbone " + std::string(to_string(backbone)));
      }
      stack = std::make_shared<FeatureStack>(ex->second.extract(image));
    }
    return *entries_.emplace(key, Entry{image, stack})->second.stack;
  }

 private:
  struct Entry {
    Image image;
    std::shared_ptr<const FeatureStack> stack;
  };
  const ExtractorSet& extractors_;
  std::unordered_multimap<ImageKey, Entry, ImageKeyHash> entries_;
};

}  // namespace

ProbeTable run_probe_suite(const std::vector<ProbeCase>& cases, const std::vector<MetricConfig>& configs,
                           const ExtractorSet& extractors) {
  ProbeTable table;
  for (const MetricConfig& config : configs) {
    config.validate();
    table.configs.push_back(config);
    table.config_ids.push_back(config.id());
    if (config.backbone && !extractors.count(*config.backbone)) {
      throw Error(ErrorCode::kInvalidArgument, "config " + config.id() + " has no weights loaded");
    }
  }
  FeatureCache cache(extractors);
  for (const ProbeCase& pc : cases) {
    if (pc.references.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "probe case " + pc.label + " has no references");
    }
    for (std::size_t k = 0; k < configs.size(); ++k) {
      const MetricConfig& config = configs[k];
      auto measure = [&](const Image& other) -> double {
        if (config.method == Method::kPixelwise) return pixelwise_distance(pc.original, other, config.norm).value;
        // normalization happens in the cache, so dispatch on raw-config semantics
        MetricConfig raw = config;
        raw.unit_normalize = false;
        const bool unit = config.unit_normalize;
        const FeatureStack& a = cache.get(pc.original, *config.backbone, unit, config.unit_norm_epsilon);
        const FeatureStack& b = cache.get(other, *config.backbone, unit, config.unit_norm_epsilon);
        return feature_distance(a, b, raw).value;
      };
      ProbeResult r;
      r.case_label = pc.label;
      r.category = pc.category;
      r.config_id = table.config_ids[k];
      try {
        r.distance_to_distorted = measure(pc.distorted);
        r.min_reference_distance = std::numeric_limits<double>::infinity();
        for (const Image& ref : pc.references)
          r.min_reference_distance = std::min(r.min_reference_distance, measure(ref));
      } catch (const Error& e) {
        throw Error(e.code(), "probe " + pc.label + " / " + r.config_id + ": " + e.what());
      }
      r.passed = r.distance_to_distorted < r.min_reference_distance;
      PassCount& pcnt = table.counts[{r.config_id, pc.category}];
      ++pcnt.total;
      if (r.passed) ++pcnt.passed;
      table.results.push_back(std::move(r));
    }
  }
  return table;
}

std::vector<MetricConfig> default_probe_configs(const std::vector<BackboneId>& backbones, bool unit_normalize) {
  std::vector<MetricConfig> configs;
  configs.push_back({Method::kPixelwise, Norm::kL2, false, std::nullopt});
  for (Method m : kAllMethods) {
    if (m == Method::kPixelwise) continue;
    for (BackboneId b : backbones) configs.push_back({m, Norm::kL2, unit_normalize, b});
  }
  return configs;
}

void write_probe_records(std::ostream& out, const std::vector<ProbeCase>& cases, const ProbeTable& table) {
  for (const ProbeCase& pc : cases) {
    nlohmann::ordered_json j;
    j["type"] = "case";
    j["label"] = pc.label;
    j["category"] = to_string(pc.category);
    j["seed"] = pc.seed;
    j["references"] = pc.references.size();
    out << j.dump() << '\n';
  }
  for (const ProbeResult& r : table.results) {
    nlohmann::ordered_json j;
    j["type"] = "result";
    j["label"] = r.case_label;
    j["category"] = to_string(r.category);
    j["config"] = r.config_id;
    j["passed"] = r.passed;
    j["distance_to_distorted"] = r.distance_to_distorted;
    j["min_reference_distance"] = r.min_reference_distance;
    out << j.dump() << '\n';
  }
}

std::string format_probe_table(const ProbeTable& table) {
  std::size_t width = 6;
  for (const auto& id : table.config_ids) width = std::max(width, id.size());
  std::ostringstream out;
  auto pad = [](std::string s, std::size_t n) {
    s.resize(std::max(n, s.size()), ' ');
    return s;
  };
  out << pad("Config", width) << "  " << pad("Invert", 8) << pad("Rotate", 8) << pad("Translate", 11)
      << "Color Stain\n";
  out << std::string(width + 2 + 8 + 8 + 11 + 11, '-') << '\n';
  for (const auto& id : table.config_ids) {
    out << pad(id, width) << "  ";
    const std::size_t widths[] = {8, 8, 11, 11};
    std::size_t col = 0;
    for (ProbeCategory c : kAllCategories) {
      const PassCount pc = table.count(id, c);
      std::string cell = std::to_string(pc.passed) + "/" + std::to_string(pc.total);
      out << (col + 1 < 4 ? pad(cell, widths[col]) : cell);
      ++col;
    }
    out << '\n';
  }
  return out.str();
}

std::vector<ClaimCheck> check_directional_claims(const ProbeTable& table, double rotate_fraction) {
  struct Rule {
    std::string name;
    std::vector<Method> methods;
    ProbeCategory category;
    // holds for one config's pass count
    std::function<bool(const PassCount&)> ok;
  };
  const std::vector<Rule> rules = {
      {"(a) pixelwise fails every invert probe", {Method::kPixelwise}, ProbeCategory::kInvert,
       [](const PassCount& p) { return p.passed == 0; }},
      {"(b) spatial/mean/sort pass every invert probe", {Method::kSpatial, Method::kMean, Method::kSort},
       ProbeCategory::kInvert, [](const PassCount& p) { return p.passed == p.total; }},
      {"(c) spatial fails every translate probe", {Method::kSpatial}, ProbeCategory::kTranslate,
       [](const PassCount& p) { return p.passed == 0; }},
      {"(d) mean/sort pass every translate probe", {Method::kMean, Method::kSort}, ProbeCategory::kTranslate,
       [](const PassCount& p) { return p.passed == p.total; }},
      {"(e) mean/sort pass >= " + std::to_string(static_cast<int>(rotate_fraction * 100)) + "% of rotate probes",
       {Method::kMean, Method::kSort}, ProbeCategory::kRotate,
       [rotate_fraction](const PassCount& p) {
         return static_cast<double>(p.passed) >= rotate_fraction * static_cast<double>(p.total);
       }},
  };
  std::vector<ClaimCheck> checks;
  for (const Rule& rule : rules) {
    ClaimCheck check{rule.name, true, ""};
    std::size_t evaluated = 0;
    for (std::size_t k = 0; k < table.configs.size(); ++k) {
      const MetricConfig& config = table.configs[k];
      if (config.unit_normalize) continue;
      if (std::find(rule.methods.begin(), rule.methods.end(), config.method) == rule.methods.end()) continue;
      const PassCount p = table.count(table.config_ids[k], rule.category);
      if (p.total == 0) continue;
      ++evaluated;
      const bool ok = rule.ok(p);
      check.holds = check.holds && ok;
      check.detail += (check.detail.empty() ? "" : ", ") + table.config_ids[k] + " " +
                      std::to_string(p.passed) + "/" + std::to_string(p.total) + (ok ? "" : " (violates)");
    }
    if (evaluated == 0) continue;
    checks.push_back(std::move(check));
  }
  return checks;
}

}  // namespace dps
