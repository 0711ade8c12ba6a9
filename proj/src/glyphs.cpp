#include "mtl/glyphs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "mtl/error.hpp"
#include "mtl/random.hpp"

namespace mtl {

namespace {

struct Point {
  double x, y;
};
using Stroke = std::vector<Point>;

Stroke arc(double cx, double cy, double rx, double ry, double from_deg, double to_deg, int segments = 14) {
  Stroke s;
  for (int i = 0; i <= segments; ++i) {
    const double t = (from_deg + (to_deg - from_deg) * i / segments) * std::numbers::pi / 180.0;
    s.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
  }
  return s;
}

// Unit box, x to the right, y downward; angles measured clockwise from +x.
std::vector<Stroke> strokes_for(int digit) {
  switch (digit) {
    case 0: return {arc(0.5, 0.5, 0.32, 0.45, 0, 360, 24)};
    case 1: return {{{0.35, 0.22}, {0.55, 0.05}, {0.55, 0.95}}, {{0.35, 0.95}, {0.75, 0.95}}};
    case 2: {
      Stroke top = arc(0.5, 0.3, 0.3, 0.25, 190, 380);
      top.push_back({0.18, 0.95});
      top.push_back({0.85, 0.95});
      return {top};
    }
    case 3: return {arc(0.48, 0.28, 0.3, 0.23, 200, 450), arc(0.48, 0.72, 0.32, 0.24, 270, 520)};
    case 4: return {{{0.62, 0.95}, {0.62, 0.05}, {0.12, 0.68}, {0.88, 0.68}}};
    case 5: {
      Stroke s{{0.8, 0.05}, {0.25, 0.05}, {0.22, 0.45}};
      Stroke bowl = arc(0.5, 0.67, 0.32, 0.28, 230, 500);
      s.insert(s.end(), bowl.begin(), bowl.end());
      return {s};
    }
    case 6: {
      Stroke s = arc(0.62, 0.4, 0.4, 0.55, 250, 175, 10);
      Stroke loop = arc(0.5, 0.7, 0.3, 0.25, 180, 540, 20);
      s.insert(s.end(), loop.begin(), loop.end());
      return {s};
    }
    case 7: return {{{0.15, 0.05}, {0.85, 0.05}, {0.4, 0.95}}, {{0.35, 0.5}, {0.7, 0.5}}};
    case 8: return {arc(0.5, 0.27, 0.25, 0.22, 0, 360, 20), arc(0.5, 0.72, 0.3, 0.24, 0, 360, 20)};
    case 9: {
      Stroke s = arc(0.48, 0.3, 0.3, 0.25, 0, 360, 20);
      s.push_back({0.78, 0.3});
      s.push_back({0.6, 0.95});
      return {s};
    }
    default: return {};
  }
}

double segment_distance(Point p, Point a, Point b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double wx = p.x - a.x, wy = p.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? (wx * vx + wy * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = wx - t * vx, dy = wy - t * vy;
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

LabeledImages make_glyph_set(std::size_t count, std::uint64_t seed) {
  constexpr std::size_t kSide = 28;
  constexpr std::size_t kBox = 20;
  constexpr std::size_t kMargin = (kSide - kBox) / 2;
  LabeledImages set;
  set.rows = kSide;
  set.cols = kSide;
  set.name = "glyphs(seed=" + std::to_string(seed) + ")";
  set.pixels.assign(count * kSide * kSide, 0);
  set.labels.resize(count);

  Rng rng(derive_seed(seed, 0x61797068));
  std::array<std::vector<Stroke>, 10> templates;
  for (int d = 0; d < 10; ++d) templates[d] = strokes_for(d);

  std::vector<double> canvas(kSide * kSide);
  for (std::size_t n = 0; n < count; ++n) {
    const int digit = static_cast<int>(rng.below(10));
    set.labels[n] = static_cast<std::uint8_t>(digit);

    const double angle = rng.uniform(-0.25, 0.25);
    const double scale = rng.uniform(15.0, 21.0);
    const double aspect = rng.uniform(0.75, 1.1);
    const double shear = rng.uniform(-0.3, 0.3);
    const double cx = 14.0 + rng.uniform(-2.0, 2.0);
    const double cy = 14.0 + rng.uniform(-2.0, 2.0);
    const double width = rng.uniform(1.0, 2.6);
    const double jitter = rng.uniform(0.0, 0.05);
    const double ca = std::cos(angle), sa = std::sin(angle);

    std::vector<std::vector<Point>> unit;  // template coordinates after jitter, aspect and shear
    for (const auto& stroke : templates[digit]) {
      std::vector<Point> pts;
      for (const auto& p : stroke) {
        double u = (p.x - 0.5 + rng.uniform(-jitter, jitter)) * aspect;
        const double v = p.y - 0.5 + rng.uniform(-jitter, jitter);
        u += shear * v;
        pts.push_back({ca * u - sa * v, sa * u + ca * v});
      }
      unit.push_back(std::move(pts));
    }

    // Render, shrinking until the ink fits the 20x20 box.
    double s = scale;
    std::size_t r0 = 0, r1 = 0, c0 = 0, c1 = 0;
    for (int attempt = 0;; ++attempt) {
      std::fill(canvas.begin(), canvas.end(), 0.0);
      for (std::size_t r = 0; r < kSide; ++r) {
        for (std::size_t c = 0; c < kSide; ++c) {
          const Point p{c + 0.5, r + 0.5};
          double best = 1e9;
          for (const auto& pts : unit) {
            for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
              const Point a{cx + s * pts[i].x, cy + s * pts[i].y};
              const Point b{cx + s * pts[i + 1].x, cy + s * pts[i + 1].y};
              best = std::min(best, segment_distance(p, a, b));
            }
          }
          canvas[r * kSide + c] = std::clamp(1.0 - (best - 0.5 * width), 0.0, 1.0);
        }
      }
      r0 = c0 = kSide;
      r1 = c1 = 0;
      for (std::size_t r = 0; r < kSide; ++r) {
        for (std::size_t c = 0; c < kSide; ++c) {
          if (canvas[r * kSide + c] <= 0.0) continue;
          r0 = std::min(r0, r);
          r1 = std::max(r1, r + 1);
          c0 = std::min(c0, c);
          c1 = std::max(c1, c + 1);
        }
      }
      if (r1 <= r0) throw Error("glyph rendered without ink");
      const std::size_t extent = std::max(r1 - r0, c1 - c0);
      // The canvas clips, so a full-width extent understates the true size.
      if (extent <= kBox && r0 > 0 && c0 > 0 && r1 < kSide && c1 < kSide) break;
      if (attempt == 8) throw Error("glyph rendering did not converge");
      s *= 0.85 * kBox / static_cast<double>(extent);
    }

    // Centre of mass to the middle, clamped so the box stays inside the margin.
    double mass = 0, mr = 0, mc = 0;
    for (std::size_t r = 0; r < kSide; ++r) {
      for (std::size_t c = 0; c < kSide; ++c) {
        const double w = canvas[r * kSide + c];
        mass += w;
        mr += w * (r + 0.5);
        mc += w * (c + 0.5);
      }
    }
    const auto shift_for = [&](double centre, std::size_t lo, std::size_t hi) {
      const long want = std::lround(14.0 - centre);
      const long min_shift = static_cast<long>(kMargin) - static_cast<long>(lo);
      const long max_shift = static_cast<long>(kSide - kMargin) - static_cast<long>(hi);
      return std::clamp(want, min_shift, max_shift);
    };
    const long dr = shift_for(mr / mass, r0, r1), dc = shift_for(mc / mass, c0, c1);
    std::vector<double> shifted(kSide * kSide, 0.0);
    for (std::size_t r = r0; r < r1; ++r) {
      for (std::size_t c = c0; c < c1; ++c) shifted[(r + dr) * kSide + (c + dc)] = canvas[r * kSide + c];
    }
    canvas.swap(shifted);

    const double ink = rng.uniform(0.75, 1.0);
    auto* out = set.pixels.data() + n * kSide * kSide;
    for (std::size_t i = 0; i < canvas.size(); ++i) {
      out[i] = static_cast<std::uint8_t>(std::lround(255.0 * ink * canvas[i]));
    }
  }
  return set;
}

}  // namespace mtl
