#pragma once

// Top-down raster of a world, written as an 8-bit RGB PNG.

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "sim.hpp"

namespace v2v {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend constexpr bool operator==(Rgb, Rgb) = default;
};

namespace palette {
inline constexpr Rgb kBackground{34, 70, 34};
inline constexpr Rgb kRoad{110, 110, 110};
inline constexpr Rgb kWall{235, 235, 235};
inline constexpr Rgb kExit{230, 200, 40};
inline constexpr Rgb kActive{40, 110, 230};
inline constexpr Rgb kExited{40, 200, 80};
inline constexpr Rgb kCrashed{220, 40, 40};
inline constexpr Rgb kPassedExit{240, 140, 30};
inline constexpr Rgb kTimedOut{150, 60, 200};
}  // namespace palette

constexpr Rgb status_color(CarStatus s) {
  switch (s) {
    case CarStatus::active: return palette::kActive;
    case CarStatus::exited: return palette::kExited;
    case CarStatus::crashed: return palette::kCrashed;
    case CarStatus::passed_exit: return palette::kPassedExit;
    case CarStatus::timed_out: return palette::kTimedOut;
  }
  return palette::kActive;
}

struct Image {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;

  Image(int w, int h, Rgb fill) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}
  Rgb& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  [[nodiscard]] Rgb at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct RenderOptions {
  int width = 1024;
  int height = 512;
  double margin_m = 4.0;
};

namespace detail {

struct View {
  double scale = 1.0;
  Vec2 min;
  int height = 0;
  double pad_x = 0.0, pad_y = 0.0;

  [[nodiscard]] Vec2 to_pixel(Vec2 p) const {
    return {pad_x + (p.x - min.x) * scale, height - (pad_y + (p.y - min.y) * scale)};
  }
};

// Fills a convex polygon given in pixel coordinates (pixel-centre sampling).
inline void fill_convex(Image& img, std::span<const Vec2> poly, Rgb color) {
  double x0 = poly[0].x, x1 = x0, y0 = poly[0].y, y1 = y0;
  for (Vec2 p : poly) {
    x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
  }
  const int xa = std::max(0, static_cast<int>(std::floor(x0))), xb = std::min(img.width - 1, static_cast<int>(std::ceil(x1)));
  const int ya = std::max(0, static_cast<int>(std::floor(y0))), yb = std::min(img.height - 1, static_cast<int>(std::ceil(y1)));
  for (int y = ya; y <= yb; ++y) {
    for (int x = xa; x <= xb; ++x) {
      const Vec2 c{x + 0.5, y + 0.5};
      bool pos = false, neg = false;
      for (std::size_t i = 0; i < poly.size(); ++i) {
        const double s = cross(poly[(i + 1) % poly.size()] - poly[i], c - poly[i]);
        pos |= s > 0.0;
        neg |= s < 0.0;
      }
      if (!(pos && neg)) img.at(x, y) = color;
    }
  }
}

inline void draw_line(Image& img, Vec2 a, Vec2 b, Rgb color) {
  const double len = std::max(std::abs(b.x - a.x), std::abs(b.y - a.y));
  const int steps = std::max(1, static_cast<int>(std::ceil(len)));
  for (int i = 0; i <= steps; ++i) {
    const Vec2 p = a + (b - a) * (static_cast<double>(i) / steps);
    const int x = static_cast<int>(std::floor(p.x)), y = static_cast<int>(std::floor(p.y));
    if (x >= 0 && x < img.width && y >= 0 && y < img.height) img.at(x, y) = color;
  }
}

}  // namespace detail

inline Image render_frame(const WorldState& w, const RenderOptions& opt = {}) {
  Image img(opt.width, opt.height, palette::kBackground);
  const WorldGeometry& g = w.geometry;
  const double hw = 0.5 * g.width;
  std::vector<Vec2> pts = {g.to_world(0, -hw), g.to_world(0, hw), g.to_world(g.length, hw), g.to_world(g.length, -hw)};
  for (const ExitRegion& e : g.exits)
    for (Vec2 c : e.area.corners()) pts.push_back(c);
  Vec2 lo = pts[0], hi = pts[0];
  for (Vec2 p : pts) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
  }
  lo = lo - Vec2{opt.margin_m, opt.margin_m};
  hi = hi + Vec2{opt.margin_m, opt.margin_m};
  detail::View v;
  v.scale = std::min(opt.width / (hi.x - lo.x), opt.height / (hi.y - lo.y));
  v.min = lo;
  v.height = opt.height;
  v.pad_x = 0.5 * (opt.width - (hi.x - lo.x) * v.scale);
  v.pad_y = 0.5 * (opt.height - (hi.y - lo.y) * v.scale);

  auto to_px = [&](std::span<const Vec2> poly) {
    std::vector<Vec2> out;
    for (Vec2 p : poly) out.push_back(v.to_pixel(p));
    return out;
  };
  const std::array<Vec2, 4> road = {pts[0], pts[1], pts[2], pts[3]};
  detail::fill_convex(img, to_px(road), palette::kRoad);
  for (const ExitRegion& e : g.exits) detail::fill_convex(img, to_px(e.area.corners()), palette::kExit);
  for (const Segment& s : g.walls) detail::draw_line(img, v.to_pixel(s.a), v.to_pixel(s.b), palette::kWall);
  for (const CarState& c : w.cars) detail::fill_convex(img, to_px(c.body().corners()), status_color(c.status));
  return img;
}

inline std::vector<std::uint8_t> encode_png(const Image& img) {
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(img.height) * (1 + 3 * static_cast<std::size_t>(img.width)));
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);  // filter: none
    for (int x = 0; x < img.width; ++x) {
      const Rgb p = img.at(x, y);
      raw.insert(raw.end(), {p.r, p.g, p.b});
    }
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw FileError("PNG compression failed");
  z.resize(zlen);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  auto be32 = [&](std::vector<std::uint8_t>& b, std::uint32_t x) {
    for (int i = 3; i >= 0; --i) b.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
  };
  auto chunk = [&](const char* type, const std::vector<std::uint8_t>& data) {
    be32(out, static_cast<std::uint32_t>(data.size()));
    std::vector<std::uint8_t> body(type, type + 4);
    body.insert(body.end(), data.begin(), data.end());
    out.insert(out.end(), body.begin(), body.end());
    be32(out, static_cast<std::uint32_t>(crc32(0L, body.data(), static_cast<uInt>(body.size()))));
  };
  std::vector<std::uint8_t> ihdr;
  be32(ihdr, static_cast<std::uint32_t>(img.width));
  be32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit RGB
  chunk("IHDR", ihdr);
  chunk("IDAT", z);
  chunk("IEND", {});
  return out;
}

inline void write_png(const std::filesystem::path& path, const Image& img) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FileError("write failed: " + path.string());
}

}  // namespace v2v
