#include "evline/render.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <string>

namespace evline {

Image::Image(int w, int h, Rgb fill)
    : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3) {
  for (std::size_t i = 0; i < rgb.size(); i += 3) {
    rgb[i] = fill[0];
    rgb[i + 1] = fill[1];
    rgb[i + 2] = fill[2];
  }
}

Rgb Image::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  return {rgb[i], rgb[i + 1], rgb[i + 2]};
}

void Image::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  rgb[i] = c[0];
  rgb[i + 1] = c[1];
  rgb[i + 2] = c[2];
}

Rgb state_color(LineState s) {
  switch (s) {
    case LineState::Active: return {230, 30, 30};
    case LineState::Hibernated: return {240, 220, 40};
    case LineState::Initializing: return {150, 150, 150};
    case LineState::Deleted: break;
  }
  return {0, 0, 0};
}

void write_ppm(std::ostream& out, const Image& img) {
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
}

namespace {

// Next header token, skipping whitespace and comments.
std::string token(std::istream& in) {
  std::string t;
  for (;;) {
    const int c = in.get();
    if (c == EOF) return t;
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(c)) {
      if (!t.empty()) return t;
      continue;
    }
    t += static_cast<char>(c);
  }
}

}  // namespace

Image read_ppm(std::istream& in) {
  const std::string magic = token(in);
  if (magic != "P6" && magic != "P5") throw Error("unsupported image format, expected P5 or P6");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token(in));
    h = std::stoi(token(in));
    maxval = std::stoi(token(in));
  } catch (const std::exception&) {
    throw Error("malformed PPM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw Error("PPM must be 8-bit with positive size");
  Image img(w, h, {0, 0, 0});
  if (magic == "P6") {
    in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  } else {
    std::vector<std::uint8_t> grey(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(grey.data()), static_cast<std::streamsize>(grey.size()));
    for (std::size_t i = 0; i < grey.size(); ++i) {
      img.rgb[3 * i] = img.rgb[3 * i + 1] = img.rgb[3 * i + 2] = grey[i];
    }
  }
  if (!in) throw Error("truncated PPM data");
  return img;
}

Image render_overlay(SensorSize sensor, std::span<const Event> events, const TrackSnapshot& snap,
                     const OverlayOptions& opts) {
  Image img;
  if (opts.background) {
    if (opts.background->width != sensor.width || opts.background->height != sensor.height) {
      throw Error("background size does not match the sensor");
    }
    img = *opts.background;
  } else {
    img = Image(sensor.width, sensor.height, opts.canvas);
  }
  for (const auto& e : events) {
    img.set(e.x, e.y, e.polarity == Polarity::On ? opts.on_event : opts.off_event);
  }
  // Initializing lines underneath, active lines on top.
  for (LineState pass : {LineState::Initializing, LineState::Hibernated, LineState::Active}) {
    for (const auto& l : snap.lines) {
      if (l.state != pass) continue;
      const double a = l.angle_deg * std::numbers::pi / 180.0;
      const Vec2 d{std::cos(a), std::sin(a)};
      const Vec2 n{-d.y, d.x};
      const int steps = std::max(1, static_cast<int>(std::ceil(l.length * 2)));
      const int half = opts.line_width / 2;
      for (int i = 0; i <= steps; ++i) {
        const Vec2 p = l.midpoint + d * (l.length * (static_cast<double>(i) / steps - 0.5));
        for (int k = -half; k <= opts.line_width - 1 - half; ++k) {
          const Vec2 q = p + n * static_cast<double>(k);
          img.set(static_cast<int>(std::lround(q.x)), static_cast<int>(std::lround(q.y)),
                  state_color(l.state));
        }
      }
    }
  }
  return img;
}

}  // namespace evline
