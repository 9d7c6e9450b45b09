#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evline/event.hpp"
#include "evline/tracker.hpp"

namespace evline {

using Rgb = std::array<std::uint8_t, 3>;

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, Rgb fill);
  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);
};

Rgb state_color(LineState s);

// Binary PPM (P6); P5 grey input is promoted to RGB.
void write_ppm(std::ostream& out, const Image& img);
Image read_ppm(std::istream& in);

struct OverlayOptions {
  std::optional<Image> background;
  Rgb canvas{24, 24, 32};
  Rgb on_event{90, 140, 220};
  Rgb off_event{200, 110, 60};
  int line_width = 1;
};

// Events (typically a recent window) are dotted first, then every line of
// the snapshot is drawn from midpoint - l/2 d to midpoint + l/2 d.
Image render_overlay(SensorSize sensor, std::span<const Event> events, const TrackSnapshot& snap,
                     const OverlayOptions& opts = {});

}  // namespace evline
