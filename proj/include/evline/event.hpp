#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace evline {

// Stream time in integer microseconds.
using TimeUs = std::int64_t;

constexpr TimeUs kNeverFired = std::numeric_limits<TimeUs>::min();

constexpr TimeUs ms_to_us(double ms) {
  return static_cast<TimeUs>(ms * 1000.0 + (ms >= 0 ? 0.5 : -0.5));
}

enum class Polarity : std::uint8_t { Off = 0, On = 1 };

constexpr Polarity opposite(Polarity p) {
  return p == Polarity::On ? Polarity::Off : Polarity::On;
}

struct Event {
  TimeUs t = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  Polarity polarity = Polarity::On;

  friend bool operator==(const Event&, const Event&) = default;
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

struct SensorSize {
  int width = 346;
  int height = 260;

  bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
  bool contains(const Event& e) const { return contains(e.x, e.y); }

  friend bool operator==(const SensorSize&, const SensorSize&) = default;
};

// Converts stream time into a pixel-commensurate axis so (x, y, t) can share
// one covariance matrix.
class TimeScale {
 public:
  TimeScale() = default;
  explicit TimeScale(double pixels_per_ms) : pixels_per_ms_(pixels_per_ms) {
    if (!(pixels_per_ms > 0.0) || !std::isfinite(pixels_per_ms)) {
      throw Error("time scale must be positive and finite");
    }
  }

  double pixels_per_ms() const { return pixels_per_ms_; }
  double scaled(TimeUs t) const {
    return static_cast<double>(t) * pixels_per_ms_ / 1000.0;
  }
  double scaled_span(TimeUs dt) const { return scaled(dt); }

 private:
  double pixels_per_ms_ = 1.0;
};

}  // namespace evline
