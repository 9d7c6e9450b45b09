#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <memory>
#include <string>

#include "evline/event.hpp"

namespace evline {

// Surface of Active Events: newest timestamp per pixel.
//
// Cells are relaxed atomics so the maintenance context may read while the
// ingest context writes; a read observes some value stored at or after the
// read started. There is exactly one writer per surface.
class SurfaceOfActiveEvents {
 public:
  SurfaceOfActiveEvents() = default;
  explicit SurfaceOfActiveEvents(SensorSize size)
      : size_(size),
        cells_(std::make_unique<std::atomic<TimeUs>[]>(
            static_cast<std::size_t>(size.width) * size.height)) {
    clear();
  }

  SensorSize size() const { return size_; }
  int width() const { return size_.width; }
  int height() const { return size_.height; }

  void clear() {
    const std::size_t n = static_cast<std::size_t>(size_.width) * size_.height;
    for (std::size_t i = 0; i < n; ++i) {
      cells_[i].store(kNeverFired, std::memory_order_relaxed);
    }
  }

  TimeUs at(int x, int y) const {
    return cells_[index(x, y)].load(std::memory_order_relaxed);
  }

  // Max semantics: an older event never overwrites a newer timestamp.
  void update(int x, int y, TimeUs t) {
    check_bounds(x, y);
    auto& cell = cells_[index(x, y)];
    if (t > cell.load(std::memory_order_relaxed)) {
      cell.store(t, std::memory_order_relaxed);
    }
  }
  void update(const Event& e) { update(e.x, e.y, e.t); }

  void reset(int x, int y) {
    check_bounds(x, y);
    cells_[index(x, y)].store(kNeverFired, std::memory_order_relaxed);
  }

  // Number of pixels in the (2*half_extent+1)^2 window around (cx, cy),
  // clipped at the border and excluding the centre, whose newest timestamp is
  // >= min_t.
  int count_window(int cx, int cy, int half_extent, TimeUs min_t) const {
    check_bounds(cx, cy);
    const int x0 = std::max(0, cx - half_extent);
    const int x1 = std::min(size_.width - 1, cx + half_extent);
    const int y0 = std::max(0, cy - half_extent);
    const int y1 = std::min(size_.height - 1, cy + half_extent);
    int count = 0;
    for (int y = y0; y <= y1; ++y) {
      const std::size_t row = static_cast<std::size_t>(y) * size_.width;
      for (int x = x0; x <= x1; ++x) {
        if (x == cx && y == cy) continue;
        const TimeUs t = cells_[row + x].load(std::memory_order_relaxed);
        if (t != kNeverFired && t >= min_t) ++count;
      }
    }
    return count;
  }

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * size_.width + x;
  }
  void check_bounds(int x, int y) const {
    if (!size_.contains(x, y)) {
      throw BoundsError("pixel (" + std::to_string(x) + "," +
                        std::to_string(y) + ") outside " +
                        std::to_string(size_.width) + "x" +
                        std::to_string(size_.height) + " sensor");
    }
  }

  SensorSize size_{0, 0};
  std::unique_ptr<std::atomic<TimeUs>[]> cells_;
};

}  // namespace evline
