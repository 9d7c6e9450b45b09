#pragma once

#include <array>
#include <cstdint>

#include "evline/config.hpp"
#include "evline/event.hpp"
#include "evline/sae.hpp"

namespace evline {

// Refractory stage. Pixels that never fired pass.
bool refractory_pass(const Event& e, const SurfaceOfActiveEvents& same,
                     const SurfaceOfActiveEvents& opposite, const FilterConfig& cfg);

// Neighbourhood stage over the polarity-merged surface.
bool neighborhood_pass(const Event& e, const SurfaceOfActiveEvents& merged,
                       const FilterConfig& cfg);

enum class FilterVerdict : std::uint8_t { Pass, Refractory, Neighborhood, OutOfBounds };

// Two-stage gate plus the surfaces it reads. In split-polarity mode the
// refractory stage consults one surface per polarity; in merged mode every
// event is treated as the same polarity.
class EventFilter {
 public:
  EventFilter(SensorSize size, FilterConfig cfg, bool split_polarity = true);

  FilterVerdict filter(const Event& e);
  bool pass(const Event& e) { return filter(e) == FilterVerdict::Pass; }

  const SurfaceOfActiveEvents& polarity_surface(Polarity p) const {
    return per_polarity_[static_cast<int>(p)];
  }
  const SurfaceOfActiveEvents& merged_surface() const { return merged_; }
  std::uint64_t out_of_bounds() const { return out_of_bounds_; }

 private:
  FilterConfig cfg_;
  bool split_polarity_;
  std::array<SurfaceOfActiveEvents, 2> per_polarity_;
  SurfaceOfActiveEvents merged_;
  std::uint64_t out_of_bounds_ = 0;
};

}  // namespace evline
