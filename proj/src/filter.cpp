#include "evline/filter.hpp"

namespace evline {

namespace {

bool elapsed_at_least(TimeUs now, TimeUs last, TimeUs period) {
  return last == kNeverFired || now - last >= period;
}

}  // namespace

bool refractory_pass(const Event& e, const SurfaceOfActiveEvents& same,
                     const SurfaceOfActiveEvents& opposite, const FilterConfig& cfg) {
  return elapsed_at_least(e.t, same.at(e.x, e.y), cfg.refractory_same_polarity) &&
         elapsed_at_least(e.t, opposite.at(e.x, e.y), cfg.refractory_opposite_polarity);
}

bool neighborhood_pass(const Event& e, const SurfaceOfActiveEvents& merged,
                       const FilterConfig& cfg) {
  const int support = merged.count_window(e.x, e.y, cfg.neighborhood_half_extent,
                                          e.t - cfg.neighborhood_age);
  return support >= cfg.neighborhood_min_support;
}

EventFilter::EventFilter(SensorSize size, FilterConfig cfg, bool split_polarity)
    : cfg_(cfg),
      split_polarity_(split_polarity),
      per_polarity_{SurfaceOfActiveEvents(size), SurfaceOfActiveEvents(size)},
      merged_(size) {
  cfg_.validate();
}

FilterVerdict EventFilter::filter(const Event& e) {
  if (!merged_.size().contains(e)) {
    ++out_of_bounds_;
    return FilterVerdict::OutOfBounds;
  }
  const Polarity p = split_polarity_ ? e.polarity : Polarity::On;
  auto& same = per_polarity_[static_cast<int>(p)];
  const auto& other = per_polarity_[static_cast<int>(opposite(p))];

  FilterVerdict verdict = FilterVerdict::Pass;
  if (!refractory_pass(e, same, other, cfg_)) {
    verdict = FilterVerdict::Refractory;
  } else if (!neighborhood_pass(e, merged_, cfg_)) {
    verdict = FilterVerdict::Neighborhood;
  }

  // Support always sees every firing; only the refractory history may skip
  // suppressed ones.
  merged_.update(e);
  if (verdict == FilterVerdict::Pass || cfg_.update_on_suppress) same.update(e);
  return verdict;
}

}  // namespace evline
