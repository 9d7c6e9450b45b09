#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "evline/config.hpp"
#include "evline/event.hpp"
#include "evline/linalg.hpp"

namespace evline {

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Running mean and centred second moments of (x, y, t_scaled) points.
// Supports exact removal and merging (Welford / Chan updates).
class EventAccumulator {
 public:
  void add(const Vec3& p);
  void remove(const Vec3& p);
  void merge(const EventAccumulator& other);
  void clear();

  std::int64_t count() const { return n_; }
  const Vec3& mean() const { return mean_; }
  // C = M2 / (N - 1); zero for N < 2.
  Mat3 covariance() const;
  // 2x2 xy block of the covariance.
  std::array<double, 3> covariance_xy() const;

 private:
  std::int64_t n_ = 0;
  Vec3 mean_;
  // Upper triangle of the scatter matrix: xx, xy, xt, yy, yt, tt.
  std::array<double, 6> m2_{};
};

inline Vec3 to_point(const Event& e, const TimeScale& scale) {
  return {static_cast<double>(e.x), static_cast<double>(e.y), scale.scaled(e.t)};
}

// Time-ordered event storage with its accumulator kept in sync. Additions and
// merges are incremental; removals and rebuild_if_due() (once kRebuildPeriod
// incremental mutations have accumulated) recompute the moments from the
// stored events to bound floating-point drift.
class EventSet {
 public:
  static constexpr int kRebuildPeriod = 256;

  EventSet() = default;
  explicit EventSet(TimeScale scale) : scale_(scale) {}

  void add(const Event& e);
  // Drops events with t < min_t; returns how many were removed.
  std::size_t remove_older_than(TimeUs min_t);
  void merge_from(const EventSet& other);
  void rebuild();
  void rebuild_if_due();

  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }
  const std::vector<Event>& events() const { return events_; }
  const EventAccumulator& accumulator() const { return acc_; }
  const TimeScale& time_scale() const { return scale_; }
  TimeUs newest() const { return events_.empty() ? kNeverFired : events_.back().t; }
  TimeUs oldest() const { return events_.empty() ? kNeverFired : events_.front().t; }
  // Number of events with t >= min_t.
  std::size_t count_since(TimeUs min_t) const;

 private:
  void note_mutation();

  TimeScale scale_;
  std::vector<Event> events_;
  EventAccumulator acc_;
  int mutations_ = 0;
};

struct PlaneFit {
  Vec3 centroid;  // (px, px, scaled time)
  Vec3 normal;    // unit, canonical sign
  std::array<double, 3> eigenvalues{};  // descending, clamped at 0
  std::array<Vec3, 3> eigenvectors{};
  std::int64_t count = 0;

  double smallest_stddev() const { return std::sqrt(eigenvalues[2]); }
};

// Canonical sign: n_t <= 0; if n_t == 0 then n_x >= 0; then n_y >= 0.
Vec3 canonical_normal(Vec3 n);

PlaneFit fit_plane(const EventAccumulator& acc);

enum class MidpointMode { AlongPlane, Orthogonal };

struct LineGeometry {
  Vec2 direction;  // unit
  Vec2 midpoint;
  double length = 0.0;
};

constexpr double kPlaneEpsilon = 1e-9;

// d = n x e_t restricted to the image plane, normalised.
Vec2 line_direction(const Vec3& normal);

// Image-plane velocity of the line (px per scaled-time unit) implied by the
// plane, so that midpoint(t) = g_xy + (t - t_mean) * velocity. The velocity
// is perpendicular to the line direction.
Vec2 plane_velocity(const Vec3& normal);

Vec2 line_midpoint(const PlaneFit& fit, double t_now_scaled, MidpointMode mode);

double line_length(const PlaneFit& fit, Vec2 direction,
                   LengthScaling scaling = LengthScaling::Variance);

struct PointLineDistances {
  double a = 0.0;  // perpendicular distance to the infinite line
  double b = 0.0;  // distance along the line from the midpoint
};

PointLineDistances point_line_distances(const LineGeometry& geom, Vec2 point);
inline PointLineDistances point_line_distances(const LineGeometry& geom, const Event& e) {
  return point_line_distances(geom, Vec2{static_cast<double>(e.x), static_cast<double>(e.y)});
}

// Longest chain of non-empty bins (floor(u / bin_size)) in which runs of
// empty bins are at most one long, times bin_size. Zero for empty input.
double longest_bin_chain(std::span<const double> coordinates, double bin_size);

// Events are transported along the fitted plane to t_now, projected onto the
// line direction and binned.
double connected_length(std::span<const Event> events, const PlaneFit& fit, Vec2 direction,
                        double t_now_scaled, const TimeScale& scale, double bin_size = 2.0);

// Undirected angle between two directions, in degrees within [0, 90].
double angle_between_deg(Vec2 a, Vec2 b);

// Direction angle in degrees within [0, 180).
double direction_angle_deg(Vec2 d);

}  // namespace evline
