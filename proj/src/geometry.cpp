#include "evline/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace evline {

void EventAccumulator::add(const Vec3& p) {
  ++n_;
  const Vec3 delta = p - mean_;
  mean_ = mean_ + delta * (1.0 / static_cast<double>(n_));
  const Vec3 after = p - mean_;
  m2_[0] += delta.x * after.x;
  m2_[1] += delta.x * after.y;
  m2_[2] += delta.x * after.z;
  m2_[3] += delta.y * after.y;
  m2_[4] += delta.y * after.z;
  m2_[5] += delta.z * after.z;
}

void EventAccumulator::remove(const Vec3& p) {
  if (n_ <= 1) {
    clear();
    return;
  }
  const double n_old = static_cast<double>(n_);
  --n_;
  const Vec3 mean_new = (mean_ * n_old - p) * (1.0 / static_cast<double>(n_));
  const Vec3 delta = p - mean_new;
  const Vec3 after = p - mean_;
  m2_[0] -= delta.x * after.x;
  m2_[1] -= delta.x * after.y;
  m2_[2] -= delta.x * after.z;
  m2_[3] -= delta.y * after.y;
  m2_[4] -= delta.y * after.z;
  m2_[5] -= delta.z * after.z;
  mean_ = mean_new;
}

void EventAccumulator::merge(const EventAccumulator& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(n_);
  const double nb = static_cast<double>(other.n_);
  const double n = na + nb;
  const Vec3 delta = other.mean_ - mean_;
  const double w = na * nb / n;
  m2_[0] += other.m2_[0] + delta.x * delta.x * w;
  m2_[1] += other.m2_[1] + delta.x * delta.y * w;
  m2_[2] += other.m2_[2] + delta.x * delta.z * w;
  m2_[3] += other.m2_[3] + delta.y * delta.y * w;
  m2_[4] += other.m2_[4] + delta.y * delta.z * w;
  m2_[5] += other.m2_[5] + delta.z * delta.z * w;
  mean_ = mean_ + delta * (nb / n);
  n_ += other.n_;
}

void EventAccumulator::clear() { *this = EventAccumulator{}; }

Mat3 EventAccumulator::covariance() const {
  Mat3 c{};
  if (n_ < 2) return c;
  const double k = 1.0 / static_cast<double>(n_ - 1);
  c[0][0] = m2_[0] * k;
  c[0][1] = c[1][0] = m2_[1] * k;
  c[0][2] = c[2][0] = m2_[2] * k;
  c[1][1] = m2_[3] * k;
  c[1][2] = c[2][1] = m2_[4] * k;
  c[2][2] = m2_[5] * k;
  return c;
}

std::array<double, 3> EventAccumulator::covariance_xy() const {
  if (n_ < 2) return {0.0, 0.0, 0.0};
  const double k = 1.0 / static_cast<double>(n_ - 1);
  return {m2_[0] * k, m2_[1] * k, m2_[3] * k};
}

void EventSet::note_mutation() {
  if (++mutations_ >= kRebuildPeriod) rebuild();
}

void EventSet::rebuild_if_due() {
  if (mutations_ >= kRebuildPeriod) rebuild();
}

void EventSet::add(const Event& e) {
  if (events_.empty() || events_.back().t <= e.t) {
    events_.push_back(e);
  } else {
    const auto pos = std::upper_bound(events_.begin(), events_.end(), e.t,
                                      [](TimeUs t, const Event& ev) { return t < ev.t; });
    events_.insert(pos, e);
  }
  acc_.add(to_point(e, scale_));
  ++mutations_;
}

std::size_t EventSet::remove_older_than(TimeUs min_t) {
  const auto end = std::lower_bound(events_.begin(), events_.end(), min_t,
                                    [](const Event& ev, TimeUs t) { return ev.t < t; });
  const auto removed = static_cast<std::size_t>(end - events_.begin());
  if (removed == 0) return 0;
  events_.erase(events_.begin(), end);
  rebuild();
  return removed;
}

void EventSet::merge_from(const EventSet& other) {
  if (other.events_.empty()) return;
  const auto mid = static_cast<std::ptrdiff_t>(events_.size());
  events_.insert(events_.end(), other.events_.begin(), other.events_.end());
  std::inplace_merge(events_.begin(), events_.begin() + mid, events_.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
  acc_.merge(other.acc_);
  note_mutation();
}

void EventSet::rebuild() {
  acc_.clear();
  for (const auto& e : events_) acc_.add(to_point(e, scale_));
  mutations_ = 0;
}

std::size_t EventSet::count_since(TimeUs min_t) const {
  const auto it = std::lower_bound(events_.begin(), events_.end(), min_t,
                                   [](const Event& ev, TimeUs t) { return ev.t < t; });
  return static_cast<std::size_t>(events_.end() - it);
}

Vec3 canonical_normal(Vec3 n) {
  bool flip = false;
  if (n.z != 0.0) {
    flip = n.z > 0.0;
  } else if (n.x != 0.0) {
    flip = n.x < 0.0;
  } else {
    flip = n.y < 0.0;
  }
  return flip ? -n : n;
}

PlaneFit fit_plane(const EventAccumulator& acc) {
  if (acc.count() < 3) throw InsufficientDataError("plane fit needs at least 3 events");
  const Mat3 c = acc.covariance();
  double trace = c[0][0] + c[1][1] + c[2][2];
  if (!(trace > 0.0)) throw DegenerateError("events are coincident");

  const SymmetricEigen3 eig = eigen_symmetric3(c);
  PlaneFit fit;
  fit.centroid = acc.mean();
  fit.count = acc.count();
  for (int i = 0; i < 3; ++i) {
    fit.eigenvalues[i] = std::max(0.0, eig.values[i]);
    fit.eigenvectors[i] = eig.vectors[i];
  }
  fit.normal = canonical_normal(eig.vectors[2]);
  return fit;
}

Vec2 line_direction(const Vec3& normal) {
  const Vec3 n = canonical_normal(normal);
  const double h = std::hypot(n.x, n.y);
  if (!(h > 0.0)) throw DegenerateError("plane parallel to the image plane carries no line");
  return {n.y / h, -n.x / h};
}

Vec2 plane_velocity(const Vec3& normal) {
  const double h2 = normal.x * normal.x + normal.y * normal.y;
  if (!(h2 > kPlaneEpsilon)) throw DegenerateError("plane nearly parallel to the image plane");
  // s = n x d has xy part (nx nt, ny nt) and t part -(nx^2 + ny^2).
  return Vec2{normal.x * normal.z, normal.y * normal.z} * (1.0 / -h2);
}

Vec2 line_midpoint(const PlaneFit& fit, double t_now_scaled, MidpointMode mode) {
  const Vec2 g{fit.centroid.x, fit.centroid.y};
  if (mode == MidpointMode::Orthogonal) return g;
  return g + plane_velocity(fit.normal) * (t_now_scaled - fit.centroid.z);
}

double line_length(const PlaneFit& fit, Vec2 direction, LengthScaling scaling) {
  const Vec3 d{direction.x, direction.y, 0.0};
  double var = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double proj = fit.eigenvectors[i].dot(d);
    const double weight = scaling == LengthScaling::Variance ? fit.eigenvalues[i]
                                                             : std::sqrt(fit.eigenvalues[i]);
    var += weight * proj * proj;
  }
  if (scaling == LengthScaling::StdDev) return std::sqrt(12.0) * var;
  return std::sqrt(12.0) * std::sqrt(var);
}

PointLineDistances point_line_distances(const LineGeometry& geom, Vec2 point) {
  const Vec2 r = point - geom.midpoint;
  return {std::abs(geom.direction.cross(r)), std::abs(geom.direction.dot(r))};
}

double longest_bin_chain(std::span<const double> coordinates, double bin_size) {
  if (coordinates.empty()) return 0.0;
  std::vector<long long> bins;
  bins.reserve(coordinates.size());
  for (double u : coordinates) bins.push_back(static_cast<long long>(std::floor(u / bin_size)));
  std::sort(bins.begin(), bins.end());
  bins.erase(std::unique(bins.begin(), bins.end()), bins.end());

  long long best = 1;
  long long start = bins.front();
  for (std::size_t i = 1; i < bins.size(); ++i) {
    if (bins[i] - bins[i - 1] > 2) start = bins[i];
    best = std::max(best, bins[i] - start + 1);
  }
  return static_cast<double>(best) * bin_size;
}

double connected_length(std::span<const Event> events, const PlaneFit& fit, Vec2 direction,
                        double t_now_scaled, const TimeScale& scale, double bin_size) {
  if (events.empty()) return 0.0;
  Vec2 velocity{};
  const double h2 = fit.normal.x * fit.normal.x + fit.normal.y * fit.normal.y;
  if (h2 > kPlaneEpsilon) velocity = plane_velocity(fit.normal);
  const Vec2 mid = line_midpoint(fit, t_now_scaled, h2 > kPlaneEpsilon ? MidpointMode::AlongPlane
                                                                       : MidpointMode::Orthogonal);
  std::vector<double> coords;
  coords.reserve(events.size());
  for (const auto& e : events) {
    const Vec2 pos{static_cast<double>(e.x), static_cast<double>(e.y)};
    const Vec2 moved = pos + velocity * (t_now_scaled - scale.scaled(e.t));
    coords.push_back((moved - mid).dot(direction));
  }
  return longest_bin_chain(coords, bin_size);
}

double angle_between_deg(Vec2 a, Vec2 b) {
  const double c = std::abs(a.dot(b)) / (a.norm() * b.norm());
  return std::acos(std::clamp(c, 0.0, 1.0)) * 180.0 / std::numbers::pi;
}

double direction_angle_deg(Vec2 d) {
  double deg = std::atan2(d.y, d.x) * 180.0 / std::numbers::pi;
  deg = std::fmod(deg, 180.0);
  if (deg < 0.0) deg += 180.0;
  if (deg >= 180.0) deg -= 180.0;
  return deg;
}

}  // namespace evline
