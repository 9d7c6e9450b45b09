#include "evline/tracker.hpp"

#include <algorithm>
#include <chrono>

namespace evline {
namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t elapsed_ns(Clock::time_point a, Clock::time_point b) {
  return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(b - a).count());
}

TimeUs first_boundary_after(TimeUs t, TimeUs interval) {
  TimeUs q = t / interval;
  if (t < 0 && q * interval != t) --q;
  return (q + 1) * interval;
}

void merge_buckets(std::map<std::size_t, StageStats>& into,
                   const std::map<std::size_t, StageStats>& from) {
  for (const auto& [k, v] : from) {
    into[k].ns += v.ns;
    into[k].count += v.count;
  }
}

void merge_stats(StageStats& into, const StageStats& from) {
  into.ns += from.ns;
  into.count += from.count;
}

}  // namespace

std::string_view to_string(Disposition d) {
  switch (d) {
    case Disposition::Suppressed: return "suppressed";
    case Disposition::Line: return "line";
    case Disposition::Ambiguous: return "ambiguous";
    case Disposition::Cluster: return "cluster";
    case Disposition::NewCluster: return "new_cluster";
    case Disposition::Unassigned: return "unassigned";
  }
  return "?";
}

std::uint64_t DispositionCounts::total() const {
  std::uint64_t n = 0;
  for (auto c : by_kind) n += c;
  return n;
}

bool MaintenanceReport::empty() const {
  const auto& l = lines;
  return clusters.events_removed == 0 && clusters.clusters_deleted == 0 &&
         l.events_removed == 0 && l.lines_activated == 0 && l.lines_discarded == 0 &&
         l.lines_deleted == 0 && l.lines_hibernated == 0 && l.lines_woken == 0 &&
         l.lines_merged == 0 && promotions == 0;
}

void Instrumentation::merge(const Instrumentation& other) {
  merge_stats(filtering, other.filtering);
  merge_stats(line_addition, other.line_addition);
  merge_stats(cluster_addition, other.cluster_addition);
  merge_stats(cluster_creation, other.cluster_creation);
  merge_stats(promotion, other.promotion);
  merge_buckets(filtering_by_lines, other.filtering_by_lines);
  merge_buckets(line_addition_by_lines, other.line_addition_by_lines);
  merge_buckets(cluster_addition_by_clusters, other.cluster_addition_by_clusters);
  merge_buckets(creation_by_clusters, other.creation_by_clusters);
}

Tracker::Tracker(TrackerConfig cfg, Mode mode)
    : cfg_((cfg.validate(), cfg)),
      mode_(mode),
      filter_(cfg_.sensor, cfg_.filter, cfg_.polarity_mode == PolarityMode::Split),
      unassigned_{SurfaceOfActiveEvents(cfg_.sensor), SurfaceOfActiveEvents(cfg_.sensor)},
      clusters_(cfg_.cluster, cfg_.time_scale),
      lines_(cfg_.line, cfg_.time_scale, cfg_.hibernation_enabled) {
  if (mode_ == Mode::Concurrent) worker_ = std::thread([this] { maintenance_loop(); });
}

Tracker::~Tracker() { finish(); }

Polarity Tracker::effective(Polarity p) const {
  return cfg_.polarity_mode == PolarityMode::Split ? p : Polarity::On;
}

const SurfaceOfActiveEvents& Tracker::unassigned_surface(Polarity p) const {
  return unassigned_[static_cast<int>(effective(p))];
}

ProcessResult Tracker::feed(const Event& e) {
  schedule(e.t);
  return process_event(e);
}

void Tracker::schedule(TimeUs t) {
  if (next_maintenance_ == kNeverFired) {
    next_maintenance_ = first_boundary_after(t, cfg_.maintenance_interval);
  }
  if (clock_ == kNeverFired || t > clock_) clock_ = t;
  if (mode_ == Mode::Deterministic) {
    while (next_maintenance_ <= t) {
      run_maintenance(next_maintenance_);
      next_maintenance_ += cfg_.maintenance_interval;
    }
    return;
  }
  if (next_maintenance_ <= t) {
    {
      std::lock_guard lock(clock_mu_);
      if (first_boundary_ == kNeverFired) first_boundary_ = next_maintenance_;
      published_ = std::max(published_, t);
    }
    clock_cv_.notify_one();
    while (next_maintenance_ <= t) next_maintenance_ += cfg_.maintenance_interval;
  }
}

void Tracker::advance_to(TimeUs t) {
  schedule(t);
  if (mode_ == Mode::Deterministic) return;
  std::unique_lock lock(clock_mu_);
  if (first_boundary_ == kNeverFired) return;
  published_ = std::max(published_, t);
  clock_cv_.notify_one();
  done_cv_.wait(lock, [&] { return stop_ || completed_ >= published_; });
}

void Tracker::finish() {
  if (!worker_.joinable()) return;
  {
    std::lock_guard lock(clock_mu_);
    stop_ = true;
  }
  clock_cv_.notify_one();
  worker_.join();
}

void Tracker::maintenance_loop() {
  TimeUs next = kNeverFired;
  std::unique_lock lock(clock_mu_);
  for (;;) {
    clock_cv_.wait(lock, [&] {
      return stop_ || (first_boundary_ != kNeverFired &&
                       (next == kNeverFired || next <= published_));
    });
    const TimeUs target = published_;
    const bool stopping = stop_;
    if (first_boundary_ != kNeverFired) {
      if (next == kNeverFired) next = first_boundary_;
      lock.unlock();
      while (next <= target) {
        run_maintenance(next);
        next += cfg_.maintenance_interval;
      }
      lock.lock();
      completed_ = std::max(completed_, target);
      done_cv_.notify_all();
    }
    if (stopping) {
      completed_ = published_;
      done_cv_.notify_all();
      return;
    }
  }
}

ProcessResult Tracker::process_event(const Event& e) {
  ProcessResult result;
  const bool timed = cfg_.instrument;
  const auto t0 = timed ? Clock::now() : Clock::time_point{};

  const FilterVerdict verdict = filter_.filter(e);
  const auto t1 = timed ? Clock::now() : Clock::time_point{};
  if (timed) {
    const auto ns = elapsed_ns(t0, t1);
    stats_.filtering.add(ns);
    stats_.filtering_by_lines[lines_.ingest_view_size()].add(ns);
  }
  if (verdict != FilterVerdict::Pass) {
    if (verdict == FilterVerdict::OutOfBounds) ++counts_.out_of_bounds;
    ++counts_.by_kind[static_cast<int>(Disposition::Suppressed)];
    return result;
  }
  if (clock_ == kNeverFired || e.t > clock_) clock_ = e.t;

  auto done = [&](Disposition d) {
    result.disposition = d;
    ++counts_.by_kind[static_cast<int>(d)];
    return result;
  };

  const LineAddResult line = lines_.try_add(e);
  const auto t2 = timed ? Clock::now() : Clock::time_point{};
  if (timed) {
    const auto ns = elapsed_ns(t1, t2);
    stats_.line_addition.add(ns);
    stats_.line_addition_by_lines[lines_.ingest_view_size()].add(ns);
  }
  if (line.kind == LineAddKind::Added) {
    result.line_label = line.label;
    return done(Disposition::Line);
  }
  if (line.kind == LineAddKind::Ambiguous) return done(Disposition::Ambiguous);

  const ClusterAddResult cluster = clusters_.try_add(e);
  if (cluster.kind != ClusterAddKind::Rejected) {
    const auto t3 = timed ? Clock::now() : Clock::time_point{};
    if (timed) {
      const auto ns = elapsed_ns(t2, t3);
      stats_.cluster_addition.add(ns);
      stats_.cluster_addition_by_clusters[clusters_.ingest_view_size()].add(ns);
    }
    if (cfg_.promotion_path == PromotionPath::Ingest) {
      Cluster& c = *cluster.cluster;
      bool attempted = false;
      bool retire = false;
      {
        std::lock_guard lock(c.mutex());
        if (c.alive() && static_cast<int>(c.events().size()) >= cfg_.cluster.promotion_num_events) {
          attempted = true;
          if (try_promote(c.events(), cfg_.line) && lines_.create(c.events(), e.t)) {
            c.kill();
            retire = true;
          }
        }
      }
      if (retire) {
        clusters_.retire(&c);
        result.promoted = true;
        ++counts_.promotions;
      }
      if (timed && attempted) stats_.promotion.add(elapsed_ns(t3, Clock::now()));
    }
    return done(Disposition::Cluster);
  }
  const auto t3 = timed ? Clock::now() : Clock::time_point{};
  const std::size_t scanned_clusters = clusters_.ingest_view_size();
  if (timed) {
    const auto ns = elapsed_ns(t2, t3);
    stats_.cluster_addition.add(ns);
    stats_.cluster_addition_by_clusters[scanned_clusters].add(ns);
  }

  const Polarity p = effective(e.polarity);
  auto& surface = unassigned_[static_cast<int>(p)];
  surface.update(e);
  const Chain chain = grow_chain(e, surface, cfg_.cluster);
  const auto created = clusters_.create_from_chain(chain, p);
  if (timed) {
    const auto ns = elapsed_ns(t3, Clock::now());
    stats_.cluster_creation.add(ns);
    stats_.creation_by_clusters[scanned_clusters].add(ns);
  }
  return done(created ? Disposition::NewCluster : Disposition::Unassigned);
}

std::size_t Tracker::promote_in_maintenance(TimeUs t_now) {
  std::size_t promoted = 0;
  for (const auto& c : clusters_.snapshot()) {
    bool retire = false;
    {
      std::lock_guard lock(c->mutex());
      if (!c->alive() ||
          static_cast<int>(c->events().size()) < cfg_.cluster.promotion_num_events) {
        continue;
      }
      if (try_promote(c->events(), cfg_.line) && lines_.create(c->events(), t_now)) {
        c->kill();
        retire = true;
      }
    }
    if (retire) {
      clusters_.retire(c.get());
      ++promoted;
    }
  }
  return promoted;
}

MaintenanceReport Tracker::run_maintenance(TimeUs t_now) {
  MaintenanceReport report;
  report.t = t_now;
  report.clusters = clusters_.maintenance(t_now);
  if (cfg_.promotion_path == PromotionPath::Maintenance) {
    report.promotions = promote_in_maintenance(t_now);
  }
  report.lines = lines_.maintenance(t_now);
  log_report(report);
  if (hook_) hook_(*this, report);
  return report;
}

void Tracker::log_report(const MaintenanceReport& r) {
  if (r.empty()) return;
  std::lock_guard lock(log_mu_);
  maintenance_log_.push_back(r);
}

std::vector<MaintenanceReport> Tracker::maintenance_log() const {
  std::lock_guard lock(log_mu_);
  return maintenance_log_;
}

TrackSnapshot Tracker::snapshot(TimeUs t_now) const {
  TrackSnapshot snap;
  snap.t = t_now;
  for (const auto& line : lines_.snapshot()) {
    std::lock_guard lock(line->mutex());
    if (!line->alive()) continue;
    const LineGeometry g = line->geometry_at(t_now);
    snap.lines.push_back(SnapshotEntry{line->label(), line->state(), g.midpoint,
                                       direction_angle_deg(g.direction), g.length,
                                       line->events().size()});
  }
  // Assigned IDs first (ascending), then initializing lines by age.
  std::sort(snap.lines.begin(), snap.lines.end(), [](const SnapshotEntry& a, const SnapshotEntry& b) {
    const bool pa = a.label > 0;
    const bool pb = b.label > 0;
    if (pa != pb) return pa;
    return pa ? a.label < b.label : a.label > b.label;
  });
  snap.clusters = clusters_.size();
  return snap;
}

}  // namespace evline
