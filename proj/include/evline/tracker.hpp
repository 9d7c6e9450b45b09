#pragma once

#include <array>
#include <condition_variable>
#include <functional>
#include <cstdint>
#include <map>
#include <mutex>
#include <string_view>
#include <thread>
#include <vector>

#include "evline/clustering.hpp"
#include "evline/config.hpp"
#include "evline/event.hpp"
#include "evline/filter.hpp"
#include "evline/line.hpp"
#include "evline/sae.hpp"

namespace evline {

enum class Disposition : std::uint8_t { Suppressed, Line, Ambiguous, Cluster, NewCluster, Unassigned };

std::string_view to_string(Disposition d);

struct ProcessResult {
  Disposition disposition = Disposition::Suppressed;
  std::int64_t line_label = 0;  // for Disposition::Line
  bool promoted = false;        // the touched cluster became a line
};

struct DispositionCounts {
  std::array<std::uint64_t, 6> by_kind{};
  std::uint64_t out_of_bounds = 0;
  std::uint64_t promotions = 0;

  std::uint64_t operator[](Disposition d) const { return by_kind[static_cast<int>(d)]; }
  std::uint64_t total() const;
};

struct MaintenanceReport {
  TimeUs t = 0;
  ClusterMaintenanceReport clusters;
  LineMaintenanceReport lines;
  std::size_t promotions = 0;  // maintenance promotion path only

  // True when the pass changed nothing observable.
  bool empty() const;
};

struct SnapshotEntry {
  std::int64_t label = 0;  // ID, or -seq while initializing
  LineState state = LineState::Initializing;
  Vec2 midpoint;
  double angle_deg = 0.0;  // [0, 180)
  double length = 0.0;
  std::size_t n_events = 0;
};

struct TrackSnapshot {
  TimeUs t = 0;
  std::vector<SnapshotEntry> lines;
  std::size_t clusters = 0;
};

struct StageStats {
  std::uint64_t ns = 0;
  std::uint64_t count = 0;

  void add(std::uint64_t v) { ns += v; ++count; }
  double mean_ns() const { return count ? static_cast<double>(ns) / count : 0.0; }
};

// Per-stage timings, plus the same timings bucketed by the number of entities
// the stage had to scan.
struct Instrumentation {
  StageStats filtering;
  StageStats line_addition;
  StageStats cluster_addition;
  StageStats cluster_creation;
  StageStats promotion;  // attempts in the ingest path
  std::map<std::size_t, StageStats> filtering_by_lines;
  std::map<std::size_t, StageStats> line_addition_by_lines;
  std::map<std::size_t, StageStats> cluster_addition_by_clusters;
  std::map<std::size_t, StageStats> creation_by_clusters;

  void merge(const Instrumentation& other);
};

// The per-event pipeline and its periodic maintenance.
//
// Deterministic mode interleaves maintenance with ingest at every
// maintenance_interval boundary of stream time. Concurrent mode runs
// maintenance on its own thread, driven by the stream clock published from
// feed(); the two contexts synchronise per entity only.
class Tracker {
 public:
  enum class Mode { Deterministic, Concurrent };

  explicit Tracker(TrackerConfig cfg, Mode mode = Mode::Deterministic);
  ~Tracker();
  Tracker(const Tracker&) = delete;
  Tracker& operator=(const Tracker&) = delete;

  // Schedules due maintenance, then runs the cascade.
  ProcessResult feed(const Event& e);
  // The cascade alone: filter, line addition, cluster addition, creation.
  ProcessResult process_event(const Event& e);
  MaintenanceReport run_maintenance(TimeUs t_now);
  // Runs (or, in concurrent mode, waits for) every maintenance boundary <= t.
  void advance_to(TimeUs t);
  // Concurrent mode: drains pending maintenance and stops the thread.
  void finish();

  // Called after every maintenance pass, from the context that ran it.
  using MaintenanceHook = std::function<void(const Tracker&, const MaintenanceReport&)>;
  void set_maintenance_hook(MaintenanceHook hook) { hook_ = std::move(hook); }

  TrackSnapshot snapshot(TimeUs t_now) const;
  const Instrumentation& instrument() const { return stats_; }
  const DispositionCounts& counts() const { return counts_; }
  std::vector<TransitionRecord> journal() const { return lines_.journal(); }
  std::vector<MaintenanceReport> maintenance_log() const;

  const TrackerConfig& config() const { return cfg_; }
  Mode mode() const { return mode_; }
  TimeUs clock() const { return clock_; }
  LineSet& lines() { return lines_; }
  const LineSet& lines() const { return lines_; }
  ClusterSet& clusters() { return clusters_; }
  const ClusterSet& clusters() const { return clusters_; }
  const EventFilter& filter() const { return filter_; }
  const SurfaceOfActiveEvents& unassigned_surface(Polarity p) const;

 private:
  Polarity effective(Polarity p) const;
  void schedule(TimeUs t);
  void maintenance_loop();
  std::size_t promote_in_maintenance(TimeUs t_now);
  void log_report(const MaintenanceReport& r);

  TrackerConfig cfg_;
  Mode mode_;
  EventFilter filter_;
  std::array<SurfaceOfActiveEvents, 2> unassigned_;
  ClusterSet clusters_;
  LineSet lines_;
  DispositionCounts counts_;
  Instrumentation stats_;
  TimeUs clock_ = kNeverFired;
  TimeUs next_maintenance_ = kNeverFired;

  MaintenanceHook hook_;
  mutable std::mutex log_mu_;
  std::vector<MaintenanceReport> maintenance_log_;

  // Concurrent mode.
  std::mutex clock_mu_;
  std::condition_variable clock_cv_;
  std::condition_variable done_cv_;
  TimeUs first_boundary_ = kNeverFired;
  TimeUs published_ = kNeverFired;
  TimeUs completed_ = kNeverFired;
  bool stop_ = false;
  std::thread worker_;
};

}  // namespace evline
