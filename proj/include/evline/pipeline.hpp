#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "evline/io.hpp"
#include "evline/tracker.hpp"

namespace evline {

struct RunOptions {
  Tracker::Mode mode = Tracker::Mode::Deterministic;
  TimeUs snapshot_interval = ms_to_us(10);
  bool keep_snapshots = true;
  std::function<void(const TrackSnapshot&)> on_snapshot;
  Tracker::MaintenanceHook on_maintenance;
};

struct RunResult {
  std::vector<TrackSnapshot> snapshots;
  DispositionCounts counts;
  Instrumentation stats;
  std::vector<TransitionRecord> journal;
  std::uint64_t events = 0;
  std::uint64_t reordered = 0;
  double wall_seconds = 0.0;  // ingest loop only

  double events_per_second() const {
    return wall_seconds > 0 ? static_cast<double>(events) / wall_seconds : 0.0;
  }
};

// Feeds `events` in order. A snapshot is taken at every multiple of the
// snapshot interval crossed by the stream, after the maintenance due at
// that instant and before any event stamped with it.
RunResult run_events(const std::vector<Event>& events, const TrackerConfig& cfg,
                     const RunOptions& opts = {});

// Same, with parsing on a feeder thread handing batches through a bounded
// queue of cfg.queue_capacity events.
RunResult run_reader(EventReader& reader, const TrackerConfig& cfg, const RunOptions& opts = {});

}  // namespace evline
