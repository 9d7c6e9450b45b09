#include "evline/pipeline.hpp"

#include <chrono>
#include <exception>
#include <thread>

namespace evline {
namespace {

constexpr std::size_t kBatch = 1024;

class Runner {
 public:
  Runner(const TrackerConfig& cfg, const RunOptions& opts) : opts_(opts), tracker_(cfg, opts.mode) {
    if (opts_.snapshot_interval <= 0) throw Error("snapshot interval must be positive");
    if (opts_.on_maintenance) tracker_.set_maintenance_hook(opts_.on_maintenance);
  }

  void feed(const Event& e) {
    if (next_snapshot_ == kNeverFired) {
      next_snapshot_ = (e.t / opts_.snapshot_interval + 1) * opts_.snapshot_interval;
    }
    while (next_snapshot_ <= e.t) {
      tracker_.advance_to(next_snapshot_);
      emit(tracker_.snapshot(next_snapshot_));
      next_snapshot_ += opts_.snapshot_interval;
    }
    tracker_.feed(e);
    ++result_.events;
  }

  RunResult finish(double wall) {
    tracker_.finish();
    result_.counts = tracker_.counts();
    result_.stats = tracker_.instrument();
    result_.journal = tracker_.journal();
    result_.wall_seconds = wall;
    return std::move(result_);
  }

 private:
  void emit(TrackSnapshot snap) {
    if (opts_.on_snapshot) opts_.on_snapshot(snap);
    if (opts_.keep_snapshots) result_.snapshots.push_back(std::move(snap));
  }

  const RunOptions& opts_;
  Tracker tracker_;
  RunResult result_;
  TimeUs next_snapshot_ = kNeverFired;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

RunResult run_events(const std::vector<Event>& events, const TrackerConfig& cfg,
                     const RunOptions& opts) {
  Runner runner(cfg, opts);
  const auto start = std::chrono::steady_clock::now();
  for (const auto& e : events) runner.feed(e);
  return runner.finish(seconds_since(start));
}

RunResult run_reader(EventReader& reader, const TrackerConfig& cfg, const RunOptions& opts) {
  Runner runner(cfg, opts);
  BoundedQueue<std::vector<Event>> queue(std::max<std::size_t>(1, cfg.queue_capacity / kBatch));
  std::exception_ptr feeder_error;
  std::uint64_t reordered = 0;

  std::thread feeder([&] {
    try {
      std::vector<Event> batch;
      batch.reserve(kBatch);
      while (auto e = reader.next()) {
        batch.push_back(*e);
        if (batch.size() == kBatch) {
          queue.push(std::move(batch));
          batch = {};
          batch.reserve(kBatch);
        }
      }
      if (!batch.empty()) queue.push(std::move(batch));
      reordered = reader.reordered();
    } catch (...) {
      feeder_error = std::current_exception();
    }
    queue.close();
  });

  const auto start = std::chrono::steady_clock::now();
  try {
    while (auto batch = queue.pop()) {
      for (const auto& e : *batch) runner.feed(e);
    }
  } catch (...) {
    queue.close();
    feeder.join();
    throw;
  }
  feeder.join();
  if (feeder_error) std::rethrow_exception(feeder_error);
  RunResult r = runner.finish(seconds_since(start));
  r.reordered = reordered;
  return r;
}

}  // namespace evline
