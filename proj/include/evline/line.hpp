#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string_view>
#include <vector>

#include "evline/config.hpp"
#include "evline/event.hpp"
#include "evline/geometry.hpp"
#include "evline/registry.hpp"

namespace evline {

enum class LineState : std::uint8_t { Initializing, Active, Hibernated, Deleted };

std::string_view to_string(LineState s);

// Edges of the line life cycle:
//   Initializing -> Active | Deleted
//   Active       -> Hibernated | Deleted
//   Hibernated   -> Active | Deleted
bool is_valid_transition(LineState from, LineState to);

struct TransitionRecord {
  std::uint64_t seq = 0;
  std::int64_t id = 0;  // 0 while initializing
  LineState from = LineState::Initializing;
  LineState to = LineState::Initializing;
  TimeUs t = 0;
};

class Line {
 public:
  Line(std::uint64_t seq, TimeScale scale, TimeUs created);

  std::uint64_t seq() const { return seq_; }
  // 0 until the line leaves initialization.
  std::int64_t id() const { return id_; }
  // Stable label for output: the assigned ID, or -seq while initializing.
  std::int64_t label() const { return id_ > 0 ? id_ : -static_cast<std::int64_t>(seq_); }
  LineState state() const { return state_; }
  TimeUs state_since() const { return state_since_; }
  TimeUs created() const { return created_; }
  bool alive() const { return state_ != LineState::Deleted; }

  EventSet& events() { return events_; }
  const EventSet& events() const { return events_; }
  const PlaneFit& fit() const { return fit_; }
  MidpointMode midpoint_mode() const { return mode_; }
  const std::vector<TransitionRecord>& log() const { return log_; }

  // Direction, midpoint at `t` and length. Hibernated lines report the
  // midpoint frozen at hibernation entry.
  LineGeometry geometry_at(TimeUs t) const;
  const Vec2& direction() const { return direction_; }
  double length() const { return length_; }

  // Refits plane and geometry from the current events. Returns false when
  // the events no longer define a line.
  bool refit(const LineConfig& cfg);

  // Events younger than the density window per pixel of length per ms.
  double density(TimeUs t_now, const LineConfig& cfg) const;

  void transition(LineState to, TimeUs t);
  void assign_id(std::int64_t id) { id_ = id; }
  // Freezes the midpoint at the orthogonal projection of the centroid.
  void freeze();
  void thaw() { mode_ = MidpointMode::AlongPlane; }

  std::mutex& mutex() const { return mutex_; }

 private:
  mutable std::mutex mutex_;
  std::uint64_t seq_;
  std::int64_t id_ = 0;
  LineState state_ = LineState::Initializing;
  TimeUs state_since_;
  TimeUs created_;
  EventSet events_;
  PlaneFit fit_;
  Vec2 direction_{1.0, 0.0};
  Vec2 velocity_;  // px per scaled-time unit
  double length_ = 0.0;
  MidpointMode mode_ = MidpointMode::AlongPlane;
  Vec2 frozen_midpoint_;
  std::vector<TransitionRecord> log_;
};

// Plane fit if `events` qualify for promotion (count gate and planarity).
std::optional<PlaneFit> try_promote(const EventSet& events, const LineConfig& cfg);

enum class LineAddKind { Added, Ambiguous, Rejected };

struct LineAddResult {
  LineAddKind kind = LineAddKind::Rejected;
  std::shared_ptr<Line> line;
  std::int64_t label = 0;
  bool woke = false;
};

// True if `e` passes the distance gates of `line` (geometry evaluated at e.t).
bool line_accepts(const Line& line, const Event& e, const LineConfig& cfg);

// Initializing -> Active (with `next_id`) when the connected length reaches
// the initialization length, otherwise Deleted. Returns true if activated.
bool finish_initialization(Line& line, TimeUs t_now, const LineConfig& cfg, std::int64_t next_id);

// Active <-> Hibernated by the density rule. Returns the new state if it
// changed.
std::optional<LineState> update_hibernation(Line& line, TimeUs t_now, const LineConfig& cfg);

struct LineMaintenanceReport {
  std::size_t events_removed = 0;
  std::size_t lines_activated = 0;
  std::size_t lines_discarded = 0;  // failed initialization
  std::size_t lines_deleted = 0;    // active / hibernated removals
  std::size_t lines_hibernated = 0;
  std::size_t lines_woken = 0;
  std::size_t lines_merged = 0;
};

class LineSet {
 public:
  LineSet(LineConfig cfg, TimeScale scale, bool hibernation_enabled);

  // Ingest context.
  LineAddResult try_add(const Event& e);
  std::shared_ptr<Line> create(const EventSet& events, TimeUs t_now);

  // Maintenance context.
  LineMaintenanceReport maintenance(TimeUs t_now);

  Registry<Line>::List snapshot() const { return registry_.snapshot(); }
  std::size_t size() const { return registry_.size(); }
  std::size_t ingest_view_size() const { return view_.items.size(); }
  std::vector<TransitionRecord> journal() const;
  std::int64_t last_id() const { return next_id_.load() - 1; }
  const LineConfig& config() const { return cfg_; }

 private:
  void record(const Line& line);
  std::size_t merge_pass(TimeUs t_now);

  LineConfig cfg_;
  TimeScale scale_;
  bool hibernation_enabled_;
  Registry<Line> registry_;
  Registry<Line>::View view_;
  std::atomic<std::uint64_t> next_seq_{1};
  std::atomic<std::int64_t> next_id_{1};
  mutable std::mutex journal_mu_;
  std::vector<TransitionRecord> journal_;
  std::vector<std::shared_ptr<Line>> qualifying_;
};

}  // namespace evline
