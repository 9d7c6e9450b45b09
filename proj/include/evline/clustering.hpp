#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "evline/config.hpp"
#include "evline/event.hpp"
#include "evline/geometry.hpp"
#include "evline/registry.hpp"
#include "evline/sae.hpp"

namespace evline {

struct ChainElement {
  int x = 0;
  int y = 0;
  TimeUs t = 0;
  friend bool operator==(const ChainElement&, const ChainElement&) = default;
};

using Chain = std::vector<ChainElement>;

struct Offset {
  int dx = 0;
  int dy = 0;
  friend bool operator==(const Offset&, const Offset&) = default;
};

// Directed search cells for the next chain element, relative to the current
// element, given the last step. `primary` continues the step (the step and
// its two 45 degree neighbours); `extended` adds the two 90 degree flanks.
struct ChainSearchPattern {
  std::array<Offset, 3> primary;
  std::array<Offset, 2> extended;
};

ChainSearchPattern chain_search_pattern(Offset last_step);

// Grows a chain from `seed` through the per-polarity surface of unassigned
// events. Ties between equally young candidates go to the smaller y, then
// the smaller x.
Chain grow_chain(const Event& seed, const SurfaceOfActiveEvents& sae, const ClusterConfig& cfg);

// Total-least-squares line through the xy coordinates of a set of events.
struct InferredLine {
  Vec2 centroid;
  Vec2 direction{1.0, 0.0};
  double length = 0.0;  // sqrt(12) * stddev along the direction
};

InferredLine infer_line_xy(const EventAccumulator& acc);

class Cluster {
 public:
  Cluster(std::uint64_t seq, TimeScale scale, TimeUs created)
      : seq_(seq), created_(created), events_(scale) {}

  std::uint64_t seq() const { return seq_; }
  TimeUs created() const { return created_; }
  bool alive() const { return alive_; }
  void kill() { alive_ = false; }

  EventSet& events() { return events_; }
  const EventSet& events() const { return events_; }
  const InferredLine& line() const { return line_; }
  void refresh_line() { line_ = infer_line_xy(events_.accumulator()); }

  // Midpoint gate: the current inferred length, never below `floor_px`.
  double midpoint_threshold(double floor_px) const {
    return std::max(line_.length, floor_px);
  }

  std::mutex& mutex() const { return mutex_; }

 private:
  mutable std::mutex mutex_;
  std::uint64_t seq_;
  TimeUs created_;
  bool alive_ = true;
  EventSet events_;
  InferredLine line_;
};

// A cluster seeded from a chain, or nothing when the chain is too short.
std::unique_ptr<Cluster> try_create_cluster(const Chain& chain, Polarity polarity,
                                            const ClusterConfig& cfg, TimeScale scale,
                                            std::uint64_t seq);

// Perpendicular distance to the inferred line, or nullopt if `e` fails the
// addition gates.
std::optional<double> cluster_accepts(const Cluster& c, const Event& e, const ClusterConfig& cfg);

enum class ClusterAddKind { Added, Merged, Rejected };

struct ClusterAddResult {
  ClusterAddKind kind = ClusterAddKind::Rejected;
  std::shared_ptr<Cluster> cluster;
  int merged_away = 0;
};

struct ClusterMaintenanceReport {
  std::size_t events_removed = 0;
  std::size_t clusters_deleted = 0;
};

// All live clusters. try_add / create_from_chain are called from the ingest
// context only; maintenance() from the maintenance context. Each cluster is
// guarded by its own mutex.
class ClusterSet {
 public:
  ClusterSet(ClusterConfig cfg, TimeScale scale) : cfg_(cfg), scale_(scale) {}

  ClusterAddResult try_add(const Event& e);
  std::shared_ptr<Cluster> create_from_chain(const Chain& chain, Polarity polarity);
  ClusterMaintenanceReport maintenance(TimeUs t_now);

  // Removes a cluster that the caller has already killed under its lock.
  void retire(const Cluster* c) { registry_.erase(c); }

  std::size_t size() const { return registry_.size(); }
  std::size_t ingest_view_size() const { return view_.items.size(); }
  Registry<Cluster>::List snapshot() const { return registry_.snapshot(); }
  const ClusterConfig& config() const { return cfg_; }

 private:
  ClusterConfig cfg_;
  TimeScale scale_;
  Registry<Cluster> registry_;
  Registry<Cluster>::View view_;
  std::uint64_t next_seq_ = 1;
  // Scratch buffers reused by try_add.
  struct Candidate {
    std::shared_ptr<Cluster> cluster;
    double perp = 0.0;
    Vec2 direction;
  };
  std::vector<Candidate> candidates_;
};

}  // namespace evline
