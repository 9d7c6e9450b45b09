#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evline/event.hpp"
#include "evline/io.hpp"
#include "evline/linalg.hpp"
#include "evline/tracker.hpp"

namespace evline {

enum class MotionKind { Waypoints, Sine };

struct Waypoint {
  TimeUs t = 0;
  Vec2 center;
};

// One straight segment translating rigidly. Waypoints interpolate the centre
// linearly and hold it before the first and after the last waypoint.
struct TrackSpec {
  int id = 0;
  double length_px = 100.0;
  double angle_deg = 90.0;
  double rate = 1.0;  // events per px of length per ms
  double jitter_px = 0.3;
  TimeUs start = 0;
  TimeUs end = -1;  // -1: scene duration
  MotionKind motion = MotionKind::Waypoints;
  std::vector<Waypoint> waypoints;
  Vec2 sine_center;
  double sine_amplitude_px = 0.0;
  double sine_period_ms = 1000.0;
  double sine_axis_deg = 0.0;
  // When false, a segment that is not moving emits nothing (a real sensor
  // sees no brightness change).
  bool static_emits = true;
};

struct SceneSpec {
  SensorSize sensor;
  TimeUs duration = ms_to_us(1000);
  double noise_rate = 0.0;  // background events per ms over the whole sensor
  std::vector<TrackSpec> tracks;

  void validate() const;
  // key = value lines; a line reading `track` opens a new track block.
  static SceneSpec parse(std::istream& in);
  static SceneSpec load(const std::string& path);
  void dump(std::ostream& out) const;
};

struct TrackState {
  Vec2 center;
  Vec2 velocity;  // px per ms
  double angle_deg = 0.0;
  double length = 0.0;
  bool exists = false;
  bool emitting = false;
};

TrackState track_state(const TrackSpec& track, TimeUs t, TimeUs duration);

struct TruthSample {
  TimeUs t = 0;
  Vec2 midpoint;
  double angle_deg = 0.0;
  double length = 0.0;
};

class GroundTruth {
 public:
  void add_sample(int track, const TruthSample& s);
  // Linear interpolation between samples; nullopt outside the sampled span.
  std::optional<TruthSample> at(int track, TimeUs t) const;
  std::vector<int> track_ids() const;
  const std::map<int, std::vector<TruthSample>>& samples() const { return samples_; }

  // Per-event track id, -1 for background noise.
  std::vector<int> association;

  void write(std::ostream& out) const;
  static GroundTruth read(std::istream& in);
  static GroundTruth load(const std::string& path);

 private:
  std::map<int, std::vector<TruthSample>> samples_;
};

struct SynthOutput {
  EventStream stream;
  GroundTruth truth;
};

SynthOutput generate(const SceneSpec& spec, std::uint64_t seed,
                     TimeUs sample_interval = ms_to_us(1));

struct MatchThresholds {
  double midpoint_px = 5.0;
  double angle_deg = 10.0;
  double majority = 0.5;
};

struct TrackScore {
  int track = 0;
  std::vector<std::int64_t> lines;  // matched line IDs
  int id_switches = 0;
};

struct Metrics {
  double mean_lifetime_s = 0.0;      // matched lines
  double mean_lifetime_all_s = 0.0;  // every line that received an ID
  std::size_t lines = 0;
  std::size_t matched_lines = 0;
  std::size_t false_lines = 0;
  int id_switches = 0;
  double midpoint_rms_px = 0.0;
  double direction_rms_deg = 0.0;
  std::size_t samples = 0;
  std::vector<TrackScore> tracks;
  std::map<std::int64_t, double> lifetimes_s;
  std::map<std::int64_t, int> line_to_track;  // -1 for false lines
};

Metrics score(const std::vector<TrackSnapshot>& snapshots, const GroundTruth& truth,
              const MatchThresholds& thresholds = {});

void write_metrics_text(std::ostream& out, const Metrics& m, const MatchThresholds& th);
std::string metrics_json(const Metrics& m, const MatchThresholds& th);

}  // namespace evline
