#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>

#include "evline/event.hpp"

namespace evline {

struct FilterConfig {
  TimeUs refractory_same_polarity = ms_to_us(8);
  TimeUs refractory_opposite_polarity = ms_to_us(1);
  int neighborhood_half_extent = 2;  // 5x5 window
  TimeUs neighborhood_age = ms_to_us(70);
  int neighborhood_min_support = 3;
  // Suppressed events still count for the refractory period. The support
  // surface records every firing either way.
  bool update_on_suppress = true;

  void validate() const;
};

struct ClusterConfig {
  int creation_num_events = 7;
  double addition_threshold_px = 1.3;
  double merge_angle_deg = 15.0;
  TimeUs cleanup_event_age = ms_to_us(50);
  TimeUs deletion_no_events = ms_to_us(40);
  int promotion_num_events = 35;
  TimeUs chain_seed_max_age = ms_to_us(70);
  int chain_max_length = 20;
  // Lower bound on the midpoint-distance gate for young clusters.
  double min_midpoint_threshold_px = 10.0;

  void validate() const;
};

enum class PromotionMetric { StdDev, Eigenvalue };
enum class LengthScaling { Variance, StdDev };
enum class WakeRule { Density, AnyEvent };
enum class CenterDistanceRule { FullLength, HalfLength };

struct LineConfig {
  double promotion_threshold_px = 1.2;
  int promotion_num_events = 35;
  double init_length_px = 70.0;
  TimeUs init_period = ms_to_us(90);
  double addition_threshold_px = 1.8;
  double merge_angle_deg = 8.0;
  double merge_distance_px = 3.5;
  double hibernation_density = 0.08;  // events / (px * ms)
  TimeUs density_window = ms_to_us(25);
  TimeUs cleanup_event_age = ms_to_us(50);
  TimeUs deletion_no_events = ms_to_us(200);
  TimeUs hibernation_timeout = ms_to_us(1000);
  double min_active_length_px = 35.0;
  double hibernation_hysteresis = 1.0;  // wake needs density >= hysteresis * threshold
  PromotionMetric promotion_metric = PromotionMetric::StdDev;
  LengthScaling length_scaling = LengthScaling::Variance;
  WakeRule wake_rule = WakeRule::Density;
  CenterDistanceRule center_distance_rule = CenterDistanceRule::FullLength;

  void validate() const;
};

enum class PolarityMode { Merged, Split };
enum class PromotionPath { Ingest, Maintenance };

struct TrackerConfig {
  SensorSize sensor{346, 260};
  TimeScale time_scale{1.0};
  FilterConfig filter;
  ClusterConfig cluster;
  LineConfig line;
  TimeUs maintenance_interval = ms_to_us(10);
  bool hibernation_enabled = true;
  PolarityMode polarity_mode = PolarityMode::Split;
  PromotionPath promotion_path = PromotionPath::Ingest;
  bool instrument = true;
  std::size_t queue_capacity = 65536;

  void validate() const;

  // Flat `key = value` text with units in key names. Unknown keys and
  // malformed values throw evline::Error naming the line.
  static TrackerConfig parse(std::istream& in);
  static TrackerConfig load(const std::string& path);
  void dump(std::ostream& out) const;
  std::string to_string() const;
};

}  // namespace evline
