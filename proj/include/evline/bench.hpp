#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "evline/config.hpp"
#include "evline/synth.hpp"

namespace evline {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double slope_stderr = 0.0;
  std::size_t n = 0;
};

// Ordinary least squares y = intercept + slope * x.
LinearFit fit_linear(std::span<const double> x, std::span<const double> y);

// True when the slope is indistinguishable from zero: inside two standard
// errors, or moving the prediction by less than `relative` of the mean
// response across the swept range.
bool flat_within_noise(const LinearFit& fit, std::span<const double> x, std::span<const double> y,
                       double relative = 0.1, double slope_stderr = -1.0);

// `n` static vertical lines, 100 px long and 30 px apart.
SceneSpec static_lines_scene(int n, TimeUs duration);
// `n` short static segments sparse enough never to be promoted.
SceneSpec segments_scene(int n, TimeUs duration);
// Three slowly oscillating lines and four short segments.
SceneSpec throughput_scene(TimeUs duration);

struct SweepPoint {
  double entities = 0.0;
  double mean_ns = 0.0;
  std::uint64_t samples = 0;
};

struct StageSweep {
  std::string stage;
  std::string entity;
  std::vector<SweepPoint> points;
  LinearFit fit;
  // Standard error of the slope from its spread across independent repeats;
  // catches run-to-run drift that the residuals of one fit do not show.
  // Zero with fewer than two repeats.
  double repeat_slope_stderr = 0.0;
};

// flat_within_noise on the sweep's points, with the larger of the two
// slope standard errors.
bool flat_within_noise(const StageSweep& sweep, double relative = 0.1);

struct SweepOptions {
  int max_entities = 10;
  TimeUs duration = ms_to_us(2000);
  std::uint64_t seed = 1;
  int repeats = 1;
  std::uint64_t min_samples = 200;
};

// Sweeps the line count: line addition and filtering cost per event,
// bucketed by the number of lines scanned.
std::vector<StageSweep> sweep_lines(const TrackerConfig& cfg, const SweepOptions& opts);
// Sweeps the cluster count: cluster addition and chain creation cost.
std::vector<StageSweep> sweep_clusters(const TrackerConfig& cfg, const SweepOptions& opts);

void write_sweep_table(std::ostream& out, const std::vector<StageSweep>& sweeps);

}  // namespace evline
