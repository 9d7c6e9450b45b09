#include "evline/bench.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

#include "evline/pipeline.hpp"

namespace evline {

LinearFit fit_linear(std::span<const double> x, std::span<const double> y) {
  LinearFit f;
  f.n = std::min(x.size(), y.size());
  if (f.n < 2) return f;
  const double n = static_cast<double>(f.n);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < f.n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < f.n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  const double sse = std::max(0.0, syy - f.slope * sxy);
  f.r2 = syy > 0 ? 1.0 - sse / syy : 1.0;
  if (f.n > 2) f.slope_stderr = std::sqrt(sse / (n - 2) / sxx);
  return f;
}

bool flat_within_noise(const LinearFit& fit, std::span<const double> x, std::span<const double> y,
                       double relative, double slope_stderr) {
  if (fit.n < 2) return true;
  if (std::fabs(fit.slope) <= 2.0 * std::max(slope_stderr, fit.slope_stderr)) return true;
  double lo = x[0], hi = x[0], mean = 0;
  for (std::size_t i = 0; i < fit.n; ++i) {
    lo = std::min(lo, x[i]);
    hi = std::max(hi, x[i]);
    mean += y[i];
  }
  mean /= static_cast<double>(fit.n);
  return std::fabs(fit.slope) * (hi - lo) < relative * mean;
}

bool flat_within_noise(const StageSweep& sweep, double relative) {
  std::vector<double> x, y;
  for (const auto& p : sweep.points) {
    x.push_back(p.entities);
    y.push_back(p.mean_ns);
  }
  return flat_within_noise(sweep.fit, x, y, relative, sweep.repeat_slope_stderr);
}

SceneSpec static_lines_scene(int n, TimeUs duration) {
  SceneSpec s;
  s.duration = duration;
  for (int i = 0; i < n; ++i) {
    TrackSpec t;
    t.id = i + 1;
    t.length_px = 100;
    t.angle_deg = 90;
    t.rate = 0.2;
    t.jitter_px = 0.3;
    t.waypoints = {Waypoint{0, Vec2{28.0 + 30.0 * i, 130.0}}};
    s.tracks.push_back(t);
  }
  return s;
}

SceneSpec segments_scene(int n, TimeUs duration) {
  SceneSpec s;
  s.duration = duration;
  // Four columns by three rows of short horizontal segments.
  for (int i = 0; i < n; ++i) {
    TrackSpec t;
    t.id = i + 1;
    t.length_px = 14;
    t.angle_deg = 0;
    t.rate = 0.03;
    t.jitter_px = 0.0;
    t.waypoints = {Waypoint{0, Vec2{50.0 + 80.0 * (i % 4), 50.0 + 80.0 * (i / 4)}}};
    s.tracks.push_back(t);
  }
  return s;
}

SceneSpec throughput_scene(TimeUs duration) {
  SceneSpec s;
  s.duration = duration;
  s.noise_rate = 1.0;
  const double xs[3] = {80, 170, 260};
  for (int i = 0; i < 3; ++i) {
    TrackSpec t;
    t.id = i + 1;
    t.length_px = 120;
    t.angle_deg = 80 + 10 * i;
    t.rate = 0.35;
    t.jitter_px = 0.3;
    t.motion = MotionKind::Sine;
    t.sine_center = Vec2{xs[i], 130};
    t.sine_amplitude_px = 15;
    t.sine_period_ms = 4000 + 700 * i;
    t.sine_axis_deg = 0;
    s.tracks.push_back(t);
  }
  for (int i = 0; i < 4; ++i) {
    TrackSpec t;
    t.id = 4 + i;
    t.length_px = 14;
    t.angle_deg = 0;
    t.rate = 0.03;
    t.jitter_px = 0.0;
    t.waypoints = {Waypoint{0, Vec2{40.0 + 90.0 * i, i % 2 ? 240.0 : 20.0}}};
    s.tracks.push_back(t);
  }
  return s;
}

namespace {

using Buckets = std::map<std::size_t, StageStats>;

// One point per entity count: the median over repeats of the per-repeat mean.
// A burst of interference then spoils one repeat instead of a whole slope.
StageSweep to_sweep(std::string stage, std::string entity, const std::vector<const Buckets*>& runs,
                    int max_entities, std::uint64_t min_samples) {
  StageSweep s{std::move(stage), std::move(entity), {}, {}};
  const std::uint64_t per_run = std::max<std::uint64_t>(1, min_samples / std::max<std::size_t>(1, runs.size()));
  std::vector<double> x, y;
  std::vector<std::vector<double>> rx(runs.size()), ry(runs.size());
  for (int k = 1; k <= max_entities; ++k) {
    std::uint64_t total = 0;
    std::vector<double> means;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const auto it = runs[r]->find(static_cast<std::size_t>(k));
      if (it == runs[r]->end()) continue;
      total += it->second.count;
      if (it->second.count >= per_run) {
        means.push_back(it->second.mean_ns());
        rx[r].push_back(k);
        ry[r].push_back(it->second.mean_ns());
      }
    }
    if (total < min_samples || means.empty()) continue;
    std::sort(means.begin(), means.end());
    const std::size_t h = means.size() / 2;
    const double median = means.size() % 2 ? means[h] : 0.5 * (means[h - 1] + means[h]);
    s.points.push_back(SweepPoint{static_cast<double>(k), median, total});
    x.push_back(static_cast<double>(k));
    y.push_back(median);
  }
  s.fit = fit_linear(x, y);
  std::vector<double> slopes;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (rx[r].size() >= 3) slopes.push_back(fit_linear(rx[r], ry[r]).slope);
  }
  if (slopes.size() >= 2) {
    double m = 0, v = 0;
    for (double b : slopes) m += b;
    m /= static_cast<double>(slopes.size());
    for (double b : slopes) v += (b - m) * (b - m);
    v /= static_cast<double>(slopes.size() - 1);
    s.repeat_slope_stderr = std::sqrt(v / static_cast<double>(slopes.size()));
  }
  return s;
}

Instrumentation run_scene(const SceneSpec& scene, const TrackerConfig& cfg, std::uint64_t seed) {
  const SynthOutput synth = generate(scene, seed);
  RunOptions opts;
  opts.keep_snapshots = false;
  opts.snapshot_interval = ms_to_us(100);
  return run_events(synth.stream.events, cfg, opts).stats;
}

// Each repeat visits the entity counts in its own random order, so drift in
// machine speed during a sweep averages out instead of tilting the fit.
std::vector<int> sweep_order(int repeat, int max_entities, std::uint64_t seed) {
  std::vector<int> order(static_cast<std::size_t>(max_entities));
  std::iota(order.begin(), order.end(), 1);
  std::mt19937_64 rng(seed * 7919 + static_cast<std::uint64_t>(repeat));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

std::vector<StageSweep> sweep_lines(const TrackerConfig& cfg, const SweepOptions& opts) {
  std::vector<Instrumentation> runs(static_cast<std::size_t>(std::max(opts.repeats, 1)));
  for (int r = 0; r < static_cast<int>(runs.size()); ++r) {
    for (const int n : sweep_order(r, opts.max_entities, opts.seed)) {
      runs[r].merge(run_scene(static_lines_scene(n, opts.duration), cfg, opts.seed + 1000 * r + n));
    }
  }
  std::vector<const Buckets*> add, filt;
  for (const auto& r : runs) {
    add.push_back(&r.line_addition_by_lines);
    filt.push_back(&r.filtering_by_lines);
  }
  return {to_sweep("line_addition", "lines", add, opts.max_entities, opts.min_samples),
          to_sweep("filtering", "lines", filt, opts.max_entities, opts.min_samples)};
}

std::vector<StageSweep> sweep_clusters(const TrackerConfig& cfg, const SweepOptions& opts) {
  std::vector<Instrumentation> runs(static_cast<std::size_t>(std::max(opts.repeats, 1)));
  for (int r = 0; r < static_cast<int>(runs.size()); ++r) {
    for (const int n : sweep_order(r, opts.max_entities, opts.seed)) {
      runs[r].merge(run_scene(segments_scene(n, opts.duration), cfg, opts.seed + 1000 * r + n));
    }
  }
  std::vector<const Buckets*> add, create;
  for (const auto& r : runs) {
    add.push_back(&r.cluster_addition_by_clusters);
    create.push_back(&r.creation_by_clusters);
  }
  return {to_sweep("cluster_addition", "clusters", add, opts.max_entities, opts.min_samples),
          to_sweep("cluster_creation", "clusters", create, opts.max_entities, opts.min_samples)};
}

void write_sweep_table(std::ostream& out, const std::vector<StageSweep>& sweeps) {
  out << std::fixed << std::setprecision(1);
  for (const auto& s : sweeps) {
    out << s.stage << " vs " << s.entity << "\n";
    out << "  " << std::setw(8) << s.entity << std::setw(12) << "mean_ns" << std::setw(12)
        << "samples" << "\n";
    for (const auto& p : s.points) {
      out << "  " << std::setw(8) << p.entities << std::setw(12) << p.mean_ns << std::setw(12)
          << p.samples << "\n";
    }
    out << std::setprecision(3) << "  fit: slope " << s.fit.slope << " ns/entity (se "
        << s.fit.slope_stderr << ", across repeats " << s.repeat_slope_stderr << "), intercept " << s.fit.intercept << " ns, r2 " << s.fit.r2
        << "\n"
        << std::setprecision(1);
  }
  out.unsetf(std::ios::floatfield);
}

}  // namespace evline
