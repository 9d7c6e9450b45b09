#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "evline/bench.hpp"
#include "evline/config.hpp"
#include "evline/io.hpp"
#include "evline/pipeline.hpp"
#include "evline/render.hpp"
#include "evline/synth.hpp"
#include "evline/tracker.hpp"

namespace {

using namespace evline;

constexpr int kInputError = 1;
constexpr int kInternalError = 2;

struct Common {
  std::string config_path;
  bool no_hibernation = false;
};

TrackerConfig load_config(const Common& c) {
  TrackerConfig cfg = c.config_path.empty() ? TrackerConfig{} : TrackerConfig::load(c.config_path);
  if (c.no_hibernation) cfg.hibernation_enabled = false;
  cfg.validate();
  return cfg;
}

// "-" means stdout.
class Output {
 public:
  explicit Output(const std::string& path, bool binary = false) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path, binary ? std::ios::binary : std::ios::out);
    if (!*file_) throw Error("cannot write " + path);
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

struct TrackArgs {
  Common common;
  std::string events;
  std::string out = "-";
  std::string summary_json;
  double snapshot_ms = 10.0;
  bool deterministic = false;
  bool binary = false;
  bool dump_config = false;
};

int cmd_track(const TrackArgs& a) {
  TrackerConfig cfg = load_config(a.common);
  if (a.dump_config) {
    cfg.dump(std::cout);
    return 0;
  }
  std::ifstream in(a.events, a.binary ? std::ios::binary : std::ios::in);
  if (!in) throw ParseError("cannot open " + a.events);
  EventReader reader(in, a.binary, a.events);
  cfg.sensor = reader.sensor();
  cfg.validate();

  Output out(a.out);
  write_track_header(out.stream());
  RunOptions opts;
  opts.mode = a.deterministic ? Tracker::Mode::Deterministic : Tracker::Mode::Concurrent;
  opts.snapshot_interval = ms_to_us(a.snapshot_ms);
  if (opts.snapshot_interval <= 0) throw Error("--snapshot-interval-ms must be positive");
  opts.keep_snapshots = false;
  std::size_t max_ids = 0;
  opts.on_snapshot = [&](const TrackSnapshot& s) {
    write_snapshot(out.stream(), s);
    for (const auto& l : s.lines) {
      if (l.label > 0) max_ids = std::max<std::size_t>(max_ids, static_cast<std::size_t>(l.label));
    }
  };
  const RunResult r = run_reader(reader, cfg, opts);
  out.stream().flush();

  if (r.reordered > 0) {
    std::cerr << "warning: " << r.reordered << " records arrived out of order (within 1 ms) and were re-sorted\n";
  }
  std::cerr << "events        " << r.events << "\n";
  for (int d = 0; d < 6; ++d) {
    std::cerr << "  " << std::left << std::setw(12) << to_string(static_cast<Disposition>(d))
              << std::right << r.counts.by_kind[d] << "\n";
  }
  std::cerr << "out_of_bounds " << r.counts.out_of_bounds << "\n";
  std::cerr << "promotions    " << r.counts.promotions << "\n";
  std::cerr << "line_ids      " << max_ids << "\n";
  std::cerr << "throughput    " << static_cast<std::uint64_t>(r.events_per_second()) << " ev/s ("
            << (r.events ? r.wall_seconds * 1e6 / static_cast<double>(r.events) : 0.0)
            << " us/event)\n";

  if (!a.summary_json.empty()) {
    nlohmann::json j;
    j["events"] = r.events;
    for (int d = 0; d < 6; ++d) j["dispositions"][std::string(to_string(static_cast<Disposition>(d)))] = r.counts.by_kind[d];
    j["out_of_bounds"] = r.counts.out_of_bounds;
    j["promotions"] = r.counts.promotions;
    j["wall_seconds"] = r.wall_seconds;
    j["events_per_second"] = r.events_per_second();
    j["stage_mean_ns"] = {{"filtering", r.stats.filtering.mean_ns()},
                          {"line_addition", r.stats.line_addition.mean_ns()},
                          {"cluster_addition", r.stats.cluster_addition.mean_ns()},
                          {"cluster_creation", r.stats.cluster_creation.mean_ns()}};
    Output js(a.summary_json);
    js.stream() << j.dump(2) << "\n";
  }
  return 0;
}

struct SynthArgs {
  std::string scene;
  std::uint64_t seed = 1;
  std::string out;
  std::string truth;
  bool binary = false;
};

int cmd_synth(const SynthArgs& a) {
  const SceneSpec spec = SceneSpec::load(a.scene);
  const SynthOutput s = generate(spec, a.seed);
  {
    Output out(a.out, a.binary);
    if (a.binary) write_events_binary(out.stream(), s.stream.sensor, s.stream.events);
    else write_events(out.stream(), s.stream.sensor, s.stream.events);
  }
  if (!a.truth.empty()) {
    Output t(a.truth);
    s.truth.write(t.stream());
  }
  std::cerr << "generated " << s.stream.events.size() << " events over "
            << spec.duration / 1000.0 << " ms, " << spec.tracks.size() << " tracks\n";
  return 0;
}

struct EvalArgs {
  std::string tracks;
  std::string truth;
  std::string json;
};

int cmd_eval(const EvalArgs& a) {
  const auto snaps = load_tracks(a.tracks);
  const GroundTruth truth = GroundTruth::load(a.truth);
  const MatchThresholds th;
  const Metrics m = score(snaps, truth, th);
  write_metrics_text(std::cout, m, th);
  if (!a.json.empty()) {
    Output js(a.json);
    js.stream() << metrics_json(m, th) << "\n";
  }
  return 0;
}

struct BenchArgs {
  Common common;
  std::string sweep = "all";
  std::uint64_t seed = 1;
  double duration_ms = 2000;
  int repeats = 1;
  std::string json;
  bool deterministic = false;
};

int cmd_bench(const BenchArgs& a) {
  TrackerConfig cfg = load_config(a.common);
  cfg.instrument = true;
  nlohmann::json j;
  SweepOptions so;
  so.seed = a.seed;
  so.duration = ms_to_us(a.duration_ms);
  so.repeats = a.repeats;

  std::vector<StageSweep> sweeps;
  if (a.sweep == "lines" || a.sweep == "all") {
    so.max_entities = 10;
    for (auto& s : sweep_lines(cfg, so)) sweeps.push_back(s);
  }
  if (a.sweep == "clusters" || a.sweep == "all") {
    so.max_entities = 12;
    for (auto& s : sweep_clusters(cfg, so)) sweeps.push_back(s);
  }
  if (a.sweep != "lines" && a.sweep != "clusters" && a.sweep != "all" && a.sweep != "none") {
    throw Error("--sweep must be lines, clusters, all or none");
  }
  write_sweep_table(std::cout, sweeps);
  for (const auto& s : sweeps) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : s.points) pts.push_back({{"entities", p.entities}, {"mean_ns", p.mean_ns}, {"samples", p.samples}});
    j["sweeps"][s.stage + "_vs_" + s.entity] = {{"points", pts},
                                                {"slope_ns", s.fit.slope},
                                                {"slope_stderr", s.fit.slope_stderr},
                                                {"repeat_slope_stderr", s.repeat_slope_stderr},
                                                {"flat_within_noise", flat_within_noise(s)},
                                                {"intercept_ns", s.fit.intercept},
                                                {"r2", s.fit.r2}};
  }

  // Steady scene, full pipeline timing.
  const SynthOutput synth = generate(throughput_scene(ms_to_us(std::max(a.duration_ms, 4000.0))), a.seed);
  RunOptions opts;
  opts.mode = a.deterministic ? Tracker::Mode::Deterministic : Tracker::Mode::Concurrent;
  opts.keep_snapshots = false;
  double lines = 0, clusters = 0, samples = 0;
  opts.snapshot_interval = ms_to_us(100);
  opts.on_snapshot = [&](const TrackSnapshot& s) {
    if (s.t < ms_to_us(1000)) return;
    lines += static_cast<double>(s.lines.size());
    clusters += static_cast<double>(s.clusters);
    samples += 1;
  };
  const RunResult r = run_events(synth.stream.events, cfg, opts);
  const double us_per_event = r.events ? r.wall_seconds * 1e6 / static_cast<double>(r.events) : 0.0;
  std::cout << std::fixed << std::setprecision(3);
  std::cout << "throughput scene: " << r.events << " events, " << us_per_event << " us/event, "
            << static_cast<std::uint64_t>(r.events_per_second()) << " ev/s\n";
  std::cout << "  mean lines " << (samples ? lines / samples : 0) << ", mean clusters "
            << (samples ? clusters / samples : 0) << "\n";
  std::cout << "  stage mean ns: filtering " << r.stats.filtering.mean_ns() << ", line addition "
            << r.stats.line_addition.mean_ns() << ", cluster addition "
            << r.stats.cluster_addition.mean_ns() << ", cluster creation "
            << r.stats.cluster_creation.mean_ns() << "\n";
  j["throughput"] = {{"events", r.events},
                     {"us_per_event", us_per_event},
                     {"events_per_second", r.events_per_second()},
                     {"mean_lines", samples ? lines / samples : 0},
                     {"mean_clusters", samples ? clusters / samples : 0},
                     {"stage_mean_ns",
                      {{"filtering", r.stats.filtering.mean_ns()},
                       {"line_addition", r.stats.line_addition.mean_ns()},
                       {"cluster_addition", r.stats.cluster_addition.mean_ns()},
                       {"cluster_creation", r.stats.cluster_creation.mean_ns()}}}};
  if (!a.json.empty()) {
    Output js(a.json);
    js.stream() << j.dump(2) << "\n";
  }
  return 0;
}

struct RenderArgs {
  std::string events;
  std::string tracks;
  std::string out;
  std::string background;
  double t_ms = 0;
  double window_ms = 20;
  bool binary = false;
};

int cmd_render(const RenderArgs& a) {
  const EventStream s = load_events(a.events, a.binary);
  const auto snaps = load_tracks(a.tracks);
  const TimeUs t = ms_to_us(a.t_ms);
  TrackSnapshot snap{t, {}, 0};
  for (const auto& sn : snaps) {
    if (sn.t <= t) snap = sn;
  }
  std::vector<Event> window;
  for (const auto& e : s.events) {
    if (e.t <= t && e.t > t - ms_to_us(a.window_ms)) window.push_back(e);
  }
  OverlayOptions opts;
  if (!a.background.empty()) {
    std::ifstream bg(a.background, std::ios::binary);
    if (!bg) throw ParseError("cannot open " + a.background);
    opts.background = read_ppm(bg);
  }
  const Image img = render_overlay(s.sensor, window, snap, opts);
  Output out(a.out, true);
  write_ppm(out.stream(), img);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evline: event-camera line tracker"};
  app.require_subcommand(1);

  TrackArgs track;
  auto* t = app.add_subcommand("track", "track lines in an event file");
  t->add_option("events", track.events, "event file")->required();
  t->add_option("-o,--output", track.out, "track file (default stdout)");
  t->add_option("--config", track.common.config_path, "tracker config file");
  t->add_option("--snapshot-interval-ms", track.snapshot_ms, "snapshot cadence")->capture_default_str();
  t->add_flag("--deterministic", track.deterministic, "interleave maintenance with ingest");
  t->add_flag("--no-hibernation", track.common.no_hibernation, "disable the hibernated state");
  t->add_flag("--binary", track.binary, "read the raw binary event format");
  t->add_flag("--dump-config", track.dump_config, "print the effective config and exit");
  t->add_option("--summary-json", track.summary_json, "write the run summary as JSON");
  // The events argument is not needed for --dump-config.
  t->get_option("events")->required(false);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic scene");
  s->add_option("scene", synth.scene, "scene spec")->required();
  s->add_option("--seed", synth.seed, "random seed")->capture_default_str();
  s->add_option("-o,--output", synth.out, "event file")->required();
  s->add_option("--truth", synth.truth, "ground-truth file");
  s->add_flag("--binary", synth.binary, "write the raw binary event format");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "score tracks against ground truth");
  e->add_option("tracks", eval.tracks, "track file")->required();
  e->add_option("truth", eval.truth, "ground-truth file")->required();
  e->add_option("--json", eval.json, "write metrics as JSON");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "per-stage timing sweeps and throughput");
  b->add_option("--config", bench.common.config_path, "tracker config file");
  b->add_option("--sweep", bench.sweep, "lines, clusters, all or none")->capture_default_str();
  b->add_option("--seed", bench.seed, "random seed")->capture_default_str();
  b->add_option("--duration-ms", bench.duration_ms, "scene duration per sweep point")->capture_default_str();
  b->add_option("--repeats", bench.repeats, "runs per sweep point")->capture_default_str();
  b->add_option("--json", bench.json, "write results as JSON");
  b->add_flag("--deterministic", bench.deterministic, "single-context throughput run");
  b->add_flag("--no-hibernation", bench.common.no_hibernation, "disable the hibernated state");

  RenderArgs render;
  auto* r = app.add_subcommand("render", "draw a snapshot over recent events (PPM)");
  r->add_option("events", render.events, "event file")->required();
  r->add_option("tracks", render.tracks, "track file")->required();
  r->add_option("-o,--output", render.out, "output image")->required();
  r->add_option("--t-ms", render.t_ms, "snapshot time")->required();
  r->add_option("--window-ms", render.window_ms, "event window")->capture_default_str();
  r->add_option("--background", render.background, "PPM/PGM background");
  r->add_flag("--binary", render.binary, "read the raw binary event format");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kInputError;
  }

  try {
    if (*t) {
      if (!track.dump_config && track.events.empty()) throw Error("track: missing event file");
      return cmd_track(track);
    }
    if (*s) return cmd_synth(synth);
    if (*e) return cmd_eval(eval);
    if (*b) return cmd_bench(bench);
    if (*r) return cmd_render(render);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kInputError;
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << "\n";
    return kInternalError;
  }
  return kInternalError;
}
