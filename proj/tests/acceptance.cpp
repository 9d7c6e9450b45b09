// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "evline/bench.hpp"
#include "evline/filter.hpp"
#include "evline/geometry.hpp"
#include "evline/linalg.hpp"
#include "evline/pipeline.hpp"
#include "evline/synth.hpp"
#include "support/oracles.hpp"

using namespace evline;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  std::string name;
  bool pass = false;
  std::string detail;
};
std::vector<Verdict> verdicts;

void report(const std::string& name, bool pass, const std::string& detail) {
  verdicts.push_back({name, pass, detail});
  std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
}

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

// State-machine audit shared by every run below.
struct Audit {
  std::mutex mu;
  std::size_t runs = 0;
  std::size_t passes = 0;     // maintenance passes inspected
  std::size_t lines = 0;      // distinct lines seen in journals
  std::size_t hibernations = 0;
  std::vector<std::string> violations;

  void fail(const std::string& what) {
    if (violations.size() < 20) violations.push_back(what);
  }

  Tracker::MaintenanceHook hook(const TrackerConfig& cfg) {
    return [this, cfg](const Tracker& tr, const MaintenanceReport& r) {
      std::lock_guard lk(mu);
      ++passes;
      for (const auto& line : tr.lines().snapshot()) {
        std::lock_guard ll(line->mutex());
        if (line->state() == LineState::Active && !line->events().empty() &&
            line->events().oldest() < r.t - cfg.line.cleanup_event_age) {
          fail("line " + std::to_string(line->label()) + " keeps an event " +
               std::to_string(r.t - line->events().oldest()) + " us old at t=" +
               std::to_string(r.t));
        }
        if (line->state() == LineState::Hibernated &&
            r.t > line->state_since() + cfg.line.hibernation_timeout + cfg.maintenance_interval) {
          fail("line " + std::to_string(line->label()) + " hibernated since " +
               std::to_string(line->state_since()) + " still alive at " + std::to_string(r.t));
        }
      }
    };
  }

  void journal(const std::vector<TransitionRecord>& j, const TrackerConfig& cfg) {
    std::lock_guard lk(mu);
    ++runs;
    std::map<std::uint64_t, LineState> state;
    std::map<std::uint64_t, TimeUs> hib_since;
    std::set<std::int64_t> ids;
    std::int64_t last_id = 0;
    for (const auto& r : j) {
      auto it = state.find(r.seq);
      const LineState from = it == state.end() ? LineState::Initializing : it->second;
      if (it == state.end()) ++lines;
      if (r.from != from || !is_valid_transition(r.from, r.to)) {
        fail("seq " + std::to_string(r.seq) + ": " + std::string(to_string(r.from)) + " -> " +
             std::string(to_string(r.to)) + " after " + std::string(to_string(from)));
      }
      state[r.seq] = r.to;
      if (r.from == LineState::Initializing && r.to == LineState::Active) {
        if (r.id <= last_id || !ids.insert(r.id).second) {
          fail("ID " + std::to_string(r.id) + " issued after " + std::to_string(last_id));
        }
        last_id = std::max(last_id, r.id);
      }
      if (r.to == LineState::Hibernated) {
        ++hibernations;
        hib_since[r.seq] = r.t;
      }
      if (r.from == LineState::Hibernated && r.to == LineState::Deleted &&
          r.t - hib_since[r.seq] > cfg.line.hibernation_timeout + cfg.maintenance_interval) {
        fail("seq " + std::to_string(r.seq) + " deleted " +
             std::to_string(r.t - hib_since[r.seq]) + " us after hibernating");
      }
    }
  }
};
Audit audit;

RunResult audited_run(const std::vector<Event>& events, const TrackerConfig& cfg, RunOptions opts) {
  opts.on_maintenance = audit.hook(cfg);
  RunResult r = run_events(events, cfg, opts);
  audit.journal(r.journal, cfg);
  return r;
}

SceneSpec load_scene(const std::string& name) {
  return SceneSpec::load(std::string(EVLINE_SCENES_DIR) + "/" + name + ".scene");
}

// The oscillation scene's dwell intervals and the x the line stops at.
struct Reversal {
  TimeUs begin = 0;
  TimeUs end = 0;
  double x = 0.0;
  int sign = 0;  // +1 when the line arrives moving right
};

std::vector<Reversal> reversals(const SceneSpec& spec) {
  std::vector<Reversal> out;
  const auto& w = spec.tracks.at(0).waypoints;
  for (std::size_t i = 1; i + 1 < w.size(); ++i) {
    if (w[i].center.x == w[i + 1].center.x && w[i].center.y == w[i + 1].center.y) {
      out.push_back({w[i].t, w[i + 1].t, w[i].center.x,
                     w[i].center.x > w[i - 1].center.x ? 1 : -1});
    }
  }
  return out;
}

void hibernation_ablation(const SceneSpec& spec, const SynthOutput& synth) {
  const auto t0 = Clock::now();
  TrackerConfig on;
  TrackerConfig off;
  off.hibernation_enabled = false;
  const RunResult a = audited_run(synth.stream.events, on, {});
  const RunResult b = audited_run(synth.stream.events, off, {});
  const Metrics ma = score(a.snapshots, synth.truth);
  const Metrics mb = score(b.snapshots, synth.truth);
  const double secs = seconds_since(t0);
  const double ratio = mb.mean_lifetime_s > 0 ? ma.mean_lifetime_s / mb.mean_lifetime_s : 0.0;
  const bool pass = ratio >= 5.0 && ma.id_switches <= 1 && mb.id_switches >= 3 && secs < 30.0 &&
                    ma.matched_lines > 0 && mb.matched_lines > 0;
  report("hibernation ablation", pass,
         "lifetime " + fmt(ma.mean_lifetime_s) + " s (" + std::to_string(ma.matched_lines) +
             " lines, " + std::to_string(ma.id_switches) + " switches) vs " +
             fmt(mb.mean_lifetime_s) + " s without hibernation (" +
             std::to_string(mb.matched_lines) + " lines, " + std::to_string(mb.id_switches) +
             " switches), ratio " + fmt(ratio, 2) + ", " + fmt(secs, 1) + " s over " +
             std::to_string(spec.duration / 1000) + " ms of events");
}

void tracking_accuracy() {
  const auto t0 = Clock::now();
  const SceneSpec spec = load_scene("translation");
  const SynthOutput synth = generate(spec, 1);
  const RunResult r = audited_run(synth.stream.events, TrackerConfig{}, {});
  const Metrics m = score(r.snapshots, synth.truth);
  std::size_t bad_snapshots = 0, late = 0;
  for (const auto& s : r.snapshots) {
    if (s.t < ms_to_us(200)) continue;
    ++late;
    const auto active = std::count_if(s.lines.begin(), s.lines.end(), [](const SnapshotEntry& l) {
      return l.state == LineState::Active;
    });
    if (active != 1) ++bad_snapshots;
  }
  const double secs = seconds_since(t0);
  const bool pass = late > 0 && bad_snapshots == 0 && m.midpoint_rms_px < 3.0 &&
                    m.direction_rms_deg < 3.0 && m.id_switches == 0 && m.matched_lines == 1 &&
                    secs < 10.0;
  report("tracking accuracy", pass,
         std::to_string(bad_snapshots) + "/" + std::to_string(late) +
             " snapshots after 200 ms without exactly one active line, midpoint RMS " +
             fmt(m.midpoint_rms_px) + " px, direction RMS " + fmt(m.direction_rms_deg) +
             " deg, " + std::to_string(m.id_switches) + " switches, " +
             std::to_string(m.lines) + " IDs, " + fmt(secs, 1) + " s");
}

void swift_reversal(const SceneSpec& spec, const SynthOutput& synth) {
  const auto revs = reversals(spec);
  RunOptions fine;
  fine.snapshot_interval = ms_to_us(1);

  // With hibernation: a line near the truth must hibernate during each dwell
  // and report one bit-identical midpoint for as long as it stays hibernated.
  const RunResult a = audited_run(synth.stream.events, TrackerConfig{}, fine);
  // A wake can start and end between two snapshots, so wakes are taken from
  // the transition journal.
  std::map<std::int64_t, std::vector<TimeUs>> wakes;
  for (const auto& r : a.journal) {
    if (r.from == LineState::Hibernated && r.to == LineState::Active) wakes[r.id].push_back(r.t);
  }
  auto woke_between = [&](std::int64_t id, TimeUs lo, TimeUs hi) {
    for (TimeUs t : wakes[id])
      if (t > lo && t <= hi) return true;
    return false;
  };
  int frozen_ok = 0;
  std::size_t unstable = 0, refrozen = 0;
  std::map<std::int64_t, std::pair<TimeUs, Vec2>> frozen;
  for (const auto& s : a.snapshots) {
    for (const auto& l : s.lines) {
      if (l.state != LineState::Hibernated) {
        frozen.erase(l.label);
        continue;
      }
      auto [it, fresh] = frozen.try_emplace(l.label, s.t, l.midpoint);
      if (!fresh && (it->second.second.x != l.midpoint.x || it->second.second.y != l.midpoint.y)) {
        if (woke_between(l.label, it->second.first, s.t)) {
          ++refrozen;
        } else {
          ++unstable;
        }
      }
      it->second = {s.t, l.midpoint};
    }
  }
  std::string per_rev;
  for (const auto& rv : revs) {
    bool hibernated = false, woke = false;
    std::int64_t who = 0;
    for (const auto& s : a.snapshots) {
      if (s.t < rv.begin || s.t > rv.end + ms_to_us(200)) continue;
      for (const auto& l : s.lines) {
        if (std::abs(l.midpoint.x - rv.x) > 10.0) continue;
        if (l.state == LineState::Hibernated && s.t <= rv.end) {
          hibernated = true;
          who = l.label;
        }
        if (hibernated && l.label == who && l.state == LineState::Active && s.t > rv.end) woke = true;
      }
    }
    frozen_ok += hibernated && woke;
    per_rev += std::string(hibernated ? (woke ? "H" : "h") : "-");
  }

  // Without hibernation: how far past the stopping point the line runs
  // before it is lost.
  TrackerConfig off;
  off.hibernation_enabled = false;
  const RunResult b = audited_run(synth.stream.events, off, fine);
  double worst = -1e9, least = 1e9;
  std::string overs;
  for (const auto& rv : revs) {
    double over = -1e9;
    for (const auto& s : b.snapshots) {
      if (s.t < rv.begin || s.t > rv.end) continue;
      for (const auto& l : s.lines) {
        if (l.label <= 0 || std::abs(l.midpoint.y - 130.0) > 30.0) continue;
        over = std::max(over, rv.sign * (l.midpoint.x - rv.x));
      }
    }
    worst = std::max(worst, over);
    least = std::min(least, over);
    overs += (overs.empty() ? "" : " ") + (over > -1e8 ? fmt(over, 2) : std::string("none"));
  }
  const bool pass = frozen_ok == static_cast<int>(revs.size()) && unstable == 0 && least >= 5.0;
  report("swift-reversal freeze", pass,
         std::to_string(frozen_ok) + "/" + std::to_string(revs.size()) +
             " reversals hibernated and woke [" + per_rev + "], " + std::to_string(unstable) +
             " midpoint changes without a wake (" + std::to_string(refrozen) +
             " wake and refreeze between snapshots); overshoot without hibernation per reversal " +
             overs + " px, min " + fmt(least, 2) + " max " + fmt(worst, 2) + " px");
}

void throughput() {
  TrackerConfig cfg;
  const SynthOutput synth = generate(load_scene("throughput"), 1);
  // Entity counts over the settled part of a run.
  auto counting = [](double& lines, double& clusters, double& n) {
    RunOptions opts;
    opts.keep_snapshots = false;
    opts.snapshot_interval = ms_to_us(100);
    opts.on_snapshot = [&](const TrackSnapshot& s) {
      if (s.t < ms_to_us(1000)) return;
      lines += static_cast<double>(s.lines.size());
      clusters += static_cast<double>(s.clusters);
      n += 1;
    };
    return opts;
  };
  // Scene makeup from a reproducible run; the timing run is two-context,
  // where counts shift with thread scheduling.
  double dl = 0, dc = 0, dn = 0;
  audited_run(synth.stream.events, cfg, counting(dl, dc, dn));
  const double ml = dn ? dl / dn : 0, mc = dn ? dc / dn : 0;
  const bool scene_ok = std::lround(ml) == 3 && std::lround(mc) == 4;

  double cl = 0, cc = 0, cn = 0;
  RunOptions opts = counting(cl, cc, cn);
  opts.mode = Tracker::Mode::Concurrent;
  const RunResult r = audited_run(synth.stream.events, cfg, opts);
  const double us = r.events ? r.wall_seconds * 1e6 / static_cast<double>(r.events) : 1e9;
  report("throughput", us <= 10.0 && scene_ok,
         fmt(us) + " us/event, " + std::to_string(static_cast<std::uint64_t>(r.events_per_second())) +
             " ev/s over " + std::to_string(r.events) + " events, two contexts; scene mean " +
             fmt(ml, 2) + " lines, " + fmt(mc, 2) + " clusters (" + fmt(cn ? cl / cn : 0, 2) +
             ", " + fmt(cn ? cc / cn : 0, 2) + " in the timed run)");
}

void cost_scaling() {
  TrackerConfig cfg;
  SweepOptions lo;
  lo.max_entities = 10;
  lo.duration = ms_to_us(2000);
  lo.repeats = 16;
  SweepOptions co = lo;
  co.max_entities = 12;
  auto sweeps = sweep_lines(cfg, lo);
  const auto more = sweep_clusters(cfg, co);
  sweeps.insert(sweeps.end(), more.begin(), more.end());
  bool pass = sweeps.size() == 4;
  std::string detail;
  for (const auto& s : sweeps) {
    std::vector<double> x, y;
    for (const auto& p : s.points) {
      x.push_back(p.entities);
      y.push_back(p.mean_ns);
    }
    bool ok;
    std::string what;
    if (s.stage == "line_addition" || s.stage == "cluster_addition") {
      ok = s.fit.slope > 0 && s.fit.r2 > 0.9;
      what = "R2 " + fmt(s.fit.r2);
    } else {
      ok = flat_within_noise(s);
      what = "SE " + fmt(s.fit.slope_stderr) + " (" + fmt(s.repeat_slope_stderr) +
             " across repeats)" + (ok ? " flat" : " not flat");
    }
    pass = pass && ok && s.points.size() >= 8;
    detail += (detail.empty() ? "" : "; ") + s.stage + " vs " + s.entity + " slope " +
              fmt(s.fit.slope) + " ns, " + what + " over " + std::to_string(s.points.size()) +
              " points";
  }
  report("cost scaling", pass, detail);
}

void oracle_suite() {
  std::string detail;
  bool pass = true;

  // (a) filter decisions
  std::size_t mism = 0, checked = 0, passed = 0;
  for (const bool split : {true, false}) {
    for (const bool update : {true, false}) {
      FilterConfig cfg;
      cfg.update_on_suppress = update;
      std::mt19937_64 rng(1000 + split * 2 + update);
      const SensorSize sensor{32, 24};
      const auto events = oracle::random_stream(rng, 100'000, sensor, 40);
      const auto expected = oracle::naive_filter(events, cfg, split);
      EventFilter f(sensor, cfg, split);
      for (std::size_t i = 0; i < events.size(); ++i) {
        const bool got = f.pass(events[i]);
        mism += got != expected[i];
        passed += got;
        ++checked;
      }
    }
  }
  pass = pass && mism == 0 && passed > 1000 && passed < checked - 1000;
  detail += "filter " + std::to_string(mism) + " mismatches in " + std::to_string(checked) +
            " decisions (" + std::to_string(passed) + " pass)";

  // (b) eigen-decomposition
  double worst = 0.0;
  {
    std::mt19937_64 rng(2000);
    for (int n = 0; n < 10'000; ++n) {
      const int rank = 1 + n % 3;
      const Mat3 a = oracle::random_psd(rng, rank, std::pow(10.0, n % 4 - 1));
      const auto got = eigen_symmetric3(a);
      const auto ref = oracle::eigen3_reference(a);
      double scale = 1.0;
      for (double v : ref.values) scale = std::max(scale, std::abs(v));
      for (int k = 0; k < 3; ++k) {
        worst = std::max(worst, std::abs(got.values[k] - ref.values[k]) / scale);
        worst = std::max(worst, (a * got.vectors[k] - got.vectors[k] * got.values[k]).norm() / scale);
        for (int j = 0; j < 3; ++j) {
          worst = std::max(worst, std::abs(got.vectors[k].dot(got.vectors[j]) - (k == j)));
        }
      }
    }
  }
  pass = pass && worst <= 1e-9;
  detail += "; eigen max error " + [&] {
    std::ostringstream os;
    os << std::scientific << std::setprecision(2) << worst;
    return os.str();
  }() + " over 10000 matrices";

  // (c) connected length
  std::size_t chain_bad = 0;
  {
    std::mt19937_64 rng(3000);
    std::uniform_int_distribution<int> count(1, 60), ys(20, 200), xs(99, 101);
    for (int n = 0; n < 1000; ++n) {
      std::vector<double> coords(static_cast<std::size_t>(count(rng)));
      std::uniform_real_distribution<double> u(-60, 60);
      for (auto& c : coords) c = u(rng);
      chain_bad += longest_bin_chain(coords, 2.0) != oracle::brute_bin_chain(coords, 2.0);
    }
    const TimeScale scale;
    for (int n = 0; n < 1000; ++n) {
      // Static vertical line: transport is the identity and the projection
      // reduces to the y offset from the midpoint.
      std::vector<Event> events;
      const int m = count(rng);
      for (int i = 0; i < m; ++i) {
        events.push_back(Event{TimeUs(i) * 100, static_cast<std::uint16_t>(xs(rng)),
                               static_cast<std::uint16_t>(ys(rng)), Polarity::On});
      }
      PlaneFit fit;
      fit.normal = Vec3{1, 0, 0};
      fit.centroid = Vec3{100, 110, 5};
      const Vec2 d = line_direction(fit.normal);
      const Vec2 mid = line_midpoint(fit, 10.0, MidpointMode::AlongPlane);
      std::vector<double> coords;
      for (const auto& e : events) coords.push_back((static_cast<double>(e.y) - mid.y) * d.y);
      chain_bad += connected_length(events, fit, d, 10.0, scale) !=
                   oracle::brute_bin_chain(coords, 2.0);
    }
  }
  pass = pass && chain_bad == 0;
  detail += "; bin chain " + std::to_string(chain_bad) + " mismatches in 2000 cases";

  // (d) incremental moments
  double rel = 0.0;
  {
    std::mt19937_64 rng(4000);
    std::uniform_real_distribution<double> u(0, 300);
    EventAccumulator acc;
    std::vector<Vec3> live;
    for (int i = 0; i < 10'000; ++i) {
      if (live.size() > 20 && rng() % 3 == 0) {
        const std::size_t k = rng() % live.size();
        acc.remove(live[k]);
        live.erase(live.begin() + static_cast<std::ptrdiff_t>(k));
      } else {
        const Vec3 p{u(rng), u(rng), 5000 + u(rng) * 10};
        acc.add(p);
        live.push_back(p);
      }
    }
    const auto ref = oracle::batch_moments(live);
    const Mat3 c = acc.covariance();
    for (int i = 0; i < 3; ++i) {
      rel = std::max(rel, std::abs(acc.mean()[i] - ref.mean[i]) / std::abs(ref.mean[i]));
      for (int j = 0; j < 3; ++j) {
        rel = std::max(rel, std::abs(c[i][j] - ref.cov[i][j]) /
                                std::sqrt(std::abs(ref.cov[i][i] * ref.cov[j][j])));
      }
    }
  }
  pass = pass && rel <= 1e-6;
  detail += "; moments max relative error " + [&] {
    std::ostringstream os;
    os << std::scientific << std::setprecision(2) << rel;
    return os.str();
  }() + " after 10000 mutations";
  report("oracle equivalence", pass, detail);
}

void determinism(const fs::path& dir) {
  const std::string cli = EVLINE_CLI;
  const fs::path events = dir / "oscillation.csv";
  const fs::path truth = dir / "oscillation.truth";
  auto run = [](const std::string& cmd) { return std::system((cmd + " 2>/dev/null").c_str()); };
  bool ok = run("'" + cli + "' synth '" + std::string(EVLINE_SCENES_DIR) +
                "/oscillation.scene' --seed 3 -o '" + events.string() + "' --truth '" +
                truth.string() + "'") == 0;
  std::vector<std::string> outputs;
  for (int k = 0; k < 2 && ok; ++k) {
    const fs::path out = dir / ("run" + std::to_string(k) + ".tracks");
    ok = run("'" + cli + "' track '" + events.string() + "' --deterministic -o '" + out.string() +
             "'") == 0;
    std::ifstream in(out, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    outputs.push_back(ss.str());
  }
  const bool same = ok && outputs.size() == 2 && outputs[0] == outputs[1] && !outputs[0].empty();
  report("determinism", same,
         ok ? std::to_string(outputs[0].size()) + " bytes per track file, " +
                  (same ? "identical" : "different")
            : "CLI run failed");
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  const fs::path dir = fs::temp_directory_path() / ("evline_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);

  const SceneSpec osc = load_scene("oscillation");
  const SynthOutput osc_synth = generate(osc, 1);

  hibernation_ablation(osc, osc_synth);
  tracking_accuracy();
  swift_reversal(osc, osc_synth);
  throughput();
  cost_scaling();
  oracle_suite();
  {
    std::lock_guard lk(audit.mu);
    std::string detail = std::to_string(audit.runs) + " runs, " + std::to_string(audit.lines) +
                         " lines, " + std::to_string(audit.hibernations) + " hibernations, " +
                         std::to_string(audit.passes) + " maintenance passes, " +
                         std::to_string(audit.violations.size()) + " violations";
    for (const auto& v : audit.violations) detail += "\n    " + v;
    report("state-machine audit", audit.violations.empty() && audit.runs >= 6 && audit.passes > 0,
           detail);
  }
  determinism(dir);

  std::error_code ec;
  fs::remove_all(dir, ec);
  const auto failed = std::count_if(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return !v.pass; });
  std::cout << verdicts.size() - failed << "/" << verdicts.size() << " criteria passed in "
            << fmt(seconds_since(t0), 1) << " s" << std::endl;
  return failed ? 1 : 0;
}
