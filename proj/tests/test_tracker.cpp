#include <catch_amalgamated.hpp>

#include <atomic>
#include <cmath>
#include <set>
#include <sstream>
#include <thread>

#include "evline/io.hpp"
#include "evline/pipeline.hpp"
#include "evline/synth.hpp"
#include "evline/tracker.hpp"

using namespace evline;

namespace {

Event ev(TimeUs t, int x, int y, Polarity p = Polarity::On) {
  return Event{t, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), p};
}

SceneSpec static_line_scene(TimeUs duration) {
  SceneSpec s;
  s.duration = duration;
  s.noise_rate = 0.3;
  TrackSpec t;
  t.id = 1;
  t.length_px = 100;
  t.angle_deg = 90;
  t.rate = 0.3;
  t.waypoints = {Waypoint{0, Vec2{100, 130}}};
  s.tracks.push_back(t);
  return s;
}

SceneSpec moving_line_scene(TimeUs duration) {
  SceneSpec s;
  s.duration = duration;
  s.noise_rate = 0.5;
  TrackSpec t;
  t.id = 1;
  t.length_px = 100;
  t.angle_deg = 80;
  t.rate = 1.0;
  t.waypoints = {Waypoint{0, Vec2{80, 130}}, Waypoint{duration, Vec2{80 + duration / 10'000.0, 130}}};
  s.tracks.push_back(t);
  return s;
}

std::string serialize(const std::vector<TrackSnapshot>& snaps) {
  std::ostringstream out;
  write_track_header(out);
  for (const auto& s : snaps) write_snapshot(out, s);
  return out.str();
}

// Support row two pixels below makes every event of the main row pass the
// neighbourhood filter while never passing itself.
void feed_support_row(Tracker& tr, int x0, int x1, int y, TimeUs t0) {
  for (int x = x0; x <= x1; ++x) {
    REQUIRE(tr.feed(ev(t0 + (x - x0) * 50, x, y)).disposition == Disposition::Suppressed);
  }
}

}  // namespace

TEST_CASE("fresh tracker", "[tracker]") {
  Tracker tr(TrackerConfig{});
  CHECK(tr.snapshot(0).lines.empty());
  CHECK(tr.snapshot(0).clusters == 0);
  CHECK(tr.run_maintenance(10'000).empty());
}

TEST_CASE("cascade creates a cluster on the seventh chained event", "[tracker]") {
  Tracker tr(TrackerConfig{});
  feed_support_row(tr, 90, 130, 52, 0);
  std::vector<Disposition> got;
  for (int i = 0; i < 12; ++i) {
    got.push_back(tr.feed(ev(10'000 + i * 100, 100 + i, 50)).disposition);
  }
  for (int i = 0; i < 6; ++i) CHECK(got[i] == Disposition::Unassigned);
  CHECK(got[6] == Disposition::NewCluster);
  for (int i = 7; i < 12; ++i) CHECK(got[i] == Disposition::Cluster);
  CHECK(tr.clusters().size() == 1);
  CHECK(tr.counts()[Disposition::NewCluster] == 1);
}

TEST_CASE("out of bounds events are counted and dropped", "[tracker]") {
  TrackerConfig cfg;
  cfg.sensor = {50, 40};
  Tracker tr(cfg);
  CHECK(tr.feed(ev(0, 60, 10)).disposition == Disposition::Suppressed);
  CHECK(tr.counts().out_of_bounds == 1);
}

TEST_CASE("events near an active line are assigned to it", "[tracker]") {
  const auto synth = generate(static_line_scene(ms_to_us(400)), 5);
  Tracker tr(TrackerConfig{});
  std::set<std::int64_t> labels;
  std::size_t line_hits_after_activation = 0;
  for (const auto& e : synth.stream.events) {
    const auto r = tr.feed(e);
    if (r.disposition == Disposition::Line) {
      labels.insert(r.line_label);
      if (r.line_label > 0) ++line_hits_after_activation;
    }
  }
  CHECK(line_hits_after_activation > 1000);
  CHECK(labels.count(1) == 1);
  const auto snap = tr.snapshot(ms_to_us(400));
  REQUIRE(snap.lines.size() == 1);
  CHECK(snap.lines[0].label == 1);
  CHECK(snap.lines[0].state == LineState::Active);
  CHECK(std::abs(snap.lines[0].midpoint.x - 100) < 1.5);
  CHECK(std::abs(snap.lines[0].angle_deg - 90) < 3);
}

TEST_CASE("cascade order: filter, then lines, then clusters", "[tracker]") {
  const auto synth = generate(static_line_scene(ms_to_us(400)), 8);
  Tracker tr(TrackerConfig{});
  std::size_t i = 0;
  const auto& events = synth.stream.events;
  for (; i < events.size() && events[i].t < ms_to_us(200); ++i) tr.feed(events[i]);
  REQUIRE(tr.lines().size() == 1);
  const auto line = tr.lines().snapshot().front();
  REQUIRE(line->state() == LineState::Active);

  // A horizontal cluster crossing the line.
  const TimeUs now = events[i].t;
  Chain chain;
  for (int k = 0; k < 16; ++k) chain.push_back({92 + k, 130, now - 1000 + k * 10});
  const auto cluster = tr.clusters().create_from_chain(chain, Polarity::On);
  REQUIRE(cluster);

  std::size_t both = 0, suppressed_near_line = 0;
  for (; i < events.size(); ++i) {
    const Event& e = events[i];
    bool on_line, on_cluster;
    {
      std::lock_guard a(line->mutex());
      on_line = line_accepts(*line, e, tr.config().line);
    }
    {
      std::lock_guard b(cluster->mutex());
      on_cluster = cluster->alive() && cluster_accepts(*cluster, e, tr.config().cluster);
    }
    const auto r = tr.feed(e);
    if (on_line && r.disposition == Disposition::Suppressed) ++suppressed_near_line;
    if (on_line && on_cluster && r.disposition != Disposition::Suppressed) {
      ++both;
      CHECK(r.disposition == Disposition::Line);
    }
  }
  CHECK(both > 0);
  CHECK(suppressed_near_line > 0);
}

TEST_CASE("maintenance report for stale entities", "[tracker]") {
  const auto synth = generate(static_line_scene(ms_to_us(300)), 2);
  TrackerConfig cfg;
  Tracker tr(cfg);
  for (const auto& e : synth.stream.events) tr.feed(e);
  // No more events: step maintenance until the line has been hibernated for
  // exactly the timeout.
  TimeUs t = ms_to_us(300);
  TimeUs hibernated = -1;
  for (; t < ms_to_us(1000); t += cfg.maintenance_interval) {
    tr.run_maintenance(t);
    const auto snap = tr.snapshot(t);
    if (!snap.lines.empty() && snap.lines[0].state == LineState::Hibernated) {
      hibernated = t;
      break;
    }
  }
  REQUIRE(hibernated > 0);
  for (t += cfg.maintenance_interval; t <= hibernated + cfg.line.hibernation_timeout;
       t += cfg.maintenance_interval) {
    tr.run_maintenance(t);
  }
  REQUIRE(tr.lines().size() == 1);
  // A cluster idle for 45 ms at the next boundary.
  Chain chain;
  for (int k = 0; k < 8; ++k) chain.push_back({200 + k, 40, t - ms_to_us(45) - 8 + k});
  REQUIRE(tr.clusters().create_from_chain(chain, Polarity::On));

  const auto r = tr.run_maintenance(t);
  CHECK(r.clusters.clusters_deleted == 1);
  CHECK(r.lines.lines_deleted == 1);
  CHECK(tr.lines().size() == 0);
  CHECK(tr.clusters().size() == 0);
}

TEST_CASE("maintenance is idempotent at a fixed time", "[tracker]") {
  const auto synth = generate(moving_line_scene(ms_to_us(600)), 4);
  Tracker tr(TrackerConfig{});
  std::size_t checked = 0;
  TimeUs next = 20'000;
  for (const auto& e : synth.stream.events) {
    tr.feed(e);
    if (e.t >= next) {
      next += 20'000;
      tr.run_maintenance(e.t);
      const auto again = tr.run_maintenance(e.t);
      CHECK(again.empty());
      ++checked;
    }
  }
  CHECK(checked > 5);
}

TEST_CASE("lower ID absorbs a coincident line", "[tracker]") {
  SceneSpec s;
  s.duration = ms_to_us(1200);
  s.noise_rate = 0.2;
  for (int k = 0; k < 2; ++k) {
    TrackSpec t;
    t.id = k + 1;
    t.rate = 0.3;
    t.waypoints = {Waypoint{0, Vec2{100, 130}}};
    if (k == 1) t.waypoints = {Waypoint{0, Vec2{180, 130}}, Waypoint{ms_to_us(600), Vec2{100, 130}}};
    s.tracks.push_back(t);
  }
  const auto synth = generate(s, 3);
  const auto run = run_events(synth.stream.events, TrackerConfig{});
  std::set<std::int64_t> ids_mid, ids_end;
  for (const auto& snap : run.snapshots) {
    for (const auto& l : snap.lines) {
      if (l.label <= 0) continue;
      if (snap.t == ms_to_us(300)) ids_mid.insert(l.label);
      if (snap.t == ms_to_us(1100)) ids_end.insert(l.label);
    }
  }
  CHECK(ids_mid == std::set<std::int64_t>{1, 2});
  CHECK(ids_end == std::set<std::int64_t>{1});
  bool two_deleted = false;
  for (const auto& rec : run.journal) two_deleted |= rec.id == 2 && rec.to == LineState::Deleted;
  CHECK(two_deleted);
}

TEST_CASE("disabling hibernation removes the hibernated state", "[tracker]") {
  SceneSpec s;
  s.duration = ms_to_us(3000);
  s.noise_rate = 0.3;
  TrackSpec t;
  t.id = 1;
  t.static_emits = false;
  t.waypoints = {Waypoint{0, Vec2{80, 130}}, Waypoint{ms_to_us(1000), Vec2{260, 130}},
                 Waypoint{ms_to_us(1150), Vec2{260, 130}}, Waypoint{ms_to_us(2150), Vec2{80, 130}}};
  s.tracks.push_back(t);
  const auto synth = generate(s, 6);

  TrackerConfig with;
  const auto a = run_events(synth.stream.events, with);
  bool hibernated = false;
  for (const auto& r : a.journal) hibernated |= r.to == LineState::Hibernated;
  CHECK(hibernated);

  TrackerConfig without;
  without.hibernation_enabled = false;
  const auto b = run_events(synth.stream.events, without);
  for (const auto& r : b.journal) CHECK(r.to != LineState::Hibernated);
  for (const auto& snap : b.snapshots)
    for (const auto& l : snap.lines) CHECK(l.state != LineState::Hibernated);
}

TEST_CASE("deterministic runs are bit identical", "[tracker]") {
  const auto synth = generate(moving_line_scene(ms_to_us(1500)), 9);
  const auto a = run_events(synth.stream.events, TrackerConfig{});
  const auto b = run_events(synth.stream.events, TrackerConfig{});
  CHECK(serialize(a.snapshots) == serialize(b.snapshots));
  CHECK(a.counts.by_kind == b.counts.by_kind);
}

TEST_CASE("maintenance promotion path", "[tracker]") {
  TrackerConfig cfg;
  cfg.promotion_path = PromotionPath::Maintenance;
  const auto synth = generate(moving_line_scene(ms_to_us(800)), 12);
  const auto run = run_events(synth.stream.events, cfg);
  CHECK(run.counts.promotions == 0);
  REQUIRE_FALSE(run.snapshots.empty());
  std::size_t active = 0;
  for (const auto& l : run.snapshots.back().lines) active += l.state == LineState::Active;
  CHECK(active == 1);
}

TEST_CASE("concurrent mode keeps snapshots consistent under load", "[tracker][concurrency]") {
  const auto synth = generate(moving_line_scene(ms_to_us(2000)), 10);
  Tracker tr(TrackerConfig{}, Tracker::Mode::Concurrent);
  std::atomic<bool> done{false};
  std::atomic<std::size_t> snaps{0};
  std::atomic<std::size_t> bad{0};
  std::thread reader([&] {
    while (!done.load()) {
      const auto s = tr.snapshot(tr.clock() == kNeverFired ? 0 : tr.clock());
      std::set<std::int64_t> labels;
      for (const auto& l : s.lines) {
        const bool ok = std::isfinite(l.midpoint.x) && std::isfinite(l.midpoint.y) &&
                        l.angle_deg >= 0 && l.angle_deg < 180 && l.length >= 0 &&
                        l.n_events > 0 && l.state != LineState::Deleted &&
                        labels.insert(l.label).second;
        if (!ok) ++bad;
      }
      ++snaps;
      std::this_thread::yield();
    }
  });
  for (const auto& e : synth.stream.events) tr.feed(e);
  tr.advance_to(ms_to_us(2000));
  done = true;
  reader.join();
  tr.finish();
  CHECK(bad == 0);
  CHECK(snaps > 0);
  // Every boundary up to the end ran exactly once.
  const auto log = tr.maintenance_log();
  for (std::size_t i = 1; i < log.size(); ++i) CHECK(log[i].t > log[i - 1].t);
  std::size_t active = 0;
  for (const auto& l : tr.snapshot(ms_to_us(2000)).lines) active += l.state == LineState::Active;
  CHECK(active == 1);
}

TEST_CASE("concurrent hook sees every boundary", "[tracker][concurrency]") {
  const auto synth = generate(moving_line_scene(ms_to_us(500)), 11);
  Tracker tr(TrackerConfig{}, Tracker::Mode::Concurrent);
  std::vector<TimeUs> seen;
  std::mutex mu;
  tr.set_maintenance_hook([&](const Tracker&, const MaintenanceReport& r) {
    std::lock_guard lock(mu);
    seen.push_back(r.t);
  });
  for (const auto& e : synth.stream.events) tr.feed(e);
  tr.advance_to(ms_to_us(500));
  tr.finish();
  REQUIRE_FALSE(seen.empty());
  for (std::size_t i = 1; i < seen.size(); ++i) CHECK(seen[i] - seen[i - 1] == ms_to_us(10));
  CHECK(seen.back() == ms_to_us(500));
}

TEST_CASE("instrumentation records every stage", "[tracker]") {
  const auto synth = generate(moving_line_scene(ms_to_us(500)), 13);
  Tracker tr(TrackerConfig{});
  for (const auto& e : synth.stream.events) tr.feed(e);
  const auto& st = tr.instrument();
  CHECK(st.filtering.count == synth.stream.events.size());
  CHECK(st.line_addition.count > 0);
  CHECK(st.cluster_addition.count > 0);
  CHECK(st.cluster_creation.count > 0);
  CHECK(st.filtering.mean_ns() > 0);
  std::uint64_t bucketed = 0;
  for (const auto& [k, v] : st.filtering_by_lines) bucketed += v.count;
  CHECK(bucketed == st.filtering.count);
}
