#include "evline/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace evline {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<double> numbers(const std::string& v, std::size_t expected, const std::string& where) {
  std::istringstream is(v);
  std::vector<double> out;
  double d = 0;
  while (is >> d) out.push_back(d);
  if (out.size() != expected || !is.eof()) {
    throw ParseError(where + ": expected " + std::to_string(expected) + " numbers");
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string fixed(double v, int decimals = 4) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, decimals);
  return std::string(buf, r.ptr);
}

double normalize_angle(double deg) {
  double a = std::fmod(deg, 180.0);
  if (a < 0) a += 180.0;
  if (a >= 180.0) a -= 180.0;
  return a;
}

double angle_diff_deg(double a, double b) {
  const double d = std::fabs(normalize_angle(a) - normalize_angle(b));
  return std::min(d, 180.0 - d);
}

}  // namespace

void SceneSpec::validate() const {
  if (sensor.width <= 0 || sensor.height <= 0) throw Error("scene: sensor size must be positive");
  if (duration < 0) throw Error("scene: duration must be non-negative");
  if (!(noise_rate >= 0)) throw Error("scene: noise rate must be non-negative");
  std::set<int> ids;
  for (const auto& t : tracks) {
    if (!ids.insert(t.id).second) throw Error("scene: duplicate track id " + std::to_string(t.id));
    if (!(t.rate >= 0)) throw Error("scene: track rate must be non-negative");
    if (!(t.length_px >= 0)) throw Error("scene: track length must be non-negative");
    if (!(t.jitter_px >= 0)) throw Error("scene: track jitter must be non-negative");
    if (t.motion == MotionKind::Sine && !(t.sine_period_ms > 0)) {
      throw Error("scene: sine period must be positive");
    }
    for (std::size_t i = 1; i < t.waypoints.size(); ++i) {
      if (t.waypoints[i].t <= t.waypoints[i - 1].t) {
        throw Error("scene: waypoint times must increase");
      }
    }
  }
}

SceneSpec SceneSpec::parse(std::istream& in) {
  SceneSpec spec;
  std::string raw;
  int line_no = 0;
  TrackSpec* track = nullptr;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = "scene line " + std::to_string(line_no);
    if (line == "track") {
      spec.tracks.emplace_back();
      spec.tracks.back().id = static_cast<int>(spec.tracks.size());
      track = &spec.tracks.back();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto num = [&] { return numbers(value, 1, where)[0]; };
    if (!track) {
      if (key == "sensor.width_px") spec.sensor.width = static_cast<int>(num());
      else if (key == "sensor.height_px") spec.sensor.height = static_cast<int>(num());
      else if (key == "duration_ms") spec.duration = ms_to_us(num());
      else if (key == "noise_rate_per_ms") spec.noise_rate = num();
      else throw ParseError(where + ": unknown scene key '" + key + "'");
      continue;
    }
    if (key == "id") track->id = static_cast<int>(num());
    else if (key == "length_px") track->length_px = num();
    else if (key == "angle_deg") track->angle_deg = num();
    else if (key == "rate_per_px_ms") track->rate = num();
    else if (key == "jitter_px") track->jitter_px = num();
    else if (key == "start_ms") track->start = ms_to_us(num());
    else if (key == "end_ms") track->end = ms_to_us(num());
    else if (key == "static_emits") {
      if (value == "true") track->static_emits = true;
      else if (value == "false") track->static_emits = false;
      else throw ParseError(where + ": expected true or false");
    } else if (key == "waypoint") {
      const auto v = numbers(value, 3, where);
      track->motion = MotionKind::Waypoints;
      track->waypoints.push_back(Waypoint{ms_to_us(v[0]), Vec2{v[1], v[2]}});
    } else if (key == "sine") {
      const auto v = numbers(value, 5, where);
      track->motion = MotionKind::Sine;
      track->sine_center = Vec2{v[0], v[1]};
      track->sine_amplitude_px = v[2];
      track->sine_period_ms = v[3];
      track->sine_axis_deg = v[4];
    } else {
      throw ParseError(where + ": unknown track key '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

SceneSpec SceneSpec::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return parse(in);
}

void SceneSpec::dump(std::ostream& out) const {
  out << std::setprecision(12);
  out << "sensor.width_px = " << sensor.width << "\n";
  out << "sensor.height_px = " << sensor.height << "\n";
  out << "duration_ms = " << duration / 1000.0 << "\n";
  out << "noise_rate_per_ms = " << noise_rate << "\n";
  for (const auto& t : tracks) {
    out << "\ntrack\n";
    out << "id = " << t.id << "\n";
    out << "length_px = " << t.length_px << "\n";
    out << "angle_deg = " << t.angle_deg << "\n";
    out << "rate_per_px_ms = " << t.rate << "\n";
    out << "jitter_px = " << t.jitter_px << "\n";
    out << "start_ms = " << t.start / 1000.0 << "\n";
    if (t.end >= 0) out << "end_ms = " << t.end / 1000.0 << "\n";
    out << "static_emits = " << (t.static_emits ? "true" : "false") << "\n";
    if (t.motion == MotionKind::Sine) {
      out << "sine = " << t.sine_center.x << " " << t.sine_center.y << " " << t.sine_amplitude_px
          << " " << t.sine_period_ms << " " << t.sine_axis_deg << "\n";
    } else {
      for (const auto& w : t.waypoints) {
        out << "waypoint = " << w.t / 1000.0 << " " << w.center.x << " " << w.center.y << "\n";
      }
    }
  }
}

TrackState track_state(const TrackSpec& track, TimeUs t, TimeUs duration) {
  TrackState s;
  const TimeUs end = track.end >= 0 ? track.end : duration;
  s.exists = t >= track.start && t < end;
  s.angle_deg = normalize_angle(track.angle_deg);
  s.length = track.length_px;
  if (track.motion == MotionKind::Sine) {
    const double phase = 2.0 * std::numbers::pi * (static_cast<double>(t) / 1000.0) / track.sine_period_ms;
    const Vec2 axis{std::cos(track.sine_axis_deg * kDegToRad), std::sin(track.sine_axis_deg * kDegToRad)};
    s.center = track.sine_center + axis * (track.sine_amplitude_px * std::sin(phase));
    s.velocity = axis * (track.sine_amplitude_px * 2.0 * std::numbers::pi / track.sine_period_ms *
                         std::cos(phase));
  } else if (!track.waypoints.empty()) {
    const auto& w = track.waypoints;
    if (t <= w.front().t) {
      s.center = w.front().center;
    } else if (t >= w.back().t) {
      s.center = w.back().center;
    } else {
      const auto it = std::upper_bound(w.begin(), w.end(), t,
                                       [](TimeUs v, const Waypoint& p) { return v < p.t; });
      const Waypoint& b = *it;
      const Waypoint& a = *(it - 1);
      const double span_ms = static_cast<double>(b.t - a.t) / 1000.0;
      const double f = static_cast<double>(t - a.t) / static_cast<double>(b.t - a.t);
      s.center = a.center + (b.center - a.center) * f;
      s.velocity = (b.center - a.center) * (1.0 / span_ms);
    }
  }
  const bool moving = s.velocity.norm() > 1e-12;
  s.emitting = s.exists && track.rate > 0 && (moving || track.static_emits);
  return s;
}

void GroundTruth::add_sample(int track, const TruthSample& s) { samples_[track].push_back(s); }

std::optional<TruthSample> GroundTruth::at(int track, TimeUs t) const {
  const auto it = samples_.find(track);
  if (it == samples_.end() || it->second.empty()) return std::nullopt;
  const auto& v = it->second;
  if (t < v.front().t || t > v.back().t) return std::nullopt;
  const auto hi = std::lower_bound(v.begin(), v.end(), t,
                                   [](const TruthSample& s, TimeUs x) { return s.t < x; });
  if (hi->t == t || hi == v.begin()) return *hi;
  const auto& a = *(hi - 1);
  const auto& b = *hi;
  const double f = static_cast<double>(t - a.t) / static_cast<double>(b.t - a.t);
  TruthSample s;
  s.t = t;
  s.midpoint = a.midpoint + (b.midpoint - a.midpoint) * f;
  s.angle_deg = a.angle_deg;
  s.length = a.length + (b.length - a.length) * f;
  return s;
}

std::vector<int> GroundTruth::track_ids() const {
  std::vector<int> ids;
  for (const auto& [id, v] : samples_) ids.push_back(id);
  return ids;
}

void GroundTruth::write(std::ostream& out) const {
  out << "# evline truth v1\n";
  out << "# geom,t_us,track,mid_x,mid_y,angle_deg,length_px\n";
  out << "# assoc,index,track\n";
  for (const auto& [id, v] : samples_) {
    for (const auto& s : v) {
      out << "geom," << s.t << ',' << id << ',' << fixed(s.midpoint.x) << ','
          << fixed(s.midpoint.y) << ',' << fixed(s.angle_deg) << ',' << fixed(s.length) << '\n';
    }
  }
  for (std::size_t i = 0; i < association.size(); ++i) {
    out << "assoc," << i << ',' << association[i] << '\n';
  }
}

GroundTruth GroundTruth::read(std::istream& in) {
  GroundTruth g;
  std::string line;
  std::size_t no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++no;
    line = trim(line);
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# evline truth v1", 0) == 0) header = true;
      continue;
    }
    const std::string where = "truth line " + std::to_string(no);
    if (!header) throw ParseError(where + ": missing header");
    const auto f = split_csv(line);
    try {
      if (f[0] == "geom" && f.size() == 7) {
        TruthSample s;
        s.t = std::stoll(f[1]);
        const int id = std::stoi(f[2]);
        s.midpoint = Vec2{std::stod(f[3]), std::stod(f[4])};
        s.angle_deg = std::stod(f[5]);
        s.length = std::stod(f[6]);
        auto& v = g.samples_[id];
        if (!v.empty() && s.t <= v.back().t) throw ParseError(where + ": samples out of order");
        v.push_back(s);
      } else if (f[0] == "assoc" && f.size() == 3) {
        const auto idx = std::stoull(f[1]);
        if (idx != g.association.size()) throw ParseError(where + ": association out of order");
        g.association.push_back(std::stoi(f[2]));
      } else {
        throw ParseError(where + ": unknown record");
      }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError(where + ": malformed number");
    }
  }
  return g;
}

GroundTruth GroundTruth::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return read(in);
}

SynthOutput generate(const SceneSpec& spec, std::uint64_t seed, TimeUs sample_interval) {
  spec.validate();
  if (sample_interval <= 0) throw Error("sample interval must be positive");
  SynthOutput out;
  out.stream.sensor = spec.sensor;

  struct Tagged {
    Event e;
    int track;
  };
  std::vector<Tagged> all;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);

  for (const auto& track : spec.tracks) {
    const TimeUs end = track.end >= 0 ? std::min(track.end, spec.duration) : spec.duration;
    for (TimeUs t = track.start; t < end; t += sample_interval) {
      const TrackState s = track_state(track, t, spec.duration);
      out.truth.add_sample(track.id, TruthSample{t, s.center, s.angle_deg, s.length});
    }
    const double per_ms = track.rate * track.length_px;
    if (!(per_ms > 0)) continue;
    std::exponential_distribution<double> gap(per_ms);
    std::normal_distribution<double> jitter(0.0, track.jitter_px > 0 ? track.jitter_px : 1.0);
    const Vec2 d{std::cos(track.angle_deg * kDegToRad), std::sin(track.angle_deg * kDegToRad)};
    const Vec2 n{-d.y, d.x};
    double t_ms = static_cast<double>(track.start) / 1000.0;
    for (;;) {
      t_ms += gap(rng);
      const TimeUs t = static_cast<TimeUs>(std::floor(t_ms * 1000.0));
      if (t >= end) break;
      const TrackState s = track_state(track, t, spec.duration);
      const double along = (unit(rng) - 0.5) * track.length_px;
      const double off = track.jitter_px > 0 ? jitter(rng) : 0.0;
      if (!s.emitting) continue;
      const Vec2 p = s.center + d * along + n * off;
      const long px = std::lround(p.x);
      const long py = std::lround(p.y);
      if (!spec.sensor.contains(static_cast<int>(px), static_cast<int>(py))) continue;
      const double v_perp = s.velocity.dot(n);
      Polarity pol;
      if (std::fabs(v_perp) > 1e-9 && off != 0.0) {
        pol = off * v_perp > 0 ? Polarity::On : Polarity::Off;
      } else {
        pol = coin(rng) ? Polarity::On : Polarity::Off;
      }
      all.push_back(Tagged{Event{t, static_cast<std::uint16_t>(px),
                                 static_cast<std::uint16_t>(py), pol},
                           track.id});
    }
  }

  if (spec.noise_rate > 0) {
    std::exponential_distribution<double> gap(spec.noise_rate);
    std::uniform_int_distribution<int> xs(0, spec.sensor.width - 1);
    std::uniform_int_distribution<int> ys(0, spec.sensor.height - 1);
    double t_ms = 0.0;
    for (;;) {
      t_ms += gap(rng);
      const TimeUs t = static_cast<TimeUs>(std::floor(t_ms * 1000.0));
      if (t >= spec.duration) break;
      const int x = xs(rng);
      const int y = ys(rng);
      const Polarity pol = coin(rng) ? Polarity::On : Polarity::Off;
      all.push_back(Tagged{Event{t, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), pol}, -1});
    }
  }

  std::stable_sort(all.begin(), all.end(),
                   [](const Tagged& a, const Tagged& b) { return a.e.t < b.e.t; });
  out.stream.events.reserve(all.size());
  out.truth.association.reserve(all.size());
  for (const auto& a : all) {
    out.stream.events.push_back(a.e);
    out.truth.association.push_back(a.track);
  }
  return out;
}

Metrics score(const std::vector<TrackSnapshot>& snapshots, const GroundTruth& truth,
              const MatchThresholds& th) {
  Metrics m;
  const std::vector<int> tracks = truth.track_ids();

  struct Seen {
    TimeUs first = 0;
    TimeUs last = 0;
    std::map<int, std::pair<int, int>> votes;  // track -> (good, overlap)
  };
  std::map<std::int64_t, Seen> seen;
  auto matches = [&](const SnapshotEntry& l, const TruthSample& s) {
    return (l.midpoint - s.midpoint).norm() < th.midpoint_px &&
           angle_diff_deg(l.angle_deg, s.angle_deg) < th.angle_deg;
  };

  for (const auto& snap : snapshots) {
    for (const auto& l : snap.lines) {
      if (l.label <= 0) continue;
      auto [it, fresh] = seen.try_emplace(l.label);
      if (fresh) it->second.first = snap.t;
      it->second.last = snap.t;
      for (int k : tracks) {
        const auto s = truth.at(k, snap.t);
        if (!s) continue;
        auto& v = it->second.votes[k];
        ++v.second;
        if (matches(l, *s)) ++v.first;
      }
    }
  }

  std::map<int, std::vector<std::int64_t>> assigned;
  double life_all = 0.0;
  double life_matched = 0.0;
  for (const auto& [id, s] : seen) {
    const double life = static_cast<double>(s.last - s.first) / 1e6;
    m.lifetimes_s[id] = life;
    life_all += life;
    int best = -1;
    double best_ratio = 0.0;
    int best_good = 0;
    for (const auto& [k, v] : s.votes) {
      if (v.second == 0) continue;
      const double ratio = static_cast<double>(v.first) / v.second;
      if (ratio > th.majority && (best < 0 || v.first > best_good ||
                                  (v.first == best_good && ratio > best_ratio))) {
        best = k;
        best_ratio = ratio;
        best_good = v.first;
      }
    }
    m.line_to_track[id] = best;
    if (best >= 0) {
      assigned[best].push_back(id);
      life_matched += life;
      ++m.matched_lines;
    } else {
      ++m.false_lines;
    }
  }
  m.lines = seen.size();
  if (m.lines) m.mean_lifetime_all_s = life_all / static_cast<double>(m.lines);
  if (m.matched_lines) m.mean_lifetime_s = life_matched / static_cast<double>(m.matched_lines);

  double mid_sq = 0.0;
  double dir_sq = 0.0;
  for (int k : tracks) {
    TrackScore ts;
    ts.track = k;
    ts.lines = assigned[k];
    std::int64_t rep = 0;
    for (const auto& snap : snapshots) {
      const auto s = truth.at(k, snap.t);
      if (!s) continue;
      const SnapshotEntry* current = nullptr;
      const SnapshotEntry* fallback = nullptr;
      for (const auto& l : snap.lines) {
        if (l.label <= 0 || m.line_to_track[l.label] != k) continue;
        if (l.label == rep) current = &l;
        if (!fallback || l.label < fallback->label) fallback = &l;
      }
      if (!current) current = fallback;
      if (!current) continue;
      if (rep != 0 && current->label != rep) ++ts.id_switches;
      rep = current->label;
      const double dm = (current->midpoint - s->midpoint).norm();
      const double da = angle_diff_deg(current->angle_deg, s->angle_deg);
      mid_sq += dm * dm;
      dir_sq += da * da;
      ++m.samples;
    }
    m.id_switches += ts.id_switches;
    m.tracks.push_back(ts);
  }
  if (m.samples) {
    m.midpoint_rms_px = std::sqrt(mid_sq / static_cast<double>(m.samples));
    m.direction_rms_deg = std::sqrt(dir_sq / static_cast<double>(m.samples));
  }
  return m;
}

void write_metrics_text(std::ostream& out, const Metrics& m, const MatchThresholds& th) {
  out << "# match: midpoint < " << th.midpoint_px << " px, angle < " << th.angle_deg
      << " deg, in > " << th.majority * 100 << "% of overlapping snapshots\n";
  out << std::fixed << std::setprecision(3);
  out << "mean_lifetime_s      " << m.mean_lifetime_s << "\n";
  out << "mean_lifetime_all_s  " << m.mean_lifetime_all_s << "\n";
  out << "lines                " << m.lines << "\n";
  out << "matched_lines        " << m.matched_lines << "\n";
  out << "false_lines          " << m.false_lines << "\n";
  out << "id_switches          " << m.id_switches << "\n";
  out << "midpoint_rms_px      " << m.midpoint_rms_px << "\n";
  out << "direction_rms_deg    " << m.direction_rms_deg << "\n";
  for (const auto& t : m.tracks) {
    out << "track " << t.track << ": lines";
    for (auto id : t.lines) out << ' ' << id;
    out << ", id_switches " << t.id_switches << "\n";
  }
  out.unsetf(std::ios::floatfield);
}

std::string metrics_json(const Metrics& m, const MatchThresholds& th) {
  nlohmann::json j;
  j["thresholds"] = {{"midpoint_px", th.midpoint_px},
                     {"angle_deg", th.angle_deg},
                     {"majority", th.majority}};
  j["mean_lifetime_s"] = m.mean_lifetime_s;
  j["mean_lifetime_all_s"] = m.mean_lifetime_all_s;
  j["lines"] = m.lines;
  j["matched_lines"] = m.matched_lines;
  j["false_lines"] = m.false_lines;
  j["id_switches"] = m.id_switches;
  j["midpoint_rms_px"] = m.midpoint_rms_px;
  j["direction_rms_deg"] = m.direction_rms_deg;
  j["samples"] = m.samples;
  auto& tracks = j["tracks"] = nlohmann::json::array();
  for (const auto& t : m.tracks) {
    tracks.push_back({{"track", t.track}, {"lines", t.lines}, {"id_switches", t.id_switches}});
  }
  auto& lines = j["line_lifetimes_s"] = nlohmann::json::object();
  for (const auto& [id, life] : m.lifetimes_s) lines[std::to_string(id)] = life;
  return j.dump(2);
}

}  // namespace evline
