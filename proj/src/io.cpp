#include "evline/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace evline {
namespace {

constexpr char kMagic[8] = {'E', 'V', 'L', 'I', 'N', 'E', '1', '\0'};

template <class T>
bool parse_number(std::string_view& s, T& out) {
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, out);
  if (r.ec != std::errc()) return false;
  s.remove_prefix(static_cast<std::size_t>(r.ptr - s.data()));
  return true;
}

bool expect(std::string_view& s, char c) {
  if (s.empty() || s.front() != c) return false;
  s.remove_prefix(1);
  return true;
}

std::string_view strip(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

template <class T>
void put_le(std::ostream& out, T v) {
  std::array<char, sizeof(T)> b;
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), b.size());
}

template <class T>
T get_le(const unsigned char* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, decimals);
  std::string s(buf, r.ptr);
  if (s == "-0.000") s = "0.000";
  return s;
}

}  // namespace

EventReader::EventReader(std::istream& in, bool binary, std::string source)
    : in_(in), binary_(binary), source_(std::move(source)) {
  if (binary_) {
    unsigned char header[16];
    if (!in_.read(reinterpret_cast<char*>(header), sizeof header) ||
        std::memcmp(header, kMagic, sizeof kMagic) != 0) {
      fail("missing binary event header");
    }
    sensor_ = SensorSize{static_cast<int>(get_le<std::uint32_t>(header + 8)),
                         static_cast<int>(get_le<std::uint32_t>(header + 12))};
  } else {
    if (!std::getline(in_, buf_)) fail("missing header");
    ++line_no_;
    std::istringstream hs{std::string(strip(buf_))};
    std::string hash, magic, version, w, h;
    hs >> hash >> magic >> version >> w >> h;
    if (hash != "#" || magic != "evline" || version != "v1" || w.rfind("width=", 0) != 0 ||
        h.rfind("height=", 0) != 0) {
      fail("malformed header, expected '# evline v1 width=<W> height=<H>'");
    }
    try {
      sensor_ = SensorSize{std::stoi(w.substr(6)), std::stoi(h.substr(7))};
    } catch (const std::exception&) {
      fail("malformed sensor size in header");
    }
  }
  if (sensor_.width <= 0 || sensor_.height <= 0 || sensor_.width > 65536 ||
      sensor_.height > 65536) {
    fail("invalid sensor size");
  }
}

void EventReader::fail(const std::string& what) const {
  std::ostringstream os;
  os << source_;
  if (!binary_) os << ":" << line_no_;
  else os << ": record " << records_;
  os << ": " << what;
  throw ParseError(os.str());
}

std::optional<Event> EventReader::read_record() {
  if (binary_) {
    unsigned char rec[13];
    if (!in_.read(reinterpret_cast<char*>(rec), sizeof rec)) {
      if (in_.gcount() != 0) fail("truncated record");
      return std::nullopt;
    }
    ++records_;
    Event e;
    const auto t = get_le<std::uint64_t>(rec);
    e.t = static_cast<TimeUs>(t);
    e.x = get_le<std::uint16_t>(rec + 8);
    e.y = get_le<std::uint16_t>(rec + 10);
    if (rec[12] > 1) fail("polarity must be 0 or 1");
    e.polarity = static_cast<Polarity>(rec[12]);
    if (e.t < 0) fail("negative timestamp");
    if (!sensor_.contains(e)) fail("pixel outside sensor");
    return e;
  }
  while (std::getline(in_, buf_)) {
    ++line_no_;
    std::string_view s = strip(buf_);
    if (s.empty() || s.front() == '#') continue;
    ++records_;
    long long t = 0;
    int x = 0, y = 0, p = 0;
    if (!parse_number(s, t) || !expect(s, ',') || !parse_number(s, x) || !expect(s, ',') ||
        !parse_number(s, y) || !expect(s, ',') || !parse_number(s, p) || !s.empty()) {
      fail("malformed record, expected t_us,x,y,p");
    }
    if (t < 0) fail("negative timestamp");
    if (p != 0 && p != 1) fail("polarity must be 0 or 1");
    if (!sensor_.contains(x, y)) {
      fail("pixel (" + std::to_string(x) + "," + std::to_string(y) + ") outside " +
           std::to_string(sensor_.width) + "x" + std::to_string(sensor_.height) + " sensor");
    }
    return Event{static_cast<TimeUs>(t), static_cast<std::uint16_t>(x),
                 static_cast<std::uint16_t>(y), static_cast<Polarity>(p)};
  }
  return std::nullopt;
}

std::optional<Event> EventReader::next() {
  for (;;) {
    // Anything more than the tolerance behind the newest timestamp can no
    // longer be preceded by a future record.
    if (!pending_.empty() && (eof_ || pending_.front().t < max_t_ - kDisorderToleranceUs)) {
      Event e = pending_.front();
      pending_.pop_front();
      return e;
    }
    if (eof_) return std::nullopt;
    const auto rec = read_record();
    if (!rec) {
      eof_ = true;
      continue;
    }
    const Event e = *rec;
    if (max_t_ != kNeverFired && e.t < max_t_) {
      if (e.t < max_t_ - kDisorderToleranceUs) {
        fail("timestamp " + std::to_string(e.t) + " is more than 1 ms behind " +
             std::to_string(max_t_));
      }
      ++reordered_;
      const auto pos = std::upper_bound(pending_.begin(), pending_.end(), e.t,
                                        [](TimeUs t, const Event& ev) { return t < ev.t; });
      pending_.insert(pos, e);
    } else {
      max_t_ = e.t;
      pending_.push_back(e);
    }
  }
}

void write_event_header(std::ostream& out, SensorSize sensor) {
  out << "# evline v1 width=" << sensor.width << " height=" << sensor.height << '\n';
}

void write_event_record(std::ostream& out, const Event& e) {
  char buf[48];
  const int n = std::snprintf(buf, sizeof buf, "%lld,%u,%u,%c\n", static_cast<long long>(e.t),
                              static_cast<unsigned>(e.x), static_cast<unsigned>(e.y),
                              e.polarity == Polarity::On ? '1' : '0');
  out.write(buf, n);
}

void write_events(std::ostream& out, SensorSize sensor, const std::vector<Event>& events) {
  write_event_header(out, sensor);
  for (const auto& e : events) write_event_record(out, e);
}

void write_events_binary(std::ostream& out, SensorSize sensor, const std::vector<Event>& events) {
  out.write(kMagic, sizeof kMagic);
  put_le(out, static_cast<std::uint32_t>(sensor.width));
  put_le(out, static_cast<std::uint32_t>(sensor.height));
  for (const auto& e : events) {
    put_le(out, static_cast<std::uint64_t>(e.t));
    put_le(out, e.x);
    put_le(out, e.y);
    put_le(out, static_cast<std::uint8_t>(e.polarity));
  }
}

EventStream read_events(std::istream& in, bool binary) {
  EventReader reader(in, binary);
  EventStream s;
  s.sensor = reader.sensor();
  while (auto e = reader.next()) s.events.push_back(*e);
  return s;
}

EventStream load_events(const std::string& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw ParseError("cannot open " + path);
  EventReader reader(in, binary, path);
  EventStream s;
  s.sensor = reader.sensor();
  while (auto e = reader.next()) s.events.push_back(*e);
  return s;
}

void save_events(const std::string& path, const EventStream& stream, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error("cannot write " + path);
  if (binary) write_events_binary(out, stream.sensor, stream.events);
  else write_events(out, stream.sensor, stream.events);
  if (!out) throw Error("write failed: " + path);
}

LineState parse_state(const std::string& s) {
  if (s == "INIT") return LineState::Initializing;
  if (s == "ACTIVE") return LineState::Active;
  if (s == "HIBER") return LineState::Hibernated;
  throw ParseError("unknown line state '" + s + "'");
}

void write_track_header(std::ostream& out) {
  out << "# evline tracks v1\n";
  out << "# t_us,line_id,state,mid_x,mid_y,angle_deg,length_px,n_events\n";
}

void write_snapshot(std::ostream& out, const TrackSnapshot& snap) {
  out << "# snapshot t_us=" << snap.t << " lines=" << snap.lines.size()
      << " clusters=" << snap.clusters << '\n';
  for (const auto& l : snap.lines) {
    out << snap.t << ',' << l.label << ',' << to_string(l.state) << ','
        << format_fixed(l.midpoint.x, 3) << ',' << format_fixed(l.midpoint.y, 3) << ','
        << format_fixed(l.angle_deg, 3) << ',' << format_fixed(l.length, 3) << ','
        << l.n_events << '\n';
  }
}

std::vector<TrackSnapshot> read_tracks(std::istream& in) {
  std::vector<TrackSnapshot> out;
  std::string line;
  std::uint64_t no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++no;
    const std::string_view s = strip(line);
    if (s.empty()) continue;
    if (s.front() == '#') {
      if (s.rfind("# evline tracks v1", 0) == 0) header = true;
      constexpr std::string_view kMark = "# snapshot t_us=";
      if (header && s.rfind(kMark, 0) == 0) {
        std::istringstream ms{std::string(s.substr(kMark.size()))};
        TimeUs t = 0;
        std::string rest;
        std::size_t clusters = 0;
        if (!(ms >> t)) throw ParseError("track file line " + std::to_string(no) + ": bad marker");
        while (ms >> rest) {
          if (rest.rfind("clusters=", 0) == 0) clusters = std::stoull(rest.substr(9));
        }
        if (!out.empty() && t < out.back().t) {
          throw ParseError("track file line " + std::to_string(no) + ": time goes backwards");
        }
        if (out.empty() || out.back().t != t) out.push_back(TrackSnapshot{t, {}, clusters});
      }
      continue;
    }
    if (!header) throw ParseError("track file line " + std::to_string(no) + ": missing header");
    std::vector<std::string> f;
    std::string cur;
    for (char c : s) {
      if (c == ',') {
        f.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    f.push_back(cur);
    if (f.size() != 8) {
      throw ParseError("track file line " + std::to_string(no) + ": expected 8 fields");
    }
    try {
      const TimeUs t = std::stoll(f[0]);
      if (out.empty() || out.back().t != t) {
        if (!out.empty() && t < out.back().t) {
          throw ParseError("track file line " + std::to_string(no) + ": time goes backwards");
        }
        out.push_back(TrackSnapshot{t, {}, 0});
      }
      SnapshotEntry e;
      e.label = std::stoll(f[1]);
      e.state = parse_state(f[2]);
      e.midpoint = Vec2{std::stod(f[3]), std::stod(f[4])};
      e.angle_deg = std::stod(f[5]);
      e.length = std::stod(f[6]);
      e.n_events = static_cast<std::size_t>(std::stoull(f[7]));
      out.back().lines.push_back(e);
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError("track file line " + std::to_string(no) + ": malformed number");
    }
  }
  return out;
}

std::vector<TrackSnapshot> load_tracks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return read_tracks(in);
}

}  // namespace evline
