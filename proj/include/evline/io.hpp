#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <fstream>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "evline/event.hpp"
#include "evline/tracker.hpp"

namespace evline {

class ParseError : public Error {
 public:
  using Error::Error;
};

// Text event stream:
//   # evline v1 width=<W> height=<H>
//   t_us,x,y,p
// Records may arrive out of order by less than kDisorderToleranceUs; they are
// released in stable timestamp order. Larger disorder is a ParseError.
constexpr TimeUs kDisorderToleranceUs = 1000;

class EventReader {
 public:
  // `binary` selects the raw format (see write_events_binary).
  explicit EventReader(std::istream& in, bool binary = false, std::string source = "<stream>");

  const SensorSize& sensor() const { return sensor_; }
  std::optional<Event> next();
  std::uint64_t reordered() const { return reordered_; }
  std::uint64_t records() const { return records_; }

 private:
  std::optional<Event> read_record();
  [[noreturn]] void fail(const std::string& what) const;

  std::istream& in_;
  bool binary_;
  std::string source_;
  SensorSize sensor_;
  std::uint64_t line_no_ = 0;
  std::uint64_t records_ = 0;
  std::uint64_t reordered_ = 0;
  TimeUs max_t_ = kNeverFired;
  std::deque<Event> pending_;
  bool eof_ = false;
  std::string buf_;
};

void write_event_header(std::ostream& out, SensorSize sensor);
void write_event_record(std::ostream& out, const Event& e);
void write_events(std::ostream& out, SensorSize sensor, const std::vector<Event>& events);

// Raw little-endian stream: 8-byte magic "EVLINE1\0", u32 width, u32 height,
// then 13-byte records (u64 t, u16 x, u16 y, u8 p).
void write_events_binary(std::ostream& out, SensorSize sensor, const std::vector<Event>& events);

struct EventStream {
  SensorSize sensor;
  std::vector<Event> events;
};

EventStream read_events(std::istream& in, bool binary = false);
EventStream load_events(const std::string& path, bool binary = false);
void save_events(const std::string& path, const EventStream& stream, bool binary = false);

// Track file:
//   # evline tracks v1
//   t_us,line_id,state,mid_x,mid_y,angle_deg,length_px,n_events
void write_track_header(std::ostream& out);
void write_snapshot(std::ostream& out, const TrackSnapshot& snap);
std::vector<TrackSnapshot> read_tracks(std::istream& in);
std::vector<TrackSnapshot> load_tracks(const std::string& path);

LineState parse_state(const std::string& s);

// Bounded single-producer / single-consumer hand-off. push blocks while full;
// pop blocks while empty and returns nullopt once closed and drained.
template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity ? capacity : 1) {}

  void push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

}  // namespace evline
