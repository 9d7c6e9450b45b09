#include "evline/line.hpp"

#include <algorithm>
#include <limits>

namespace evline {

std::string_view to_string(LineState s) {
  switch (s) {
    case LineState::Initializing: return "INIT";
    case LineState::Active: return "ACTIVE";
    case LineState::Hibernated: return "HIBER";
    case LineState::Deleted: return "DELETED";
  }
  return "?";
}

bool is_valid_transition(LineState from, LineState to) {
  switch (from) {
    case LineState::Initializing:
      return to == LineState::Active || to == LineState::Deleted;
    case LineState::Active:
      return to == LineState::Hibernated || to == LineState::Deleted;
    case LineState::Hibernated:
      return to == LineState::Active || to == LineState::Deleted;
    case LineState::Deleted:
      return false;
  }
  return false;
}

Line::Line(std::uint64_t seq, TimeScale scale, TimeUs created)
    : seq_(seq), state_since_(created), created_(created), events_(scale) {}

LineGeometry Line::geometry_at(TimeUs t) const {
  LineGeometry g;
  g.direction = direction_;
  g.length = length_;
  if (mode_ == MidpointMode::Orthogonal) {
    g.midpoint = frozen_midpoint_;
  } else {
    const double dt = events_.time_scale().scaled(t) - fit_.centroid.z;
    g.midpoint = Vec2{fit_.centroid.x, fit_.centroid.y} + velocity_ * dt;
  }
  return g;
}

bool Line::refit(const LineConfig& cfg) {
  events_.rebuild_if_due();
  if (events_.size() < 3) return false;
  try {
    PlaneFit fit = fit_plane(events_.accumulator());
    const Vec2 velocity = plane_velocity(fit.normal);
    const Vec2 direction = line_direction(fit.normal);
    fit_ = fit;
    velocity_ = velocity;
    direction_ = direction;
    length_ = line_length(fit_, direction_, cfg.length_scaling);
  } catch (const Error&) {
    return false;
  }
  return true;
}

double Line::density(TimeUs t_now, const LineConfig& cfg) const {
  const double recent = static_cast<double>(events_.count_since(t_now - cfg.density_window));
  const double window_ms = static_cast<double>(cfg.density_window) / 1000.0;
  return recent / (std::max(length_, 1.0) * window_ms);
}

void Line::transition(LineState to, TimeUs t) {
  log_.push_back(TransitionRecord{seq_, id_, state_, to, t});
  state_ = to;
  state_since_ = t;
}

void Line::freeze() {
  mode_ = MidpointMode::Orthogonal;
  frozen_midpoint_ = Vec2{fit_.centroid.x, fit_.centroid.y};
}

std::optional<PlaneFit> try_promote(const EventSet& events, const LineConfig& cfg) {
  if (static_cast<int>(events.size()) < cfg.promotion_num_events) return std::nullopt;
  PlaneFit fit;
  try {
    fit = fit_plane(events.accumulator());
  } catch (const Error&) {
    return std::nullopt;
  }
  const double measure = cfg.promotion_metric == PromotionMetric::StdDev ? fit.smallest_stddev()
                                                                         : fit.eigenvalues[2];
  if (!(measure < cfg.promotion_threshold_px)) return std::nullopt;
  if (!(fit.normal.x * fit.normal.x + fit.normal.y * fit.normal.y > kPlaneEpsilon)) {
    return std::nullopt;
  }
  return fit;
}

bool line_accepts(const Line& line, const Event& e, const LineConfig& cfg) {
  const LineGeometry g = line.geometry_at(e.t);
  const PointLineDistances d = point_line_distances(g, e);
  const double reach =
      cfg.center_distance_rule == CenterDistanceRule::FullLength ? g.length : 0.5 * g.length;
  return d.a < cfg.addition_threshold_px && d.b < reach;
}

bool finish_initialization(Line& line, TimeUs t_now, const LineConfig& cfg, std::int64_t next_id) {
  const double connected =
      connected_length(line.events().events(), line.fit(), line.direction(),
                       line.events().time_scale().scaled(t_now), line.events().time_scale());
  if (connected >= cfg.init_length_px) {
    line.assign_id(next_id);
    line.transition(LineState::Active, t_now);
    return true;
  }
  line.transition(LineState::Deleted, t_now);
  return false;
}

std::optional<LineState> update_hibernation(Line& line, TimeUs t_now, const LineConfig& cfg) {
  const double density = line.density(t_now, cfg);
  if (line.state() == LineState::Active && density < cfg.hibernation_density) {
    line.freeze();
    line.transition(LineState::Hibernated, t_now);
    return LineState::Hibernated;
  }
  if (line.state() == LineState::Hibernated &&
      density >= cfg.hibernation_density * cfg.hibernation_hysteresis) {
    // Refit over everything retained while hibernated.
    if (!line.refit(cfg)) return std::nullopt;
    line.thaw();
    line.transition(LineState::Active, t_now);
    return LineState::Active;
  }
  return std::nullopt;
}


LineSet::LineSet(LineConfig cfg, TimeScale scale, bool hibernation_enabled)
    : cfg_(cfg), scale_(scale), hibernation_enabled_(hibernation_enabled) {}

void LineSet::record(const Line& line) {
  if (line.log().empty()) return;
  std::lock_guard lock(journal_mu_);
  journal_.push_back(line.log().back());
}

std::vector<TransitionRecord> LineSet::journal() const {
  std::lock_guard lock(journal_mu_);
  return journal_;
}

LineAddResult LineSet::try_add(const Event& e) {
  const auto& items = registry_.refresh(view_);
  qualifying_.clear();
  for (const auto& line : items) {
    std::lock_guard lock(line->mutex());
    if (!line->alive()) continue;
    if (line_accepts(*line, e, cfg_)) qualifying_.push_back(line);
  }
  LineAddResult result;
  if (qualifying_.empty()) return result;
  if (qualifying_.size() > 1) {
    result.kind = LineAddKind::Ambiguous;
    return result;
  }
  Line& line = *qualifying_.front();
  {
    std::lock_guard lock(line.mutex());
    if (!line.alive()) return result;
    line.events().add(e);
    if (line.state() == LineState::Hibernated && hibernation_enabled_) {
      bool wake = cfg_.wake_rule == WakeRule::AnyEvent;
      if (!wake) wake = line.density(e.t, cfg_) >= cfg_.hibernation_density * cfg_.hibernation_hysteresis;
      if (wake && line.refit(cfg_)) {
        line.thaw();
        line.transition(LineState::Active, e.t);
        record(line);
        result.woke = true;
      }
    }
    result.label = line.label();
  }
  result.kind = LineAddKind::Added;
  result.line = qualifying_.front();
  return result;
}

std::shared_ptr<Line> LineSet::create(const EventSet& events, TimeUs t_now) {
  auto line = std::make_shared<Line>(next_seq_.load(), scale_, t_now);
  line->events().merge_from(events);
  line->events().rebuild();
  if (!line->refit(cfg_)) return nullptr;
  next_seq_.fetch_add(1);
  registry_.insert(line);
  return line;
}

LineMaintenanceReport LineSet::maintenance(TimeUs t_now) {
  LineMaintenanceReport report;
  auto lines = registry_.snapshot();
  std::sort(lines.begin(), lines.end(),
            [](const auto& a, const auto& b) { return a->seq() < b->seq(); });

  for (const auto& ptr : lines) {
    Line& line = *ptr;
    bool removed = false;
    {
      std::lock_guard lock(line.mutex());
      if (!line.alive()) continue;
      auto kill = [&](std::size_t& counter) {
        line.transition(LineState::Deleted, t_now);
        record(line);
        ++counter;
        removed = true;
      };

      bool run_active = line.state() == LineState::Active;
      bool cleaned = false;
      bool woke = false;

      if (line.state() == LineState::Initializing) {
        report.events_removed += line.events().remove_older_than(t_now - cfg_.cleanup_event_age);
        cleaned = true;
        if (!line.refit(cfg_)) {
          kill(report.lines_discarded);
        } else if (t_now - line.created() >= cfg_.init_period) {
          if (finish_initialization(line, t_now, cfg_, next_id_.load())) {
            next_id_.fetch_add(1);
            record(line);
            ++report.lines_activated;
            run_active = true;
          } else {
            record(line);
            ++report.lines_discarded;
            removed = true;
          }
        }
      } else if (line.state() == LineState::Hibernated) {
        if (t_now - line.state_since() > cfg_.hibernation_timeout) {
          kill(report.lines_deleted);
        } else if (!hibernation_enabled_) {
          // Hibernation switched off after the fact: wake unconditionally.
          if (line.refit(cfg_)) {
            line.thaw();
            line.transition(LineState::Active, t_now);
            record(line);
            run_active = true;
          }
        } else if (update_hibernation(line, t_now, cfg_) == LineState::Active) {
          record(line);
          ++report.lines_woken;
          run_active = true;
          woke = true;
        }
      }

      if (run_active && !removed) {
        if (!cleaned) {
          report.events_removed +=
              line.events().remove_older_than(t_now - cfg_.cleanup_event_age);
        }
        if (line.events().size() < 3 || !line.refit(cfg_)) {
          kill(report.lines_deleted);
        } else if (line.length() < cfg_.min_active_length_px ||
                   t_now - line.events().newest() > cfg_.deletion_no_events) {
          kill(report.lines_deleted);
        } else if (hibernation_enabled_ && !woke &&  // no flip back in the same pass
                   update_hibernation(line, t_now, cfg_) == LineState::Hibernated) {
          record(line);
          ++report.lines_hibernated;
        }
      }
    }
    if (removed) registry_.erase(&line);
  }

  report.lines_merged = merge_pass(t_now);
  return report;
}

std::size_t LineSet::merge_pass(TimeUs t_now) {
  // Survivor order: assigned IDs ascending, then initializing lines by seq.
  // IDs are only written from this context, so the keys are read unlocked.
  auto key = [](const Line& l) {
    return l.id() > 0 ? std::pair<int, std::int64_t>{0, l.id()}
                      : std::pair<int, std::int64_t>{1, static_cast<std::int64_t>(l.seq())};
  };
  std::size_t merged = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    auto lines = registry_.snapshot();
    std::sort(lines.begin(), lines.end(),
              [&](const auto& a, const auto& b) { return key(*a) < key(*b); });
    for (std::size_t i = 0; i < lines.size(); ++i) {
      for (std::size_t j = i + 1; j < lines.size(); ++j) {
        Line& keep = *lines[i];
        Line& gone = *lines[j];
        bool absorbed = false;
        {
          std::scoped_lock lock(keep.mutex(), gone.mutex());
          if (!keep.alive() || !gone.alive()) continue;
          const LineGeometry gk = keep.geometry_at(t_now);
          const LineGeometry gg = gone.geometry_at(t_now);
          if (angle_between_deg(gk.direction, gg.direction) >= cfg_.merge_angle_deg) continue;
          if (point_line_distances(gk, gg.midpoint).a >= cfg_.merge_distance_px) continue;
          if (point_line_distances(gg, gk.midpoint).a >= cfg_.merge_distance_px) continue;
          keep.events().merge_from(gone.events());
          if (keep.state() != LineState::Hibernated) {
            keep.events().remove_older_than(t_now - cfg_.cleanup_event_age);
            keep.refit(cfg_);
          }
          gone.transition(LineState::Deleted, t_now);
          record(gone);
          absorbed = true;
        }
        if (absorbed) {
          registry_.erase(&gone);
          ++merged;
          changed = true;
        }
      }
    }
  }
  return merged;
}

}  // namespace evline
