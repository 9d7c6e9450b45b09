#include "evline/clustering.hpp"

#include <algorithm>
#include <numeric>

namespace evline {
namespace {

// The eight unit steps in counter-clockwise ring order (image coordinates).
constexpr std::array<Offset, 8> kRing = {{{1, 0},
                                          {1, 1},
                                          {0, 1},
                                          {-1, 1},
                                          {-1, 0},
                                          {-1, -1},
                                          {0, -1},
                                          {1, -1}}};

int ring_index(Offset step) {
  for (int i = 0; i < 8; ++i) {
    if (kRing[i] == step) return i;
  }
  return -1;
}

Offset ring_at(int i) { return kRing[static_cast<std::size_t>(((i % 8) + 8) % 8)]; }

bool in_chain(const Chain& chain, int x, int y) {
  return std::any_of(chain.begin(), chain.end(),
                     [&](const ChainElement& c) { return c.x == x && c.y == y; });
}

struct Pick {
  bool found = false;
  ChainElement element;
};

// Youngest admissible cell among `offsets` around (cx, cy).
template <class Offsets>
Pick youngest(const Offsets& offsets, int cx, int cy, TimeUs min_t,
              const SurfaceOfActiveEvents& sae, const Chain& chain) {
  Pick best;
  for (const Offset& o : offsets) {
    const int x = cx + o.dx;
    const int y = cy + o.dy;
    if (!sae.size().contains(x, y) || in_chain(chain, x, y)) continue;
    const TimeUs t = sae.at(x, y);
    if (t == kNeverFired || t < min_t) continue;
    const bool better = !best.found || t > best.element.t ||
                        (t == best.element.t &&
                         (y < best.element.y || (y == best.element.y && x < best.element.x)));
    if (better) best = Pick{true, ChainElement{x, y, t}};
  }
  return best;
}

}  // namespace

ChainSearchPattern chain_search_pattern(Offset last_step) {
  const int i = ring_index(last_step);
  if (i < 0) throw Error("chain step must be a unit 8-neighbourhood offset");
  return ChainSearchPattern{{ring_at(i - 1), ring_at(i), ring_at(i + 1)},
                            {ring_at(i - 2), ring_at(i + 2)}};
}

Chain grow_chain(const Event& seed, const SurfaceOfActiveEvents& sae, const ClusterConfig& cfg) {
  Chain chain;
  chain.reserve(static_cast<std::size_t>(cfg.chain_max_length));
  chain.push_back(ChainElement{seed.x, seed.y, seed.t});
  const TimeUs min_t = seed.t - cfg.chain_seed_max_age;
  if (cfg.chain_max_length < 2) return chain;

  Pick next = youngest(kRing, seed.x, seed.y, min_t, sae, chain);
  while (next.found) {
    chain.push_back(next.element);
    if (static_cast<int>(chain.size()) >= cfg.chain_max_length) break;
    const ChainElement& cur = chain[chain.size() - 1];
    const ChainElement& prev = chain[chain.size() - 2];
    const ChainSearchPattern pattern = chain_search_pattern(Offset{cur.x - prev.x, cur.y - prev.y});
    next = youngest(pattern.primary, cur.x, cur.y, min_t, sae, chain);
    if (!next.found) next = youngest(pattern.extended, cur.x, cur.y, min_t, sae, chain);
  }
  return chain;
}

InferredLine infer_line_xy(const EventAccumulator& acc) {
  InferredLine line;
  line.centroid = Vec2{acc.mean().x, acc.mean().y};
  const auto [sxx, sxy, syy] = acc.covariance_xy();
  const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  line.direction = Vec2{std::cos(theta), std::sin(theta)};
  const double half_diff = 0.5 * (sxx - syy);
  const double major = 0.5 * (sxx + syy) + std::sqrt(half_diff * half_diff + sxy * sxy);
  line.length = std::sqrt(12.0 * std::max(0.0, major));
  return line;
}

std::unique_ptr<Cluster> try_create_cluster(const Chain& chain, Polarity polarity,
                                            const ClusterConfig& cfg, TimeScale scale,
                                            std::uint64_t seq) {
  if (static_cast<int>(chain.size()) < cfg.creation_num_events) return nullptr;
  TimeUs newest = chain.front().t;
  for (const auto& el : chain) newest = std::max(newest, el.t);
  auto cluster = std::make_unique<Cluster>(seq, scale, newest);
  for (const auto& el : chain) {
    cluster->events().add(Event{el.t, static_cast<std::uint16_t>(el.x),
                                static_cast<std::uint16_t>(el.y), polarity});
  }
  cluster->refresh_line();
  return cluster;
}

std::optional<double> cluster_accepts(const Cluster& c, const Event& e, const ClusterConfig& cfg) {
  const InferredLine& line = c.line();
  const Vec2 r = Vec2{static_cast<double>(e.x), static_cast<double>(e.y)} - line.centroid;
  const double perp = std::abs(line.direction.cross(r));
  if (perp > cfg.addition_threshold_px) return std::nullopt;
  if (r.norm() > c.midpoint_threshold(cfg.min_midpoint_threshold_px)) return std::nullopt;
  return perp;
}

ClusterAddResult ClusterSet::try_add(const Event& e) {
  const auto& items = registry_.refresh(view_);
  candidates_.clear();
  for (const auto& c : items) {
    std::lock_guard lock(c->mutex());
    if (!c->alive()) continue;
    if (const auto perp = cluster_accepts(*c, e, cfg_)) {
      candidates_.push_back(Candidate{c, *perp, c->line().direction});
    }
  }
  if (candidates_.empty()) return {};

  ClusterAddResult result;
  if (candidates_.size() > 1) {
    std::sort(candidates_.begin(), candidates_.end(),
              [](const Candidate& a, const Candidate& b) {
                return a.cluster->seq() < b.cluster->seq();
              });
    // Union-find over candidate pairs closer than the merge angle; each
    // group collapses into its oldest member.
    std::vector<std::size_t> parent(candidates_.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t i) {
      while (parent[i] != i) i = parent[i] = parent[parent[i]];
      return i;
    };
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
      for (std::size_t j = i + 1; j < candidates_.size(); ++j) {
        if (angle_between_deg(candidates_[i].direction, candidates_[j].direction) <
            cfg_.merge_angle_deg) {
          const auto ri = find(i);
          const auto rj = find(j);
          if (ri != rj) parent[std::max(ri, rj)] = std::min(ri, rj);
        }
      }
    }
    std::vector<bool> gone(candidates_.size(), false);
    for (std::size_t j = 0; j < candidates_.size(); ++j) {
      const std::size_t root = find(j);
      if (root == j) continue;
      Cluster& survivor = *candidates_[root].cluster;
      Cluster& absorbed = *candidates_[j].cluster;
      bool merged = false;
      {
        std::scoped_lock lock(survivor.mutex(), absorbed.mutex());
        if (survivor.alive() && absorbed.alive()) {
          survivor.events().merge_from(absorbed.events());
          survivor.refresh_line();
          absorbed.kill();
          merged = true;
        }
      }
      if (merged) {
        registry_.erase(&absorbed);
        gone[j] = true;
        ++result.merged_away;
      }
    }
    std::size_t keep = 0;
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
      if (!gone[i]) candidates_[keep++] = std::move(candidates_[i]);
    }
    candidates_.resize(keep);
  }

  const auto nearest = std::min_element(
      candidates_.begin(), candidates_.end(),
      [](const Candidate& a, const Candidate& b) { return a.perp < b.perp; });
  {
    std::lock_guard lock(nearest->cluster->mutex());
    if (!nearest->cluster->alive()) return {};
    nearest->cluster->events().add(e);
  }
  result.kind = result.merged_away > 0 ? ClusterAddKind::Merged : ClusterAddKind::Added;
  result.cluster = nearest->cluster;
  return result;
}

std::shared_ptr<Cluster> ClusterSet::create_from_chain(const Chain& chain, Polarity polarity) {
  auto created = try_create_cluster(chain, polarity, cfg_, scale_, next_seq_);
  if (!created) return nullptr;
  ++next_seq_;
  std::shared_ptr<Cluster> cluster = std::move(created);
  registry_.insert(cluster);
  return cluster;
}

ClusterMaintenanceReport ClusterSet::maintenance(TimeUs t_now) {
  ClusterMaintenanceReport report;
  for (const auto& c : registry_.snapshot()) {
    bool remove = false;
    {
      std::lock_guard lock(c->mutex());
      if (!c->alive()) continue;
      report.events_removed += c->events().remove_older_than(t_now - cfg_.cleanup_event_age);
      const bool starved = c->events().empty() ||
                           t_now - c->events().newest() > cfg_.deletion_no_events;
      if (starved || c->events().size() < 3) {
        c->kill();
        remove = true;
      } else {
        c->events().rebuild_if_due();
        c->refresh_line();
      }
    }
    if (remove) {
      registry_.erase(c.get());
      ++report.clusters_deleted;
    }
  }
  return report;
}

}  // namespace evline
