#include "evline/config.hpp"

#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string_view>
#include <vector>

namespace evline {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& v) {
  std::size_t pos = 0;
  const double d = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument(v);
  return d;
}

long long parse_int(const std::string& v) {
  std::size_t pos = 0;
  const long long i = std::stoll(v, &pos);
  if (pos != v.size()) throw std::invalid_argument(v);
  return i;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument(v);
}

std::string fmt_double(double d) {
  std::ostringstream os;
  os << std::setprecision(12) << d;
  return os.str();
}

std::string fmt_ms(TimeUs us) { return fmt_double(static_cast<double>(us) / 1000.0); }

template <class E>
struct EnumName {
  E value;
  const char* name;
};

template <class E, std::size_t N>
E parse_enum(const std::string& v, const EnumName<E> (&names)[N]) {
  for (const auto& n : names) {
    if (v == n.name) return n.value;
  }
  throw std::invalid_argument(v);
}

template <class E, std::size_t N>
std::string enum_name(E e, const EnumName<E> (&names)[N]) {
  for (const auto& n : names) {
    if (e == n.value) return n.name;
  }
  return "?";
}

constexpr EnumName<PromotionMetric> kPromotionMetrics[] = {
    {PromotionMetric::StdDev, "stddev"}, {PromotionMetric::Eigenvalue, "eigenvalue"}};
constexpr EnumName<LengthScaling> kLengthScalings[] = {
    {LengthScaling::Variance, "variance"}, {LengthScaling::StdDev, "stddev"}};
constexpr EnumName<WakeRule> kWakeRules[] = {{WakeRule::Density, "density"},
                                             {WakeRule::AnyEvent, "any_event"}};
constexpr EnumName<CenterDistanceRule> kCenterRules[] = {
    {CenterDistanceRule::FullLength, "full_length"},
    {CenterDistanceRule::HalfLength, "half_length"}};
constexpr EnumName<PolarityMode> kPolarityModes[] = {{PolarityMode::Merged, "merged"},
                                                     {PolarityMode::Split, "split"}};
constexpr EnumName<PromotionPath> kPromotionPaths[] = {
    {PromotionPath::Ingest, "ingest"}, {PromotionPath::Maintenance, "maintenance"}};

struct Field {
  const char* key;
  std::function<void(TrackerConfig&, const std::string&)> set;
  std::function<std::string(const TrackerConfig&)> get;
};

#define EVLINE_DOUBLE(KEY, MEMBER)                                                  \
  Field {                                                                           \
    KEY, [](TrackerConfig& c, const std::string& v) { c.MEMBER = parse_double(v); }, \
        [](const TrackerConfig& c) { return fmt_double(c.MEMBER); }                 \
  }
#define EVLINE_INT(KEY, MEMBER)                                                     \
  Field {                                                                           \
    KEY,                                                                            \
        [](TrackerConfig& c, const std::string& v) {                                \
          c.MEMBER = static_cast<decltype(c.MEMBER)>(parse_int(v));                 \
        },                                                                          \
        [](const TrackerConfig& c) { return std::to_string(c.MEMBER); }             \
  }
#define EVLINE_MS(KEY, MEMBER)                                                      \
  Field {                                                                           \
    KEY, [](TrackerConfig& c, const std::string& v) { c.MEMBER = ms_to_us(parse_double(v)); }, \
        [](const TrackerConfig& c) { return fmt_ms(c.MEMBER); }                     \
  }
#define EVLINE_BOOL(KEY, MEMBER)                                                    \
  Field {                                                                           \
    KEY, [](TrackerConfig& c, const std::string& v) { c.MEMBER = parse_bool(v); },   \
        [](const TrackerConfig& c) { return std::string(c.MEMBER ? "true" : "false"); } \
  }
#define EVLINE_ENUM(KEY, MEMBER, TABLE)                                             \
  Field {                                                                           \
    KEY, [](TrackerConfig& c, const std::string& v) { c.MEMBER = parse_enum(v, TABLE); }, \
        [](const TrackerConfig& c) { return enum_name(c.MEMBER, TABLE); }           \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      EVLINE_INT("sensor.width_px", sensor.width),
      EVLINE_INT("sensor.height_px", sensor.height),
      Field{"time.pixels_per_ms",
            [](TrackerConfig& c, const std::string& v) { c.time_scale = TimeScale(parse_double(v)); },
            [](const TrackerConfig& c) { return fmt_double(c.time_scale.pixels_per_ms()); }},

      EVLINE_MS("filter.refractory_same_polarity_ms", filter.refractory_same_polarity),
      EVLINE_MS("filter.refractory_opposite_polarity_ms", filter.refractory_opposite_polarity),
      EVLINE_INT("filter.neighborhood_half_extent_px", filter.neighborhood_half_extent),
      EVLINE_MS("filter.neighborhood_age_ms", filter.neighborhood_age),
      EVLINE_INT("filter.neighborhood_min_support", filter.neighborhood_min_support),
      EVLINE_BOOL("filter.update_on_suppress", filter.update_on_suppress),

      EVLINE_INT("cluster.creation_number_events", cluster.creation_num_events),
      EVLINE_DOUBLE("cluster.addition_threshold_px", cluster.addition_threshold_px),
      EVLINE_DOUBLE("cluster.merge_angle_deg", cluster.merge_angle_deg),
      EVLINE_MS("cluster.cleanup_event_age_ms", cluster.cleanup_event_age),
      EVLINE_MS("cluster.deletion_no_events_ms", cluster.deletion_no_events),
      EVLINE_INT("cluster.promotion_number_events", cluster.promotion_num_events),
      EVLINE_MS("cluster.chain_seed_max_age_ms", cluster.chain_seed_max_age),
      EVLINE_INT("cluster.chain_max_length", cluster.chain_max_length),
      EVLINE_DOUBLE("cluster.min_midpoint_threshold_px", cluster.min_midpoint_threshold_px),

      EVLINE_DOUBLE("line.promotion_threshold_px", line.promotion_threshold_px),
      EVLINE_INT("line.promotion_number_events", line.promotion_num_events),
      EVLINE_DOUBLE("line.initialization_length_px", line.init_length_px),
      EVLINE_MS("line.initialization_period_ms", line.init_period),
      EVLINE_DOUBLE("line.addition_threshold_px", line.addition_threshold_px),
      EVLINE_DOUBLE("line.merge_angle_deg", line.merge_angle_deg),
      EVLINE_DOUBLE("line.merge_distance_px", line.merge_distance_px),
      EVLINE_DOUBLE("line.hibernation_density_per_px_ms", line.hibernation_density),
      EVLINE_MS("line.density_window_ms", line.density_window),
      EVLINE_MS("line.cleanup_event_age_ms", line.cleanup_event_age),
      EVLINE_MS("line.deletion_no_events_ms", line.deletion_no_events),
      EVLINE_MS("line.hibernation_timeout_ms", line.hibernation_timeout),
      EVLINE_DOUBLE("line.min_active_length_px", line.min_active_length_px),
      EVLINE_DOUBLE("line.hibernation_hysteresis", line.hibernation_hysteresis),
      EVLINE_ENUM("line.promotion_metric", line.promotion_metric, kPromotionMetrics),
      EVLINE_ENUM("line.length_scaling", line.length_scaling, kLengthScalings),
      EVLINE_ENUM("line.wake_rule", line.wake_rule, kWakeRules),
      EVLINE_ENUM("line.center_distance_rule", line.center_distance_rule, kCenterRules),

      EVLINE_MS("engine.maintenance_interval_ms", maintenance_interval),
      EVLINE_BOOL("engine.hibernation_enabled", hibernation_enabled),
      EVLINE_ENUM("engine.polarity_mode", polarity_mode, kPolarityModes),
      EVLINE_ENUM("engine.promotion_path", promotion_path, kPromotionPaths),
      EVLINE_BOOL("engine.instrument", instrument),
      EVLINE_INT("engine.queue_capacity", queue_capacity),
  };
  return table;
}

#undef EVLINE_DOUBLE
#undef EVLINE_INT
#undef EVLINE_MS
#undef EVLINE_BOOL
#undef EVLINE_ENUM

void require(bool ok, const char* what) {
  if (!ok) throw Error(std::string("invalid config: ") + what);
}

}  // namespace

void FilterConfig::validate() const {
  require(refractory_same_polarity > 0, "filter.refractory_same_polarity_ms must be positive");
  require(refractory_opposite_polarity > 0,
          "filter.refractory_opposite_polarity_ms must be positive");
  require(neighborhood_half_extent >= 1, "filter.neighborhood_half_extent_px must be >= 1");
  require(neighborhood_age > 0, "filter.neighborhood_age_ms must be positive");
  require(neighborhood_min_support >= 1, "filter.neighborhood_min_support must be >= 1");
}

void ClusterConfig::validate() const {
  require(creation_num_events >= 2, "cluster.creation_number_events must be >= 2");
  require(addition_threshold_px > 0, "cluster.addition_threshold_px must be positive");
  require(merge_angle_deg > 0, "cluster.merge_angle_deg must be positive");
  require(cleanup_event_age > 0, "cluster.cleanup_event_age_ms must be positive");
  require(deletion_no_events > 0, "cluster.deletion_no_events_ms must be positive");
  require(promotion_num_events >= 3, "cluster.promotion_number_events must be >= 3");
  require(chain_seed_max_age > 0, "cluster.chain_seed_max_age_ms must be positive");
  require(chain_max_length >= 2, "cluster.chain_max_length must be >= 2");
  require(min_midpoint_threshold_px > 0, "cluster.min_midpoint_threshold_px must be positive");
}

void LineConfig::validate() const {
  require(promotion_threshold_px > 0, "line.promotion_threshold_px must be positive");
  require(promotion_num_events >= 3, "line.promotion_number_events must be >= 3");
  require(init_length_px > 0, "line.initialization_length_px must be positive");
  require(init_period > 0, "line.initialization_period_ms must be positive");
  require(addition_threshold_px > 0, "line.addition_threshold_px must be positive");
  require(merge_angle_deg > 0 && merge_angle_deg < 90, "line.merge_angle_deg must be in (0, 90)");
  require(merge_distance_px > 0, "line.merge_distance_px must be positive");
  require(hibernation_density > 0, "line.hibernation_density_per_px_ms must be positive");
  require(density_window > 0, "line.density_window_ms must be positive");
  require(cleanup_event_age > 0, "line.cleanup_event_age_ms must be positive");
  require(deletion_no_events > 0, "line.deletion_no_events_ms must be positive");
  require(hibernation_timeout > 0, "line.hibernation_timeout_ms must be positive");
  require(min_active_length_px > 0, "line.min_active_length_px must be positive");
  require(hibernation_hysteresis >= 1.0, "line.hibernation_hysteresis must be >= 1");
}

void TrackerConfig::validate() const {
  require(sensor.width > 0 && sensor.height > 0, "sensor size must be positive");
  require(sensor.width <= 65535 && sensor.height <= 65535, "sensor size exceeds 16 bits");
  filter.validate();
  cluster.validate();
  line.validate();
  require(maintenance_interval > 0, "engine.maintenance_interval_ms must be positive");
  require(maintenance_interval <= ms_to_us(40),
          "engine.maintenance_interval_ms must not exceed 40 ms");
  require(queue_capacity > 0, "engine.queue_capacity must be positive");
}

TrackerConfig TrackerConfig::parse(std::istream& in) {
  TrackerConfig cfg;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool known = false;
    for (const auto& f : fields()) {
      if (key != f.key) continue;
      known = true;
      try {
        f.set(cfg, value);
      } catch (const Error&) {
        throw;
      } catch (const std::exception&) {
        throw Error("config line " + std::to_string(line_no) + ": bad value '" + value +
                    "' for " + key);
      }
    }
    if (!known) {
      throw Error("config line " + std::to_string(line_no) + ": unknown key " + key);
    }
  }
  cfg.validate();
  return cfg;
}

TrackerConfig TrackerConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  return parse(in);
}

void TrackerConfig::dump(std::ostream& out) const {
  for (const auto& f : fields()) {
    out << f.key << " = " << f.get(*this) << '\n';
  }
}

std::string TrackerConfig::to_string() const {
  std::ostringstream os;
  dump(os);
  return os.str();
}

}  // namespace evline
