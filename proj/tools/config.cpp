#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>

namespace stpn::tools {

Config Config::load(const std::filesystem::path& path) {
  Config c;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), c.tree_);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  c.base_ = path.parent_path();
  return c;
}

Config Config::from_string(const std::string& text, std::filesystem::path base) {
  Config c;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, c.tree_);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  c.base_ = std::move(base);
  return c;
}

std::string Config::env_name(const std::string& key) {
  std::string s = "STPN_";
  for (char ch : key) s += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return s;
}

std::optional<std::string> Config::raw(const std::string& key) const {
  if (const char* env = std::getenv(env_name(key).c_str())) return std::string(env);
  if (auto v = tree_.get_optional<std::string>(key)) return boost::trim_copy(*v);
  return std::nullopt;
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  return raw(key).value_or(fallback);
}

std::string Config::require(const std::string& key) const {
  if (auto v = raw(key); v && !v->empty()) return *v;
  throw ConfigError("missing config key '" + key + "' (or " + env_name(key) + ")");
}

double Config::get_double(const std::string& key, double fallback) const {
  auto v = raw(key);
  if (!v || v->empty()) return fallback;
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a number: '" + *v + "'");
  }
}

long long Config::get_int(const std::string& key, long long fallback) const {
  auto v = raw(key);
  if (!v || v->empty()) return fallback;
  try {
    std::size_t used = 0;
    const long long i = std::stoll(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing characters");
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an integer: '" + *v + "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto v = raw(key);
  if (!v || v->empty()) return fallback;
  const auto s = boost::to_lower_copy(*v);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: '" + *v + "'");
}

std::vector<std::string> Config::get_list(const std::string& key,
                                          const std::vector<std::string>& fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  std::vector<std::string> parts;
  boost::split(parts, *v, boost::is_any_of(","));
  std::vector<std::string> out;
  for (auto& p : parts) {
    boost::trim(p);
    if (!p.empty()) out.push_back(p);
  }
  return out;
}

std::filesystem::path Config::path(const std::string& key, const std::string& fallback) const {
  std::filesystem::path p = get(key, fallback);
  return (p.is_absolute() ? p : base_ / p).lexically_normal();
}

namespace {

int clock_minutes(const std::string& key, const std::string& text) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) throw std::invalid_argument("no colon");
    const int h = std::stoi(text.substr(0, colon)), m = std::stoi(text.substr(colon + 1));
    if (h < 0 || h > 24 || m < 0 || m > 59) throw std::invalid_argument("range");
    return h * 60 + m;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' must be HH:MM, got '" + text + "'");
  }
}

std::size_t positive(const Config& c, const std::string& key, long long fallback) {
  const auto v = c.get_int(key, fallback);
  if (v < 1) throw ConfigError("config key '" + key + "' must be >= 1");
  return static_cast<std::size_t>(v);
}

std::vector<std::size_t> size_list(const Config& c, const std::string& key,
                                   const std::vector<std::string>& fallback) {
  std::vector<std::size_t> out;
  for (const auto& s : c.get_list(key, fallback)) {
    try {
      const long long v = std::stoll(s);
      if (v < 1) throw std::invalid_argument("non-positive");
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' must list positive integers");
    }
  }
  return out;
}

}  // namespace

OperatingWindow operating_window(const Config& c) {
  OperatingWindow w;
  w.start_minute = clock_minutes("data.day_start", c.get("data.day_start", "06:00"));
  w.end_minute = clock_minutes("data.day_end", c.get("data.day_end", "24:00"));
  w.slot_minutes = static_cast<int>(positive(c, "data.slot_minutes", 30));
  try {
    w.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return w;
}

AggregateOptions aggregate_options(const Config& c) {
  AggregateOptions o;
  o.window = operating_window(c);
  o.clip_min = c.get_double("data.clip_min", -30.0);
  o.clip_max = c.get_double("data.clip_max", 30.0);
  if (!(o.clip_min < o.clip_max)) throw ConfigError("data.clip_min must be below data.clip_max");
  if (auto first = c.raw("data.first_day")) o.first_day = day_number(parse_timestamp(*first));
  if (c.raw("data.days")) o.days = positive(c, "data.days", 1);
  return o;
}

WeatherScheme weather_scheme(const Config& c) {
  const auto name = c.get("data.weather_scheme", "us");
  WeatherScheme s;
  if (name == "us") {
    s = us_weather_scheme();
  } else if (name == "china") {
    s = china_weather_scheme();
  } else if (name == "custom") {
    s.categories = c.get_list("data.weather_categories", {});
  } else {
    throw ConfigError("data.weather_scheme must be us, china or custom");
  }
  s.priority = c.get_list("data.weather_priority", s.priority);
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return s;
}

FlightColumns flight_columns(const Config& c) {
  FlightColumns f;
  f.origin = c.get("columns.origin", f.origin);
  f.destination = c.get("columns.destination", f.destination);
  f.date = c.get("columns.date", f.date);
  f.scheduled_departure = c.get("columns.scheduled_departure", f.scheduled_departure);
  f.scheduled_arrival = c.get("columns.scheduled_arrival", f.scheduled_arrival);
  f.departure_delay = c.get("columns.departure_delay", f.departure_delay);
  f.arrival_delay = c.get("columns.arrival_delay", f.arrival_delay);
  f.cancelled = c.get("columns.cancelled", f.cancelled);
  return f;
}

GraphOptions graph_options(const Config& c) {
  GraphOptions g;
  g.relations.clear();
  for (const auto& r : c.get_list("graph.relations", {"distance", "od", "do"})) {
    try {
      g.relations.push_back(relation_from_string(r));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (g.relations.empty()) throw ConfigError("graph.relations must name at least one relation");
  if (c.raw("graph.sigma_km")) g.sigma_km = c.get_double("graph.sigma_km", 0.0);
  return g;
}

ModelConfig model_config(const Config& c, const Dataset& ds) {
  ModelConfig m;
  m.nodes = ds.airports.size();
  m.slots_per_day = ds.delays->slots_per_day();
  m.weather_categories = ds.weather.categories.size();
  m.h = positive(c, "model.h", 12);
  m.p = positive(c, "model.p", 12);
  m.relations = graph_options(c).relations.size();
  m.order = static_cast<int>(c.get_int("model.order", 2));
  m.include_identity = c.get_bool("model.include_identity", true);
  m.heads = positive(c, "model.heads", 4);
  m.pos_dim = positive(c, "model.pos_dim", 16);
  m.key_dim = positive(c, "model.key_dim", 32);
  m.weather_embed_dim = static_cast<std::size_t>(c.get_int("model.weather_embed_dim", 4));
  m.hidden_widths = size_list(c, "model.hidden_widths", {"128", "64", "32"});
  m.se_reduction = positive(c, "model.se_reduction", 16);
  m.l_pos_init = c.get_double("model.l_pos_init", 10000.0);
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return m;
}

TrainOptions train_options(const Config& c) {
  TrainOptions t;
  t.epochs = static_cast<std::size_t>(std::max(0LL, c.get_int("train.epochs", 50)));
  t.batch_size = positive(c, "train.batch_size", 32);
  t.seed = static_cast<std::uint64_t>(c.get_int("train.seed", 0));
  t.stride = positive(c, "train.stride", 1);
  t.max_steps = static_cast<std::size_t>(std::max(0LL, c.get_int("train.max_steps", 0)));
  t.time_budget_seconds = c.get_double("train.time_budget_seconds", 0.0);
  t.adam.lr = c.get_double("train.lr", 1e-3);
  t.adam.beta1 = c.get_double("train.beta1", 0.9);
  t.adam.beta2 = c.get_double("train.beta2", 0.999);
  t.adam.eps = c.get_double("train.eps", 1e-8);
  t.adam.clip_norm = c.get_double("train.clip_norm", 0.0);
  return t;
}

EvaluateOptions evaluate_options(const Config& c) {
  EvaluateOptions e;
  e.horizons = size_list(c, "eval.horizons", {"3", "6", "12"});
  const auto agg = c.get("eval.aggregation", "step");
  if (agg == "step") {
    e.aggregation = HorizonAggregation::step;
  } else if (agg == "cumulative") {
    e.aggregation = HorizonAggregation::cumulative;
  } else {
    throw ConfigError("eval.aggregation must be step or cumulative");
  }
  e.var_lag = positive(c, "eval.var_lag", 12);
  e.stride = positive(c, "eval.stride", 1);
  return e;
}

SyntheticOptions synthetic_options(const Config& c) {
  SyntheticOptions s;
  s.seed = static_cast<std::uint64_t>(c.get_int("synthetic.seed", 0));
  s.airports = positive(c, "synthetic.airports", 8);
  s.days = positive(c, "synthetic.days", 60);
  s.lag_steps = positive(c, "synthetic.lag_steps", 2);
  s.source = static_cast<std::size_t>(c.get_int("synthetic.source", 0));
  s.sink = static_cast<std::size_t>(c.get_int("synthetic.sink", 1));
  s.weight = c.get_double("synthetic.weight", 0.8);
  s.mask_fraction = c.get_double("synthetic.mask_fraction", 0.15);
  s.weather_shock = c.get_double("synthetic.weather_shock", 8.0);
  s.window = operating_window(c);
  return s;
}

}  // namespace stpn::tools
