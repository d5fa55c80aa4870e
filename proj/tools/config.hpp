#pragma once

// One INI-style key/value file for every stage. Any key can be overridden by
// an environment variable: STPN_ + upper-cased "section.key" with dots as
// underscores, e.g. STPN_TRAIN_EPOCHS.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "stpn/data.hpp"
#include "stpn/graph.hpp"
#include "stpn/inference.hpp"
#include "stpn/model.hpp"
#include "stpn/synthetic.hpp"
#include "stpn/train.hpp"

namespace stpn::tools {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Config {
 public:
  static Config load(const std::filesystem::path& path);
  static Config from_string(const std::string& text, std::filesystem::path base = ".");

  std::optional<std::string> raw(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;
  /// Relative paths resolve against the config file's directory.
  std::filesystem::path path(const std::string& key, const std::string& fallback) const;

  static std::string env_name(const std::string& key);

 private:
  boost::property_tree::ptree tree_;
  std::filesystem::path base_;
};

OperatingWindow operating_window(const Config& c);
AggregateOptions aggregate_options(const Config& c);
WeatherScheme weather_scheme(const Config& c);
FlightColumns flight_columns(const Config& c);
GraphOptions graph_options(const Config& c);
/// Model section; `nodes`, `slots_per_day` and weather categories come from
/// the dataset.
ModelConfig model_config(const Config& c, const Dataset& dataset);
TrainOptions train_options(const Config& c);
EvaluateOptions evaluate_options(const Config& c);
SyntheticOptions synthetic_options(const Config& c);

}  // namespace stpn::tools
