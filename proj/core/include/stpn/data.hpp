#pragma once

// Flight/weather ingestion into masked delay tensors, z-score normalization,
// chronological splitting, windowing and the dataset artifact.

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stpn/graph.hpp"
#include "stpn/tensor.hpp"
#include "stpn/timeline.hpp"

namespace stpn {

inline constexpr std::size_t kArrival = 0;
inline constexpr std::size_t kDeparture = 1;
inline constexpr std::size_t kDelayChannels = 2;

struct FlightRecord {
  std::string origin;
  std::string destination;
  Timestamp scheduled_departure = 0;
  Timestamp scheduled_arrival = 0;
  double departure_delay = 0.0;  // minutes, negative when early
  double arrival_delay = 0.0;
};

struct WeatherRecord {
  std::string airport;
  Timestamp time = 0;
  std::string category;
};

/// Observed delays (minutes) per airport, slot and {arrival, departure}.
/// Unobserved cells hold 0 and are false in `mask`.
struct DelayTensor {
  Tensor3 values;
  Mask3 mask;
  Timeline timeline;
  double clip_min = -30.0;
  double clip_max = 30.0;

  std::size_t nodes() const { return values.nodes(); }
  std::size_t steps() const { return values.steps(); }
  std::size_t slots_per_day() const { return timeline.window.slots_per_day(); }
};

/// Weather category code per airport and slot, row-major nodes x steps.
struct CovariateSeq {
  std::size_t nodes = 0;
  std::size_t steps = 0;
  std::size_t categories = 0;
  std::vector<int> codes;

  int at(std::size_t n, std::size_t t) const { return codes[n * steps + t]; }
  /// nodes x len block starting at `start`.
  std::vector<int> window(std::size_t start, std::size_t len) const;
};

/// Category names (index = code) and a severity order used to pick one
/// category per slot when several are reported.
struct WeatherScheme {
  std::vector<std::string> categories;
  /// Most severe first. Categories not listed rank below all listed ones.
  std::vector<std::string> priority;

  int code(const std::string& name) const;
  int severity_rank(int code) const;
  void validate() const;
};

WeatherScheme us_weather_scheme();
WeatherScheme china_weather_scheme();

struct IngestReport {
  std::size_t flight_rows = 0;
  std::size_t skipped_unknown_airport = 0;
  std::size_t skipped_malformed = 0;
  std::size_t cancelled = 0;
  std::size_t arrivals_outside_window = 0;
  std::size_t departures_outside_window = 0;
  std::size_t weather_rows = 0;
  std::size_t weather_skipped = 0;

  nlohmann::json to_json() const;
};

struct AggregateOptions {
  OperatingWindow window;
  double clip_min = -30.0;
  double clip_max = 30.0;
  /// Explicit timeline extent; by default spans the days covered by records.
  std::optional<std::int64_t> first_day;
  std::optional<std::size_t> days;
};

/// Cell (v, k) of the arrival channel is the mean of clip(delay) over flights
/// with destination v and scheduled arrival in slot k; departures likewise
/// by origin. The result does not depend on record order.
DelayTensor aggregate(std::span<const FlightRecord> records, const std::vector<Airport>& airports,
                      const AggregateOptions& options, IngestReport* report = nullptr);

/// Most severe reported category per (airport, slot); code 0 where nothing
/// was reported.
CovariateSeq aggregate_weather(std::span<const WeatherRecord> records,
                               const std::vector<Airport>& airports, const Timeline& timeline,
                               const WeatherScheme& scheme, IngestReport* report = nullptr);

/// Flights from i to j whose scheduled departure falls in slots [0, end).
Matrix flow_counts(std::span<const FlightRecord> records, const std::vector<Airport>& airports,
                   const Timeline& timeline, std::size_t end);

struct Split {
  std::size_t train_end = 0;
  std::size_t val_end = 0;
  std::size_t total = 0;
};

/// Contiguous train/validation/test segments; the first two sizes are
/// floor(fraction * steps), the test segment takes the remainder.
Split chronological_split(std::size_t steps, double train_fraction = 0.7, double val_fraction = 0.1);

class DegenerateChannelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-channel z-score statistics over observed entries of a time range.
struct ZScore {
  std::array<double, kDelayChannels> mean{};
  std::array<double, kDelayChannels> stddev{1.0, 1.0};

  static ZScore fit(const DelayTensor& delays, std::size_t begin, std::size_t end);

  double apply(double minutes, std::size_t channel) const {
    return (minutes - mean[channel]) / stddev[channel];
  }
  double invert(double z, std::size_t channel) const { return z * stddev[channel] + mean[channel]; }

  /// Normalizes observed cells; unobserved cells become 0 (the channel mean).
  Tensor3 normalize(const Tensor3& minutes, const Mask3& mask) const;
  Tensor3 denormalize(const Tensor3& z) const;
};

/// One input/target window. Delays are in minutes; covariates are
/// nodes x h codes; positions are slot-of-day indices.
struct Sample {
  std::size_t start = 0;
  Tensor3 input;
  Mask3 input_mask;
  std::vector<int> covariates;
  Tensor3 target;
  Mask3 target_mask;
  std::vector<int> pos_in;
  std::vector<int> pos_out;
};

Sample make_sample(const DelayTensor& delays, const CovariateSeq& covariates, std::size_t start,
                   std::size_t h, std::size_t p);

/// Windows over shared series, materialized on demand.
class WindowedDataset {
 public:
  WindowedDataset() = default;
  WindowedDataset(std::shared_ptr<const DelayTensor> delays,
                  std::shared_ptr<const CovariateSeq> covariates, std::size_t h, std::size_t p,
                  std::vector<std::size_t> starts);

  std::size_t size() const { return starts_.size(); }
  bool empty() const { return starts_.empty(); }
  std::size_t history() const { return h_; }
  std::size_t horizon() const { return p_; }
  const std::vector<std::size_t>& starts() const { return starts_; }
  Sample sample(std::size_t i) const;
  const DelayTensor& delays() const { return *delays_; }
  const CovariateSeq& covariates() const { return *covariates_; }

 private:
  std::shared_ptr<const DelayTensor> delays_;
  std::shared_ptr<const CovariateSeq> covariates_;
  std::size_t h_ = 0;
  std::size_t p_ = 0;
  std::vector<std::size_t> starts_;
};

struct WindowOptions {
  std::size_t h = 12;
  std::size_t p = 12;
  std::size_t stride = 1;
};

/// Windows whose input and target both lie in [begin, end). Windows with a
/// fully masked target are dropped. Returns an empty dataset (and sets
/// `*too_short`) when h + p exceeds the range.
WindowedDataset make_windows(std::shared_ptr<const DelayTensor> delays,
                             std::shared_ptr<const CovariateSeq> covariates,
                             const WindowOptions& options, std::size_t begin, std::size_t end,
                             bool* too_short = nullptr);
WindowedDataset make_windows(std::shared_ptr<const DelayTensor> delays,
                             std::shared_ptr<const CovariateSeq> covariates,
                             const WindowOptions& options, bool* too_short = nullptr);

/// Everything the later stages need, persisted as one artifact.
struct Dataset {
  std::vector<Airport> airports;
  std::shared_ptr<const DelayTensor> delays;
  std::shared_ptr<const CovariateSeq> covariates;
  WeatherScheme weather;
  Matrix train_flow;
  Split split;
  ZScore zscore;
  nlohmann::json metadata = nlohmann::json::object();

  WindowedDataset windows(const WindowOptions& options, std::size_t begin, std::size_t end) const;
  WindowedDataset train_windows(const WindowOptions& options) const;
  WindowedDataset val_windows(const WindowOptions& options) const;
  WindowedDataset test_windows(const WindowOptions& options) const;
  std::optional<std::size_t> airport_index(const std::string& code) const;
};

/// Computes the chronological split and the training-only z-score.
Dataset assemble_dataset(std::vector<Airport> airports, DelayTensor delays, CovariateSeq covariates,
                         WeatherScheme weather, Matrix train_flow, double train_fraction = 0.7,
                         double val_fraction = 0.1);

inline constexpr std::uint32_t kDatasetFormatVersion = 1;
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// -- delimited-text ingestion --------------------------------------------------

struct FlightColumns {
  std::string origin = "ORIGIN";
  std::string destination = "DEST";
  /// Optional date column; when set, departure/arrival columns may hold
  /// clock times such as "1305" or "13:05".
  std::string date = "FL_DATE";
  std::string scheduled_departure = "CRS_DEP_TIME";
  std::string scheduled_arrival = "CRS_ARR_TIME";
  std::string departure_delay = "DEP_DELAY";
  std::string arrival_delay = "ARR_DELAY";
  /// Optional; rows with a nonzero value are dropped.
  std::string cancelled = "CANCELLED";
};

struct WeatherColumns {
  std::string airport = "airport";
  std::string time = "time";
  std::string category = "category";
};

struct AirportColumns {
  std::string code = "code";
  std::string lat = "lat";
  std::string lon = "lon";
};

std::vector<FlightRecord> read_flights(const std::filesystem::path& path, const FlightColumns& cols,
                                       char delimiter, IngestReport* report = nullptr);
std::vector<WeatherRecord> read_weather(const std::filesystem::path& path,
                                        const WeatherColumns& cols, char delimiter,
                                        IngestReport* report = nullptr);
std::vector<Airport> read_airports(const std::filesystem::path& path, const AirportColumns& cols,
                                   char delimiter);

}  // namespace stpn
