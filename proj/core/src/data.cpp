#include "stpn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <unordered_map>

#include <boost/tokenizer.hpp>

#include "stpn/container.hpp"

namespace stpn {

namespace {

std::unordered_map<std::string, std::size_t> code_index(const std::vector<Airport>& airports) {
  std::unordered_map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < airports.size(); ++i) {
    if (!idx.emplace(airports[i].code, i).second)
      throw std::invalid_argument("duplicate airport code " + airports[i].code);
  }
  return idx;
}

}  // namespace

std::vector<int> CovariateSeq::window(std::size_t start, std::size_t len) const {
  if (start + len > steps) throw std::out_of_range("covariate window beyond series end");
  std::vector<int> out(nodes * len);
  for (std::size_t n = 0; n < nodes; ++n)
    for (std::size_t t = 0; t < len; ++t) out[n * len + t] = codes[n * steps + start + t];
  return out;
}

int WeatherScheme::code(const std::string& name) const {
  for (std::size_t i = 0; i < categories.size(); ++i)
    if (categories[i] == name) return static_cast<int>(i);
  return -1;
}

int WeatherScheme::severity_rank(int c) const {
  // Lower rank = more severe.
  for (std::size_t i = 0; i < priority.size(); ++i)
    if (code(priority[i]) == c) return static_cast<int>(i);
  return static_cast<int>(priority.size()) + c;
}

void WeatherScheme::validate() const {
  if (categories.empty()) throw std::invalid_argument("weather scheme has no categories");
  for (const auto& p : priority)
    if (code(p) < 0) throw std::invalid_argument("weather priority names unknown category " + p);
}

WeatherScheme us_weather_scheme() {
  return {{"normal", "severe_cold", "fog", "hail", "rain", "snow", "storm", "other_precipitation"},
          {"storm", "hail", "snow", "severe_cold", "fog", "rain", "other_precipitation"}};
}

WeatherScheme china_weather_scheme() {
  return {{"normal", "rain", "cloud", "thunderstorm", "fog", "storm", "snow"},
          {"thunderstorm", "storm", "snow", "fog", "rain", "cloud"}};
}

nlohmann::json IngestReport::to_json() const {
  return {{"flight_rows", flight_rows},
          {"skipped_unknown_airport", skipped_unknown_airport},
          {"skipped_malformed", skipped_malformed},
          {"cancelled", cancelled},
          {"arrivals_outside_window", arrivals_outside_window},
          {"departures_outside_window", departures_outside_window},
          {"weather_rows", weather_rows},
          {"weather_skipped", weather_skipped}};
}

DelayTensor aggregate(std::span<const FlightRecord> records, const std::vector<Airport>& airports,
                      const AggregateOptions& options, IngestReport* report) {
  options.window.validate();
  const auto idx = code_index(airports);
  IngestReport local;
  IngestReport& rep = report ? *report : local;

  Timeline timeline;
  timeline.window = options.window;
  if (options.first_day && options.days) {
    timeline.first_day = *options.first_day;
    timeline.days = *options.days;
  } else {
    std::int64_t lo = std::numeric_limits<std::int64_t>::max();
    std::int64_t hi = std::numeric_limits<std::int64_t>::min();
    for (const auto& r : records) {
      for (Timestamp ts : {r.scheduled_departure, r.scheduled_arrival}) {
        lo = std::min(lo, day_number(ts));
        hi = std::max(hi, day_number(ts));
      }
    }
    if (records.empty()) throw std::invalid_argument("aggregate: no flight records");
    timeline.first_day = options.first_day.value_or(lo);
    timeline.days = options.days.value_or(static_cast<std::size_t>(hi - timeline.first_day + 1));
  }

  const std::size_t N = airports.size(), T = timeline.size();
  // (cell, clipped delay) pairs; sorting makes the reduction independent of
  // record order, down to the last bit.
  std::vector<std::pair<std::size_t, double>> cells;
  cells.reserve(records.size() * 2);
  auto clip = [&](double d) { return std::clamp(d, options.clip_min, options.clip_max); };
  for (const auto& r : records) {
    auto o = idx.find(r.origin);
    auto d = idx.find(r.destination);
    if (o == idx.end() || d == idx.end()) {
      ++rep.skipped_unknown_airport;
      continue;
    }
    if (auto k = timeline.slot_of(r.scheduled_departure)) {
      cells.emplace_back((o->second * T + *k) * kDelayChannels + kDeparture, clip(r.departure_delay));
    } else {
      ++rep.departures_outside_window;
    }
    if (auto k = timeline.slot_of(r.scheduled_arrival)) {
      cells.emplace_back((d->second * T + *k) * kDelayChannels + kArrival, clip(r.arrival_delay));
    } else {
      ++rep.arrivals_outside_window;
    }
  }
  std::sort(cells.begin(), cells.end());

  DelayTensor out{Tensor3(N, T, kDelayChannels), Mask3(N, T, kDelayChannels), timeline,
                  options.clip_min, options.clip_max};
  auto values = out.values.values();
  for (std::size_t i = 0; i < cells.size();) {
    std::size_t j = i;
    double s = 0.0;
    while (j < cells.size() && cells[j].first == cells[i].first) s += cells[j++].second;
    const std::size_t cell = cells[i].first;
    values[cell] = s / static_cast<double>(j - i);
    const std::size_t c = cell % kDelayChannels;
    const std::size_t t = (cell / kDelayChannels) % T;
    const std::size_t n = cell / kDelayChannels / T;
    out.mask.set(n, t, c, true);
    i = j;
  }
  return out;
}

CovariateSeq aggregate_weather(std::span<const WeatherRecord> records,
                               const std::vector<Airport>& airports, const Timeline& timeline,
                               const WeatherScheme& scheme, IngestReport* report) {
  scheme.validate();
  const auto idx = code_index(airports);
  CovariateSeq out{airports.size(), timeline.size(), scheme.categories.size(),
                   std::vector<int>(airports.size() * timeline.size(), 0)};
  std::vector<bool> seen(out.codes.size(), false);
  for (const auto& r : records) {
    auto a = idx.find(r.airport);
    const int c = scheme.code(r.category);
    auto k = timeline.slot_of(r.time);
    if (a == idx.end() || c < 0 || !k) {
      if (report) ++report->weather_skipped;
      continue;
    }
    const std::size_t cell = a->second * out.steps + *k;
    if (!seen[cell] || scheme.severity_rank(c) < scheme.severity_rank(out.codes[cell])) {
      out.codes[cell] = c;
      seen[cell] = true;
    }
  }
  return out;
}

Matrix flow_counts(std::span<const FlightRecord> records, const std::vector<Airport>& airports,
                   const Timeline& timeline, std::size_t end) {
  const auto idx = code_index(airports);
  Matrix flow(airports.size(), airports.size());
  for (const auto& r : records) {
    auto o = idx.find(r.origin);
    auto d = idx.find(r.destination);
    if (o == idx.end() || d == idx.end()) continue;
    auto k = timeline.slot_of(r.scheduled_departure);
    if (k && *k < end) flow(o->second, d->second) += 1.0;
  }
  return flow;
}

Split chronological_split(std::size_t steps, double train_fraction, double val_fraction) {
  if (train_fraction < 0 || val_fraction < 0 || train_fraction + val_fraction > 1.0)
    throw std::invalid_argument("split fractions must be non-negative and sum to at most 1");
  Split s;
  s.total = steps;
  s.train_end = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(steps)));
  s.val_end = s.train_end +
              static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(steps)));
  return s;
}

ZScore ZScore::fit(const DelayTensor& delays, std::size_t begin, std::size_t end) {
  ZScore z;
  const auto& v = delays.values;
  for (std::size_t c = 0; c < kDelayChannels; ++c) {
    double s = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < v.nodes(); ++n)
      for (std::size_t t = begin; t < end; ++t)
        if (delays.mask(n, t, c)) {
          s += v(n, t, c);
          ++count;
        }
    if (count == 0) {
      throw DegenerateChannelError("channel " + std::to_string(c) +
                                   " has no observed training entries");
    }
    const double mean = s / static_cast<double>(count);
    double ss = 0.0;
    for (std::size_t n = 0; n < v.nodes(); ++n)
      for (std::size_t t = begin; t < end; ++t)
        if (delays.mask(n, t, c)) ss += (v(n, t, c) - mean) * (v(n, t, c) - mean);
    const double sd = std::sqrt(ss / static_cast<double>(count));
    if (!(sd > 0.0)) {
      throw DegenerateChannelError("channel " + std::to_string(c) +
                                   " has zero variance over the training segment");
    }
    z.mean[c] = mean;
    z.stddev[c] = sd;
  }
  return z;
}

Tensor3 ZScore::normalize(const Tensor3& minutes, const Mask3& mask) const {
  if (!mask.matches(minutes) || minutes.channels() != kDelayChannels)
    throw ShapeError("normalize: tensor " + minutes.shape_string() + " does not match its mask");
  Tensor3 out(minutes.nodes(), minutes.steps(), minutes.channels());
  auto src = minutes.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i)
    dst[i] = mask.flat(i) ? apply(src[i], i % kDelayChannels) : 0.0;
  return out;
}

Tensor3 ZScore::denormalize(const Tensor3& z) const {
  if (z.channels() != kDelayChannels) throw ShapeError("denormalize: expected 2 channels");
  Tensor3 out = z;
  auto v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = invert(v[i], i % kDelayChannels);
  return out;
}

Sample make_sample(const DelayTensor& delays, const CovariateSeq& covariates, std::size_t start,
                   std::size_t h, std::size_t p) {
  if (start + h + p > delays.steps()) throw std::out_of_range("window extends past the series");
  const std::size_t N = delays.nodes(), C = kDelayChannels;
  Sample s;
  s.start = start;
  s.input = Tensor3(N, h, C);
  s.input_mask = Mask3(N, h, C);
  s.target = Tensor3(N, p, C);
  s.target_mask = Mask3(N, p, C);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t t = 0; t < h; ++t) {
        s.input(n, t, c) = delays.values(n, start + t, c);
        s.input_mask.set(n, t, c, delays.mask(n, start + t, c));
      }
      for (std::size_t t = 0; t < p; ++t) {
        s.target(n, t, c) = delays.values(n, start + h + t, c);
        s.target_mask.set(n, t, c, delays.mask(n, start + h + t, c));
      }
    }
  s.covariates = covariates.window(start, h);
  for (std::size_t t = 0; t < h; ++t)
    s.pos_in.push_back(static_cast<int>(delays.timeline.slot_in_day(start + t)));
  for (std::size_t t = 0; t < p; ++t)
    s.pos_out.push_back(static_cast<int>(delays.timeline.slot_in_day(start + h + t)));
  return s;
}

WindowedDataset::WindowedDataset(std::shared_ptr<const DelayTensor> delays,
                                 std::shared_ptr<const CovariateSeq> covariates, std::size_t h,
                                 std::size_t p, std::vector<std::size_t> starts)
    : delays_(std::move(delays)), covariates_(std::move(covariates)), h_(h), p_(p),
      starts_(std::move(starts)) {}

Sample WindowedDataset::sample(std::size_t i) const {
  return make_sample(*delays_, *covariates_, starts_.at(i), h_, p_);
}

WindowedDataset make_windows(std::shared_ptr<const DelayTensor> delays,
                             std::shared_ptr<const CovariateSeq> covariates,
                             const WindowOptions& options, std::size_t begin, std::size_t end,
                             bool* too_short) {
  if (options.h < 1 || options.p < 1 || options.stride < 1)
    throw std::invalid_argument("window sizes and stride must be >= 1");
  end = std::min(end, delays->steps());
  std::vector<std::size_t> starts;
  const bool short_range = end < begin || end - begin < options.h + options.p;
  if (too_short) *too_short = short_range;
  if (!short_range) {
    for (std::size_t s = begin; s + options.h + options.p <= end; s += options.stride) {
      bool any = false;
      for (std::size_t n = 0; n < delays->nodes() && !any; ++n)
        for (std::size_t t = s + options.h; t < s + options.h + options.p && !any; ++t)
          for (std::size_t c = 0; c < kDelayChannels && !any; ++c) any = delays->mask(n, t, c);
      if (any) starts.push_back(s);
    }
  }
  return WindowedDataset(std::move(delays), std::move(covariates), options.h, options.p,
                         std::move(starts));
}

WindowedDataset make_windows(std::shared_ptr<const DelayTensor> delays,
                             std::shared_ptr<const CovariateSeq> covariates,
                             const WindowOptions& options, bool* too_short) {
  const std::size_t end = delays->steps();
  return make_windows(std::move(delays), std::move(covariates), options, 0, end, too_short);
}

WindowedDataset Dataset::windows(const WindowOptions& options, std::size_t begin,
                                 std::size_t end) const {
  return make_windows(delays, covariates, options, begin, end);
}

WindowedDataset Dataset::train_windows(const WindowOptions& options) const {
  return windows(options, 0, split.train_end);
}

WindowedDataset Dataset::val_windows(const WindowOptions& options) const {
  return windows(options, split.train_end, split.val_end);
}

WindowedDataset Dataset::test_windows(const WindowOptions& options) const {
  return windows(options, split.val_end, split.total);
}

std::optional<std::size_t> Dataset::airport_index(const std::string& code) const {
  for (std::size_t i = 0; i < airports.size(); ++i)
    if (airports[i].code == code) return i;
  return std::nullopt;
}

Dataset assemble_dataset(std::vector<Airport> airports, DelayTensor delays, CovariateSeq covariates,
                         WeatherScheme weather, Matrix train_flow, double train_fraction,
                         double val_fraction) {
  if (delays.nodes() != airports.size() || covariates.nodes != airports.size() ||
      covariates.steps != delays.steps()) {
    throw ShapeError("dataset parts disagree on airport or time extents");
  }
  Dataset ds;
  ds.split = chronological_split(delays.steps(), train_fraction, val_fraction);
  ds.zscore = ZScore::fit(delays, 0, ds.split.train_end);
  ds.airports = std::move(airports);
  ds.delays = std::make_shared<const DelayTensor>(std::move(delays));
  ds.covariates = std::make_shared<const CovariateSeq>(std::move(covariates));
  ds.weather = std::move(weather);
  ds.train_flow = std::move(train_flow);
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  ContainerWriter w("STPNDATA", kDatasetFormatVersion);
  auto& m = w.meta();
  m["format"] = "stpn-dataset";
  m["airports"] = nlohmann::json::array();
  for (const auto& a : ds.airports) m["airports"].push_back({{"code", a.code}, {"lat", a.lat}, {"lon", a.lon}});
  const auto& tl = ds.delays->timeline;
  m["timeline"] = {{"first_day", tl.first_day},
                   {"days", tl.days},
                   {"start_minute", tl.window.start_minute},
                   {"end_minute", tl.window.end_minute},
                   {"slot_minutes", tl.window.slot_minutes},
                   {"slots_per_day", tl.window.slots_per_day()},
                   {"first_slot", format_timestamp(tl.at(0))}};
  m["clip"] = {{"min", ds.delays->clip_min}, {"max", ds.delays->clip_max}};
  m["split"] = {{"train_end", ds.split.train_end}, {"val_end", ds.split.val_end}, {"total", ds.split.total}};
  m["zscore"] = {{"mean", ds.zscore.mean}, {"stddev", ds.zscore.stddev}};
  m["weather"] = {{"categories", ds.weather.categories}, {"priority", ds.weather.priority}};
  m["metadata"] = ds.metadata;

  const auto& d = *ds.delays;
  w.add("delays", d.values);
  std::vector<double> mask(d.mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = d.mask.flat(i) ? 1.0 : 0.0;
  w.add("mask", {d.nodes(), d.steps(), kDelayChannels}, mask);
  std::vector<double> codes(ds.covariates->codes.begin(), ds.covariates->codes.end());
  w.add("covariates", {ds.covariates->nodes, ds.covariates->steps}, codes);
  w.add("train_flow", ds.train_flow);
  w.write(path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  auto r = ContainerReader::open(path, "STPNDATA", kDatasetFormatVersion);
  try {
    const auto& m = r.meta();
    Dataset ds;
    for (const auto& a : m.at("airports"))
      ds.airports.push_back({a.at("code").get<std::string>(), a.at("lat").get<double>(), a.at("lon").get<double>()});
    const auto& tl = m.at("timeline");
    DelayTensor d;
    d.timeline.first_day = tl.at("first_day").get<std::int64_t>();
    d.timeline.days = tl.at("days").get<std::size_t>();
    d.timeline.window = {tl.at("start_minute").get<int>(), tl.at("end_minute").get<int>(),
                         tl.at("slot_minutes").get<int>()};
    d.clip_min = m.at("clip").at("min").get<double>();
    d.clip_max = m.at("clip").at("max").get<double>();
    d.values = r.tensor3("delays");
    const Tensor3 mask = r.tensor3("mask");
    d.mask = Mask3(mask.nodes(), mask.steps(), mask.channels());
    for (std::size_t n = 0; n < mask.nodes(); ++n)
      for (std::size_t t = 0; t < mask.steps(); ++t)
        for (std::size_t c = 0; c < mask.channels(); ++c) d.mask.set(n, t, c, mask(n, t, c) != 0.0);
    if (d.values.nodes() != ds.airports.size() || d.values.steps() != d.timeline.size() ||
        !d.mask.matches(d.values)) {
      throw FormatError("dataset tensors disagree with the airport list or timeline");
    }
    const auto shape = r.shape("covariates");
    const auto codes = r.data("covariates");
    CovariateSeq cov;
    cov.nodes = shape.at(0);
    cov.steps = shape.at(1);
    cov.codes.assign(codes.begin(), codes.end());
    ds.weather.categories = m.at("weather").at("categories").get<std::vector<std::string>>();
    ds.weather.priority = m.at("weather").at("priority").get<std::vector<std::string>>();
    cov.categories = ds.weather.categories.size();
    ds.train_flow = r.matrix("train_flow");
    ds.split = {m.at("split").at("train_end").get<std::size_t>(), m.at("split").at("val_end").get<std::size_t>(),
                m.at("split").at("total").get<std::size_t>()};
    ds.zscore.mean = m.at("zscore").at("mean").get<std::array<double, 2>>();
    ds.zscore.stddev = m.at("zscore").at("stddev").get<std::array<double, 2>>();
    ds.metadata = m.at("metadata");
    ds.delays = std::make_shared<const DelayTensor>(std::move(d));
    ds.covariates = std::make_shared<const CovariateSeq>(std::move(cov));
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed dataset header: " + e.what());
  }
}

// -- delimited text -------------------------------------------------------------

namespace {

using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;

class DelimitedReader {
 public:
  DelimitedReader(const std::filesystem::path& path, char delimiter)
      : in_(path), sep_('\\', delimiter, '"'), path_(path.string()) {
    if (!in_) throw std::runtime_error("cannot open " + path_);
    std::vector<std::string> header;
    if (!next(header)) throw std::runtime_error(path_ + ": empty file");
    for (std::size_t i = 0; i < header.size(); ++i) columns_[header[i]] = i;
  }

  std::optional<std::size_t> column(const std::string& name, bool required = true) const {
    if (name.empty()) return std::nullopt;
    auto it = columns_.find(name);
    if (it == columns_.end()) {
      if (required) throw std::runtime_error(path_ + ": missing column '" + name + "'");
      return std::nullopt;
    }
    return it->second;
  }

  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      fields.clear();
      Tokenizer tok(line, sep_);
      for (const auto& f : tok) fields.push_back(f);
      return true;
    }
    return false;
  }

 private:
  std::ifstream in_;
  boost::escaped_list_separator<char> sep_;
  std::string path_;
  std::map<std::string, std::size_t> columns_;
};

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

/// Clock time "HHMM", "HMM" or "HH:MM" to minutes after midnight.
int parse_clock(const std::string& text) {
  std::string digits;
  for (char ch : text)
    if (ch != ':') digits += ch;
  if (digits.empty() || digits.size() > 4) throw std::invalid_argument("bad clock time " + text);
  const int v = std::stoi(digits);
  const int hh = v / 100, mm = v % 100;
  if (hh > 24 || mm > 59) throw std::invalid_argument("bad clock time " + text);
  return hh * 60 + mm;
}

Timestamp parse_when(const std::string& field, const std::optional<std::string>& date) {
  if (field.find('-') != std::string::npos) return parse_timestamp(field);
  if (!date) throw std::invalid_argument("clock time without a date column");
  return parse_timestamp(*date) + parse_clock(field);
}

}  // namespace

std::vector<FlightRecord> read_flights(const std::filesystem::path& path, const FlightColumns& cols,
                                       char delimiter, IngestReport* report) {
  DelimitedReader reader(path, delimiter);
  const auto c_origin = *reader.column(cols.origin);
  const auto c_dest = *reader.column(cols.destination);
  const auto c_dep = *reader.column(cols.scheduled_departure);
  const auto c_arr = *reader.column(cols.scheduled_arrival);
  const auto c_dd = *reader.column(cols.departure_delay);
  const auto c_ad = *reader.column(cols.arrival_delay);
  const auto c_date = reader.column(cols.date, false);
  const auto c_cancel = reader.column(cols.cancelled, false);

  IngestReport local;
  IngestReport& rep = report ? *report : local;
  std::vector<FlightRecord> out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    ++rep.flight_rows;
    try {
      auto get = [&](std::size_t i) {
        if (i >= f.size()) throw std::invalid_argument("short row");
        return trim(f[i]);
      };
      if (c_cancel) {
        const std::string v = get(*c_cancel);
        if (!v.empty() && std::stod(v) != 0.0) {
          ++rep.cancelled;
          continue;
        }
      }
      std::optional<std::string> date;
      if (c_date) date = get(*c_date);
      FlightRecord r;
      r.origin = get(c_origin);
      r.destination = get(c_dest);
      r.scheduled_departure = parse_when(get(c_dep), date);
      r.scheduled_arrival = parse_when(get(c_arr), date);
      if (r.scheduled_arrival < r.scheduled_departure && get(c_arr).find('-') == std::string::npos)
        r.scheduled_arrival += 1440;
      r.departure_delay = std::stod(get(c_dd));
      r.arrival_delay = std::stod(get(c_ad));
      out.push_back(std::move(r));
    } catch (const std::exception&) {
      ++rep.skipped_malformed;
    }
  }
  return out;
}

std::vector<WeatherRecord> read_weather(const std::filesystem::path& path,
                                        const WeatherColumns& cols, char delimiter,
                                        IngestReport* report) {
  DelimitedReader reader(path, delimiter);
  const auto c_airport = *reader.column(cols.airport);
  const auto c_time = *reader.column(cols.time);
  const auto c_cat = *reader.column(cols.category);
  std::vector<WeatherRecord> out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (report) ++report->weather_rows;
    try {
      if (std::max({c_airport, c_time, c_cat}) >= f.size()) throw std::invalid_argument("short row");
      out.push_back({trim(f[c_airport]), parse_timestamp(trim(f[c_time])), trim(f[c_cat])});
    } catch (const std::exception&) {
      if (report) ++report->weather_skipped;
    }
  }
  return out;
}

std::vector<Airport> read_airports(const std::filesystem::path& path, const AirportColumns& cols,
                                   char delimiter) {
  DelimitedReader reader(path, delimiter);
  const auto c_code = *reader.column(cols.code);
  const auto c_lat = *reader.column(cols.lat);
  const auto c_lon = *reader.column(cols.lon);
  std::vector<Airport> out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (std::max({c_code, c_lat, c_lon}) >= f.size())
      throw std::runtime_error(path.string() + ": short airport row");
    out.push_back({trim(f[c_code]), std::stod(trim(f[c_lat])), std::stod(trim(f[c_lon]))});
  }
  if (out.empty()) throw std::runtime_error(path.string() + ": no airports");
  return out;
}

}  // namespace stpn
