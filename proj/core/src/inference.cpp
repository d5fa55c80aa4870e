#include "stpn/inference.hpp"

#include <stdexcept>

#include "stpn/container.hpp"
#include "stpn/train.hpp"

namespace stpn {

namespace {

std::string join_codes(const std::vector<std::string>& codes) {
  std::string s;
  for (const auto& c : codes) s += (s.empty() ? "" : ", ") + c;
  return s;
}

nlohmann::json times_json(const std::vector<Timestamp>& ts) {
  nlohmann::json j = nlohmann::json::array();
  for (auto t : ts) j.push_back(format_timestamp(t));
  return j;
}

}  // namespace

UnknownAirportError::UnknownAirportError(const std::string& code, const std::vector<std::string>& valid)
    : std::invalid_argument("unknown airport '" + code + "'; valid codes: " + join_codes(valid)),
      code_(code) {}

Predictor::Predictor(Checkpoint checkpoint, std::shared_ptr<const Dataset> dataset, MultiGraph graph)
    : checkpoint_(std::move(checkpoint)), dataset_(std::move(dataset)), graph_(std::move(graph)) {
  if (!dataset_) throw std::invalid_argument("predictor needs a dataset");
  if (graph_.airports.size() != dataset_->airports.size())
    throw ShapeError("graph has " + std::to_string(graph_.airports.size()) + " airports, dataset has " +
                     std::to_string(dataset_->airports.size()));
  for (std::size_t i = 0; i < graph_.airports.size(); ++i)
    if (graph_.airports[i].code != dataset_->airports[i].code)
      throw std::invalid_argument("graph and dataset list airports in a different order");
  if (checkpoint_.config.slots_per_day != dataset_->delays->slots_per_day())
    throw std::invalid_argument("checkpoint and dataset disagree on slots per day");
  supports_ = model_supports(checkpoint_.config, graph_);
}

Tensor3 Predictor::predict_minutes(const Tensor3& input, const Mask3& mask,
                                   std::span<const int> weather, std::span<const int> pos_in,
                                   std::span<const int> pos_out, AttentionMaps* attention) const {
  const auto& c = config();
  if (input.nodes() != graph_.airports.size() || input.steps() != c.h || input.channels() != 2)
    throw ShapeError("prediction input " + input.shape_string() + ", expected (" +
                     std::to_string(graph_.airports.size()) + ", " + std::to_string(c.h) + ", 2)");
  if (!mask.matches(input)) throw ShapeError("prediction mask does not match its input");
  const Tensor3 x = checkpoint_.zscore.normalize(input, mask);
  return checkpoint_.zscore.denormalize(
      predict(c, checkpoint_.params, supports_, {&x, weather, pos_in, pos_out}, attention));
}

std::vector<int> slot_positions(const Timeline& timeline, std::size_t start, std::size_t count) {
  std::vector<int> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = static_cast<int>(timeline.slot_in_day(start + i));
  return out;
}

Tensor3 Predictor::predict_window(std::size_t start, AttentionMaps* attention) const {
  const auto& d = *dataset_->delays;
  const auto& c = config();
  if (start + c.h > d.steps()) throw std::out_of_range("input window runs past the end of the dataset");
  const Sample s = make_sample(d, *dataset_->covariates, start, c.h, 0);
  const auto pos_out = slot_positions(d.timeline, start + c.h, c.p);
  return predict_minutes(s.input, s.input_mask, s.covariates, s.pos_in, pos_out, attention);
}

std::size_t Predictor::window_index(Timestamp window_start) const {
  const auto& tl = dataset_->delays->timeline;
  const auto idx = tl.slot_of(window_start);
  if (!idx || tl.at(*idx) != window_start)
    throw std::invalid_argument("window_start " + format_timestamp(window_start) +
                                " is not a slot of the dataset timeline");
  if (*idx + config().h > tl.size())
    throw std::invalid_argument("window starting " + format_timestamp(window_start) +
                                " needs " + std::to_string(config().h) +
                                " input steps but the dataset ends first");
  return *idx;
}

std::size_t Predictor::airport_index(const std::string& code) const {
  if (auto i = graph_.index_of(code)) return *i;
  throw UnknownAirportError(code, airport_codes());
}

std::vector<std::string> Predictor::airport_codes() const {
  std::vector<std::string> out;
  for (const auto& a : graph_.airports) out.push_back(a.code);
  return out;
}

Forecaster forecaster_from_string(const std::string& name) {
  if (name == "stpn") return Forecaster::stpn;
  if (name == "ha") return Forecaster::ha;
  if (name == "var") return Forecaster::var;
  throw std::invalid_argument("unknown forecaster '" + name + "' (expected stpn, ha, var)");
}

const char* to_string(Forecaster f) {
  switch (f) {
    case Forecaster::stpn: return "stpn";
    case Forecaster::ha: return "ha";
    case Forecaster::var: return "var";
  }
  return "?";
}

MetricsReport evaluate(Forecaster f, const Dataset& ds, std::size_t h, std::size_t p,
                       const Predictor* predictor, const EvaluateOptions& opt) {
  if (f == Forecaster::stpn) {
    if (!predictor) throw std::invalid_argument("evaluate: the stpn forecaster needs a checkpoint");
    h = predictor->config().h;
    p = predictor->config().p;
  }
  const auto test = ds.test_windows({h, p, opt.stride});
  if (test.empty()) throw std::invalid_argument("evaluate: the test segment yields no windows");

  std::optional<HistoricalAverage> ha;
  std::optional<VarModel> var;
  if (f == Forecaster::ha) ha = HistoricalAverage::fit(*ds.delays, 0, ds.split.train_end);
  if (f == Forecaster::var) {
    if (opt.var_lag > h) throw std::invalid_argument("evaluate: VAR lag exceeds the input window");
    var = var_fit(*ds.delays, 0, ds.split.train_end, opt.var_lag);
  }

  MetricsAccumulator acc(p, opt.horizons, opt.aggregation);
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Sample s = test.sample(i);
    Tensor3 pred;
    switch (f) {
      case Forecaster::stpn:
        pred = predictor->predict_minutes(s.input, s.input_mask, s.covariates, s.pos_in, s.pos_out);
        break;
      case Forecaster::ha:
        pred = ha->predict(ds.delays->timeline, s.start + h, p);
        break;
      case Forecaster::var:
        pred = var_predict(*var, s.input, s.input_mask, p);
        break;
    }
    acc.add(pred, s.target, s.target_mask);
  }
  auto report = acc.report(to_string(f));
  report.slot_minutes = static_cast<std::size_t>(ds.delays->timeline.window.slot_minutes);
  return report;
}

nlohmann::json tensor_json(const Tensor3& t) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t n = 0; n < t.nodes(); ++n) {
    nlohmann::json node = nlohmann::json::array();
    for (std::size_t s = 0; s < t.steps(); ++s) {
      nlohmann::json cell = nlohmann::json::array();
      for (std::size_t c = 0; c < t.channels(); ++c) cell.push_back(t(n, s, c));
      node.push_back(std::move(cell));
    }
    out.push_back(std::move(node));
  }
  return out;
}

nlohmann::json InterventionResult::to_json() const {
  return {{"schema_version", kApiSchemaVersion},
          {"window_start", format_timestamp(window_start)},
          {"airports", airports},
          {"intervened", intervened},
          {"channels", {"arrival", "departure"}},
          {"target_times", times_json(target_times)},
          {"factual", tensor_json(factual)},
          {"counterfactual", tensor_json(counterfactual)},
          {"delta", tensor_json(delta)}};
}

InterventionResult intervene(const Predictor& pr, Timestamp window_start,
                             const std::vector<std::string>& airports) {
  const std::size_t start = pr.window_index(window_start);
  std::vector<std::size_t> nodes;
  for (const auto& code : airports) nodes.push_back(pr.airport_index(code));

  const auto& d = *pr.dataset().delays;
  const auto& c = pr.config();
  const Sample s = make_sample(d, *pr.dataset().covariates, start, c.h, 0);
  const auto pos_out = slot_positions(d.timeline, start + c.h, c.p);

  Tensor3 input = s.input;
  Mask3 mask = s.input_mask;
  for (std::size_t n : nodes)
    for (std::size_t t = 0; t < c.h; ++t) {
      input(n, t, kDeparture) = 0.0;
      mask.set(n, t, kDeparture, true);
    }

  InterventionResult r;
  r.window_start = window_start;
  r.airports = pr.airport_codes();
  r.intervened = airports;
  for (std::size_t k = 0; k < c.p; ++k) r.target_times.push_back(d.timeline.at(start + c.h + k));
  r.factual = pr.predict_minutes(s.input, s.input_mask, s.covariates, s.pos_in, pos_out);
  r.counterfactual = pr.predict_minutes(input, mask, s.covariates, s.pos_in, pos_out);
  r.delta = r.factual;
  auto dv = r.delta.values();
  auto cv = r.counterfactual.values();
  for (std::size_t i = 0; i < dv.size(); ++i) dv[i] -= cv[i];
  return r;
}

nlohmann::json PredictionResult::to_json() const {
  return {{"schema_version", kApiSchemaVersion},
          {"window_start", format_timestamp(window_start)},
          {"airports", airports},
          {"channels", {"arrival", "departure"}},
          {"target_times", times_json(target_times)},
          {"predictions", tensor_json(minutes)}};
}

PredictionResult predict_at(const Predictor& pr, Timestamp window_start) {
  const std::size_t start = pr.window_index(window_start);
  PredictionResult r;
  r.window_start = window_start;
  r.airports = pr.airport_codes();
  const auto& tl = pr.dataset().delays->timeline;
  for (std::size_t k = 0; k < pr.config().p; ++k) r.target_times.push_back(tl.at(start + pr.config().h + k));
  r.minutes = pr.predict_window(start);
  return r;
}

nlohmann::json AttentionExport::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < maps.layers.size(); ++l) {
    nlohmann::json heads = nlohmann::json::array();
    for (std::size_t i = 0; i < maps.layers[l].size(); ++i) {
      const Matrix& m = maps.layers[l][i];
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
      heads.push_back({{"head", i}, {"weights", rows}});
    }
    const Matrix& first = maps.layers[l].front();
    layers.push_back({{"layer", l},
                      {"kind", l + 1 == maps.layers.size() ? "output" : "hidden"},
                      {"t_in", first.rows()},
                      {"t_out", first.cols()},
                      {"heads", heads}});
  }
  return {{"schema_version", kApiSchemaVersion},
          {"window_start", format_timestamp(window_start)},
          {"layers", layers}};
}

AttentionExport export_attention(const Predictor& pr, Timestamp window_start) {
  AttentionExport e;
  e.window_start = window_start;
  pr.predict_window(pr.window_index(window_start), &e.maps);
  return e;
}

void save_attention(const AttentionExport& a, const std::filesystem::path& path) {
  ContainerWriter w("STPNATTN", kAttentionFormatVersion);
  w.meta()["format"] = "stpn-attention";
  w.meta()["window_start"] = format_timestamp(a.window_start);
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < a.maps.layers.size(); ++l) {
    layers.push_back({{"layer", l},
                      {"kind", l + 1 == a.maps.layers.size() ? "output" : "hidden"},
                      {"heads", a.maps.layers[l].size()}});
    for (std::size_t i = 0; i < a.maps.layers[l].size(); ++i)
      w.add("layer" + std::to_string(l) + "/head" + std::to_string(i), a.maps.layers[l][i]);
  }
  w.meta()["layers"] = layers;
  w.write(path);
}

AttentionExport load_attention(const std::filesystem::path& path) {
  auto r = ContainerReader::open(path, "STPNATTN", kAttentionFormatVersion);
  try {
    AttentionExport a;
    a.window_start = parse_timestamp(r.meta().at("window_start").get<std::string>());
    for (const auto& layer : r.meta().at("layers")) {
      const auto l = layer.at("layer").get<std::size_t>();
      std::vector<Matrix> heads;
      for (std::size_t i = 0; i < layer.at("heads").get<std::size_t>(); ++i)
        heads.push_back(r.matrix("layer" + std::to_string(l) + "/head" + std::to_string(i)));
      a.maps.layers.push_back(std::move(heads));
    }
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed attention header: " + e.what());
  }
}

}  // namespace stpn
