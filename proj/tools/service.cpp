#include "service.hpp"

#include <cmath>

#include <httplib.h>

namespace stpn::tools {

namespace {

const char* title_for(int status) {
  switch (status) {
    case 400: return "Bad Request";
    case 404: return "Not Found";
    case 422: return "Unprocessable Entity";
    default: return "Internal Server Error";
  }
}

class RequestError : public std::runtime_error {
 public:
  RequestError(int status, std::string code, const std::string& detail)
      : std::runtime_error(detail), status(status), code(std::move(code)) {}
  int status;
  std::string code;
};

nlohmann::json parse_body(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw RequestError(400, "bad_request", std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw RequestError(400, "bad_request", "request body must be a JSON object");
  return j;
}

Timestamp window_start_of(const nlohmann::json& j) {
  if (!j.contains("window_start") || !j["window_start"].is_string())
    throw RequestError(400, "bad_request", "window_start must be a timestamp string");
  try {
    return parse_timestamp(j["window_start"].get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw RequestError(400, "bad_request", e.what());
  }
}

void check_window(const Predictor& p, Timestamp ts) {
  try {
    p.window_index(ts);
  } catch (const std::invalid_argument& e) {
    throw RequestError(422, "invalid_window", e.what());
  }
}

template <class F>
ApiResponse guarded(F&& f) {
  try {
    return f();
  } catch (const RequestError& e) {
    return problem(e.status, e.code, e.what());
  } catch (const UnknownAirportError& e) {
    auto r = problem(422, "unknown_airport", e.what());
    r.body["airport"] = e.code();
    return r;
  } catch (const ShapeError& e) {
    return problem(400, "bad_request", e.what());
  } catch (const std::invalid_argument& e) {
    return problem(400, "bad_request", e.what());
  } catch (const std::exception& e) {
    return problem(500, "internal", e.what());
  }
}

ApiResponse predict_raw(const Predictor& pr, const nlohmann::json& j) {
  const RawWindow w = parse_raw_window(j, pr.config(), pr.graph().airports.size());
  PredictionResult r;
  r.airports = pr.airport_codes();
  r.minutes = pr.predict_minutes(w.x, w.mask, w.weather, w.pos_in, w.pos_out);
  auto body = r.to_json();
  body["window_start"] = nullptr;
  body["target_times"] = nlohmann::json::array();
  return {200, body};
}

}  // namespace

ApiResponse problem(int status, const std::string& code, const std::string& detail) {
  return {status,
          {{"schema_version", kApiSchemaVersion},
           {"status", status},
           {"code", code},
           {"title", title_for(status)},
           {"detail", detail}}};
}

RawWindow parse_raw_window(const nlohmann::json& j, const ModelConfig& c, std::size_t N) {
  const auto& delays = j.at("delays");
  auto shape_error = [&](const std::string& what) {
    return ShapeError("delays must be " + std::to_string(N) + " x " + std::to_string(c.h) +
                      " x 2 (airports x input steps x {arrival, departure}): " + what);
  };
  if (!delays.is_array() || delays.size() != N) throw shape_error("wrong airport count");
  RawWindow w{Tensor3(N, c.h, 2), Mask3(N, c.h, 2), std::vector<int>(N * c.h, 0), {}, {}};
  for (std::size_t n = 0; n < N; ++n) {
    if (!delays[n].is_array() || delays[n].size() != c.h) throw shape_error("wrong step count");
    for (std::size_t t = 0; t < c.h; ++t) {
      const auto& cell = delays[n][t];
      if (!cell.is_array() || cell.size() != 2) throw shape_error("cells must hold two values");
      for (std::size_t ch = 0; ch < 2; ++ch) {
        if (cell[ch].is_null()) continue;
        if (!cell[ch].is_number()) throw std::invalid_argument("delays must be numbers or null");
        const double v = cell[ch].get<double>();
        if (!std::isfinite(v)) throw std::invalid_argument("delays must be finite");
        w.x(n, t, ch) = v;
        w.mask.set(n, t, ch, true);
      }
    }
  }
  if (j.contains("weather")) {
    const auto& wx = j["weather"];
    auto bad = [&] { return ShapeError("weather must be " + std::to_string(N) + " x " + std::to_string(c.h) + " codes"); };
    if (!wx.is_array() || wx.size() != N) throw bad();
    for (std::size_t n = 0; n < N; ++n) {
      if (!wx[n].is_array() || wx[n].size() != c.h) throw bad();
      for (std::size_t t = 0; t < c.h; ++t) {
        if (!wx[n][t].is_number_integer()) throw std::invalid_argument("weather codes must be integers");
        const int code = wx[n][t].get<int>();
        if (code < 0 || static_cast<std::size_t>(code) >= c.weather_categories)
          throw std::invalid_argument("weather code " + std::to_string(code) + " out of range");
        w.weather[n * c.h + t] = code;
      }
    }
  }
  long long first = 0;
  if (j.contains("first_slot")) {
    if (!j["first_slot"].is_number_integer()) throw std::invalid_argument("first_slot must be an integer");
    first = j["first_slot"].get<long long>();
    if (first < 0 || static_cast<std::size_t>(first) >= c.slots_per_day)
      throw std::invalid_argument("first_slot must be a slot of the day");
  }
  const auto td = static_cast<long long>(c.slots_per_day);
  for (std::size_t t = 0; t < c.h; ++t) w.pos_in.push_back(static_cast<int>((first + static_cast<long long>(t)) % td));
  for (std::size_t t = 0; t < c.p; ++t)
    w.pos_out.push_back(static_cast<int>((first + static_cast<long long>(c.h + t)) % td));
  return w;
}

Timestamp default_window_start(const Predictor& pr) {
  const auto& ds = pr.dataset();
  const auto test = ds.test_windows({pr.config().h, pr.config().p, 1});
  const std::size_t start = test.empty() ? 0 : test.starts().front();
  return ds.delays->timeline.at(start);
}

Service::Service(std::shared_ptr<const Predictor> predictor, std::optional<AttentionExport> attention,
                 std::string version)
    : predictor_(std::move(predictor)), attention_(std::move(attention)), version_(std::move(version)) {
  if (!attention_) attention_ = export_attention(*predictor_, default_window_start(*predictor_));
}

ApiResponse Service::model() const {
  const auto& ck = predictor_->checkpoint();
  const auto& tl = predictor_->dataset().delays->timeline;
  const auto& c = ck.config;
  nlohmann::json relations = nlohmann::json::array();
  for (const auto& r : predictor_->graph().relations) relations.push_back(to_string(r.kind));
  nlohmann::json training = nlohmann::json::object();
  for (const char* key : {"seed", "epochs_run", "best_epoch", "best_val_rmse", "steps"})
    if (ck.training.contains(key)) training[key] = ck.training[key];
  const std::size_t last = tl.size() >= c.h ? tl.size() - c.h : 0;
  return {200,
          {{"schema_version", kApiSchemaVersion},
           {"model", "stpn"},
           {"version", version_},
           {"checkpoint_format", kCheckpointFormatVersion},
           {"config", c.to_json()},
           {"zscore", {{"mean", ck.zscore.mean}, {"stddev", ck.zscore.stddev}}},
           {"training", training},
           {"relations", relations},
           {"airport_count", predictor_->graph().airports.size()},
           {"channels", {"arrival", "departure"}},
           {"timeline",
            {{"first_window_start", format_timestamp(tl.at(0))},
             {"last_window_start", format_timestamp(tl.at(last))},
             {"default_window_start", format_timestamp(default_window_start(*predictor_))},
             {"slot_minutes", tl.window.slot_minutes},
             {"slots_per_day", tl.window.slots_per_day()}}}}};
}

ApiResponse Service::airports() const {
  nlohmann::json list = nlohmann::json::array();
  const auto& a = predictor_->graph().airports;
  for (std::size_t i = 0; i < a.size(); ++i)
    list.push_back({{"index", i}, {"code", a[i].code}, {"lat", a[i].lat}, {"lon", a[i].lon}});
  return {200, {{"schema_version", kApiSchemaVersion}, {"airports", list}}};
}

ApiResponse Service::predict(const std::string& body) const {
  auto r = guarded([&] {
    const auto j = parse_body(body);
    if (j.contains("delays")) return predict_raw(*predictor_, j);
    const Timestamp ts = window_start_of(j);
    check_window(*predictor_, ts);
    return ApiResponse{200, predict_at(*predictor_, ts).to_json()};
  });
  if (r.status == 200) r.body["model"] = model_info();
  return r;
}

nlohmann::json Service::model_info() const {
  return {{"name", "stpn"}, {"version", version_}, {"checkpoint_format", kCheckpointFormatVersion}};
}

ApiResponse Service::intervene(const std::string& body) const {
  return guarded([&] {
    const auto j = parse_body(body);
    const Timestamp ts = window_start_of(j);
    if (!j.contains("airports") || !j["airports"].is_array())
      throw RequestError(400, "bad_request", "airports must be an array of airport codes");
    std::vector<std::string> codes;
    for (const auto& a : j["airports"]) {
      if (!a.is_string()) throw RequestError(400, "bad_request", "airport codes must be strings");
      codes.push_back(a.get<std::string>());
    }
    for (const auto& code : codes) predictor_->airport_index(code);
    check_window(*predictor_, ts);
    return ApiResponse{200, stpn::intervene(*predictor_, ts, codes).to_json()};
  });
}

ApiResponse Service::attention(const std::string& window_start) const {
  return guarded([&] {
    if (window_start.empty()) return ApiResponse{200, attention_->to_json()};
    Timestamp ts;
    try {
      ts = parse_timestamp(window_start);
    } catch (const std::invalid_argument& e) {
      throw RequestError(400, "bad_request", e.what());
    }
    check_window(*predictor_, ts);
    return ApiResponse{200, export_attention(*predictor_, ts).to_json()};
  });
}

void Service::mount(httplib::Server& server) const {
  auto reply = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), r.status >= 400 ? "application/problem+json" : "application/json");
  };
  server.Get("/api/model", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, model()); });
  server.Get("/api/airports",
             [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, airports()); });
  server.Post("/api/predict", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, predict(req.body));
  });
  server.Post("/api/intervene", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, intervene(req.body));
  });
  server.Get("/api/attention", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, attention(req.has_param("window_start") ? req.get_param_value("window_start") : ""));
  });
  server.set_error_handler([reply](const httplib::Request& req, httplib::Response& res) {
    if (res.body.empty()) reply(res, problem(res.status, res.status == 404 ? "not_found" : "error", "no route for " + req.method + " " + req.path));
  });
}

}  // namespace stpn::tools
