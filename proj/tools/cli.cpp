#include "cli.hpp"

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "config.hpp"
#include "service.hpp"
#include "stpn/container.hpp"

#ifndef STPN_VERSION
#define STPN_VERSION "0.0.0"
#endif

namespace stpn::tools {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Failure with a stable machine-readable code.
class CliError : public std::runtime_error {
 public:
  CliError(std::string code, const std::string& message, int exit_code = 1, bool usage = false)
      : std::runtime_error(message), code(std::move(code)), exit_code(exit_code), usage(usage) {}
  std::string code;
  int exit_code;
  bool usage;
};

fs::path artifact(const Config& cfg, const std::string& name, const std::string& fallback) {
  return cfg.path("paths." + name, fallback);
}

fs::path existing(const fs::path& p, const std::string& what) {
  if (!fs::exists(p))
    throw CliError("missing_artifact", what + " not found: " + p.string() + " (run the producing subcommand first)",
                   1, true);
  return p;
}

void write_json_file(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << j.dump(2) << '\n';
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

json read_json_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw CliError("missing_artifact", "cannot read " + p.string(), 1, true);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw CliError("bad_input", p.string() + ": " + e.what());
  }
}

char delimiter(const Config& cfg) {
  const auto d = cfg.get("data.delimiter", ",");
  if (d == "tab" || d == "\\t") return '\t';
  if (d.size() != 1) throw ConfigError("data.delimiter must be a single character or 'tab'");
  return d[0];
}

double fraction(const Config& cfg, const std::string& key, double fallback) {
  const double f = cfg.get_double(key, fallback);
  if (!(f > 0.0 && f < 1.0)) throw ConfigError(key + " must lie in (0, 1)");
  return f;
}

std::shared_ptr<const Predictor> load_predictor(const Config& cfg) {
  auto ds = std::make_shared<const Dataset>(
      load_dataset(existing(artifact(cfg, "dataset", "dataset.stpn"), "dataset")));
  auto graph = load_graph(existing(artifact(cfg, "graph", "graph.json"), "graph"));
  auto ck = load_checkpoint(existing(artifact(cfg, "checkpoint", "model.ckpt"), "checkpoint"));
  return std::make_shared<const Predictor>(std::move(ck), std::move(ds), std::move(graph));
}

Timestamp window_or_default(const Predictor& pr, const std::string& text) {
  if (text.empty()) return default_window_start(pr);
  return parse_timestamp(text);
}

// -- subcommands ----------------------------------------------------------------

json cmd_ingest(const Config& cfg, bool synthetic, std::optional<std::uint64_t> seed) {
  const fs::path out = artifact(cfg, "dataset", "dataset.stpn");
  const double train_f = fraction(cfg, "data.train_fraction", 0.7);
  const double val_f = fraction(cfg, "data.val_fraction", 0.1);
  if (train_f + val_f >= 1.0) throw ConfigError("data.train_fraction + data.val_fraction must be below 1");

  Dataset ds;
  json summary;
  if (synthetic) {
    auto opts = synthetic_options(cfg);
    if (seed) opts.seed = *seed;
    auto data = gen_synthetic(opts);
    ds = assemble_dataset(data.airports, data.delays, data.covariates, data.weather, data.flow, train_f, val_f);
    ds.metadata = {{"source", "synthetic"}, {"ground_truth", data.ground_truth}};
    const fs::path gt = artifact(cfg, "ground_truth", "ground_truth.json");
    write_json_file(gt, data.ground_truth);
    summary["ground_truth"] = gt.string();
  } else {
    const auto airports = read_airports(existing(cfg.path("data.airports", ""), "airport table"), {}, delimiter(cfg));
    IngestReport report;
    const auto flights = read_flights(existing(cfg.path("data.flights", ""), "flight table"), flight_columns(cfg),
                                      delimiter(cfg), &report);
    auto delays = aggregate(flights, airports, aggregate_options(cfg), &report);
    const auto scheme = weather_scheme(cfg);
    CovariateSeq weather;
    if (cfg.raw("data.weather")) {
      const auto records = read_weather(existing(cfg.path("data.weather", ""), "weather table"), {}, delimiter(cfg),
                                        &report);
      weather = aggregate_weather(records, airports, delays.timeline, scheme, &report);
    } else {
      weather = {airports.size(), delays.steps(), scheme.categories.size(),
                 std::vector<int>(airports.size() * delays.steps(), 0)};
    }
    const Split split = chronological_split(delays.steps(), train_f, val_f);
    Matrix flow = flow_counts(flights, airports, delays.timeline, split.train_end);
    ds = assemble_dataset(airports, std::move(delays), std::move(weather), scheme, std::move(flow), train_f, val_f);
    ds.metadata = {{"source", "files"},
                   {"flights", cfg.path("data.flights", "").filename().string()},
                   {"ingest", report.to_json()}};
    summary["ingest"] = report.to_json();
  }
  ensure_parent(out);
  save_dataset(ds, out);
  summary["dataset"] = out.string();
  summary["airports"] = ds.airports.size();
  summary["steps"] = ds.delays->steps();
  summary["observed_cells"] = ds.delays->mask.count();
  summary["split"] = {{"train_end", ds.split.train_end}, {"val_end", ds.split.val_end}, {"total", ds.split.total}};
  return summary;
}

json cmd_build_graph(const Config& cfg) {
  const auto ds = load_dataset(existing(artifact(cfg, "dataset", "dataset.stpn"), "dataset"));
  const auto g = build_multigraph(ds.airports, ds.train_flow, graph_options(cfg));
  const fs::path out = artifact(cfg, "graph", "graph.json");
  ensure_parent(out);
  save_graph(g, out);
  json rel = json::array();
  for (const auto& r : g.relations) {
    std::size_t edges = 0;
    for (std::size_t i = 0; i < r.adjacency.rows(); ++i)
      for (std::size_t j = 0; j < r.adjacency.cols(); ++j) edges += i != j && r.adjacency(i, j) > 0.0;
    rel.push_back({{"kind", to_string(r.kind)}, {"edges", edges}});
  }
  return {{"graph", out.string()}, {"airports", g.size()}, {"sigma_km", g.sigma_km}, {"relations", rel}};
}

json cmd_train(const Config& cfg, std::optional<std::uint64_t> seed, std::optional<std::size_t> epochs,
               std::ostream& err, int& exit_code) {
  const auto ds = load_dataset(existing(artifact(cfg, "dataset", "dataset.stpn"), "dataset"));
  const auto graph = load_graph(existing(artifact(cfg, "graph", "graph.json"), "graph"));
  const auto mc = model_config(cfg, ds);
  auto opts = train_options(cfg);
  if (seed) opts.seed = *seed;
  if (epochs) opts.epochs = *epochs;
  if (cfg.get_bool("train.progress", true))
    opts.on_epoch = [&err](const json& e) { err << e.dump() << '\n' << std::flush; };

  auto result = train(mc, ds, graph, opts);
  const fs::path out = artifact(cfg, "checkpoint", "model.ckpt");
  ensure_parent(out);
  save_checkpoint(result.checkpoint, out);
  if (result.aborted) {
    exit_code = 3;
    throw CliError("training_aborted", result.abort_reason + "; last good checkpoint written to " + out.string(), 3);
  }
  auto summary = result.checkpoint.training;
  summary.erase("history");
  summary["checkpoint"] = out.string();
  return summary;
}

json cmd_evaluate(const Config& cfg, const std::string& baseline, bool cumulative, const std::string& out_path) {
  auto opts = evaluate_options(cfg);
  if (cumulative) opts.aggregation = HorizonAggregation::cumulative;
  const Forecaster f = forecaster_from_string(baseline);
  MetricsReport report;
  if (f == Forecaster::stpn) {
    const auto pr = load_predictor(cfg);
    report = evaluate(f, pr->dataset(), pr->config().h, pr->config().p, pr.get(), opts);
  } else {
    const auto ds = load_dataset(existing(artifact(cfg, "dataset", "dataset.stpn"), "dataset"));
    const auto h = static_cast<std::size_t>(cfg.get_int("model.h", 12));
    const auto p = static_cast<std::size_t>(cfg.get_int("model.p", 12));
    report = evaluate(f, ds, h, p, nullptr, opts);
  }
  const json j = report.to_json();
  if (!out_path.empty()) write_json_file(out_path, j);
  return j;
}

json cmd_predict(const Config& cfg, const std::string& window_start, const std::string& input) {
  const auto pr = load_predictor(cfg);
  Service svc(pr, AttentionExport{}, STPN_VERSION);
  json result;
  if (!input.empty()) {
    const json req = read_json_file(existing(input, "input file"));
    if (!req.is_object() || !req.contains("delays"))
      throw CliError("bad_input", "input must be an object with a \"delays\" array");
    // Dimension problems surface as ShapeError with their own exit code.
    parse_raw_window(req, pr->config(), pr->graph().size());
    const auto r = svc.predict(req.dump());
    if (r.status != 200) throw CliError(r.body.value("code", "error"), r.body.value("detail", ""));
    return r.body;
  }
  const auto r = svc.predict(json{{"window_start", format_timestamp(window_or_default(*pr, window_start))}}.dump());
  if (r.status != 200) throw CliError(r.body.value("code", "error"), r.body.value("detail", ""));
  return r.body;
}

json cmd_intervene(const Config& cfg, const std::string& window_start, const std::vector<std::string>& codes) {
  const auto pr = load_predictor(cfg);
  const Timestamp ts = window_or_default(*pr, window_start);
  for (const auto& c : codes) pr->airport_index(c);
  return intervene(*pr, ts, codes).to_json();
}

json cmd_export_attention(const Config& cfg, const std::string& window_start, const std::string& out_path) {
  const auto pr = load_predictor(cfg);
  const auto e = export_attention(*pr, window_or_default(*pr, window_start));
  const fs::path out = out_path.empty() ? artifact(cfg, "attention", "attention.stpn") : fs::path(out_path);
  ensure_parent(out);
  save_attention(e, out);
  json layers = json::array();
  for (const auto& l : e.maps.layers) layers.push_back({{"heads", l.size()}, {"t_in", l.front().rows()}, {"t_out", l.front().cols()}});
  return {{"attention", out.string()}, {"window_start", format_timestamp(e.window_start)}, {"layers", layers}};
}

std::atomic<httplib::Server*> g_server{nullptr};

extern "C" void stop_server(int) {
  if (auto* s = g_server.load()) s->stop();
}

int cmd_serve(const Config& cfg, std::string host, std::optional<int> port, std::ostream& out) {
  const auto pr = load_predictor(cfg);
  std::optional<AttentionExport> attention;
  const fs::path att = artifact(cfg, "attention", "attention.stpn");
  if (fs::exists(att)) attention = load_attention(att);
  const Service svc(pr, std::move(attention), STPN_VERSION);

  if (host.empty()) host = cfg.get("serve.host", "127.0.0.1");
  const int want = port ? *port : static_cast<int>(cfg.get_int("serve.port", 8080));
  if (want < 0 || want > 65535) throw CliError("usage", "port must be in [0, 65535]", 2, true);

  httplib::Server server;
  svc.mount(server);
  const int bound = want == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, want) ? want : -1);
  if (bound < 0) throw CliError("bind_failed", "cannot bind " + host + ":" + std::to_string(want));
  out << json{{"host", host}, {"port", bound}}.dump() << '\n' << std::flush;

  g_server = &server;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  const bool ok = server.listen_after_bind();
  g_server = nullptr;
  return ok ? 0 : 1;
}

void error_line(std::ostream& err, const std::string& code, const std::string& message) {
  err << json{{"error", code}, {"message", message}}.dump() << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Delay propagation forecasting on airport networks", "stpn"};
  app.set_version_flag("--version", STPN_VERSION);
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  app.add_option("-c,--config", config_path, "Key-value configuration file")->required();

  auto* ingest = app.add_subcommand("ingest", "Aggregate flight records (or generate synthetic data) into a dataset");
  bool synthetic = false;
  std::optional<std::uint64_t> seed;
  ingest->add_flag("--synthetic", synthetic, "Generate the seeded synthetic network instead of reading files");
  ingest->add_option("--seed", seed, "Generator seed (overrides synthetic.seed)");

  auto* build_graph = app.add_subcommand("build-graph", "Build the distance / O-D / D-O relations");

  auto* train_cmd = app.add_subcommand("train", "Fit the model and write a checkpoint");
  std::optional<std::size_t> epochs;
  train_cmd->add_option("--seed", seed, "Initialization and shuffling seed (overrides train.seed)");
  train_cmd->add_option("--epochs", epochs, "Epoch count (overrides train.epochs)");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a forecaster on the test segment");
  std::string baseline = "stpn";
  bool cumulative = false;
  std::string out_path;
  evaluate_cmd->add_option("--baseline,--model", baseline, "stpn, ha or var")
      ->check(CLI::IsMember({"stpn", "ha", "var"}));
  evaluate_cmd->add_flag("--agg", cumulative, "Average over steps 1..k instead of scoring step k alone");
  evaluate_cmd->add_option("-o,--out", out_path, "Also write the report to this file");

  auto* predict_cmd = app.add_subcommand("predict", "Forecast one window");
  std::string window_start;
  std::string input;
  auto* ws_opt = predict_cmd->add_option("--window-start", window_start, "First input slot, YYYY-MM-DDTHH:MM");
  predict_cmd->add_option("--input", input, "JSON file with raw delays (N x h x 2) and optional weather")
      ->excludes(ws_opt);

  auto* intervene_cmd = app.add_subcommand("intervene", "Zero the departure history of airports and compare");
  std::string airports;
  intervene_cmd->add_option("--window-start", window_start, "First input slot, YYYY-MM-DDTHH:MM");
  intervene_cmd->add_option("--airports", airports, "Comma-separated airport codes (may be empty)");

  auto* attention_cmd = app.add_subcommand("export-attention", "Write the temporal attention maps of one window");
  attention_cmd->add_option("--window-start", window_start, "First input slot, YYYY-MM-DDTHH:MM");
  attention_cmd->add_option("-o,--out", out_path, "Output file (default paths.attention)");

  auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP/JSON API");
  std::string host;
  std::optional<int> port;
  serve_cmd->add_option("--host", host, "Bind address (default serve.host)");
  serve_cmd->add_option("--port", port, "Port, 0 for an ephemeral one (default serve.port)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << STPN_VERSION << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    error_line(err, "usage", e.what());
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!fs::exists(config_path)) throw CliError("missing_config", "config file not found: " + config_path, 2, true);
    const Config cfg = Config::load(config_path);
    int exit_code = 0;
    json result;
    if (sub == ingest) {
      result = cmd_ingest(cfg, synthetic, seed);
    } else if (sub == build_graph) {
      result = cmd_build_graph(cfg);
    } else if (sub == train_cmd) {
      result = cmd_train(cfg, seed, epochs, err, exit_code);
    } else if (sub == evaluate_cmd) {
      out << cmd_evaluate(cfg, baseline, cumulative, out_path).dump(2) << '\n';
      return 0;
    } else if (sub == predict_cmd) {
      result = cmd_predict(cfg, window_start, input);
    } else if (sub == intervene_cmd) {
      std::vector<std::string> codes;
      for (auto& c : CLI::detail::split(airports, ','))
        if (auto t = CLI::detail::trim_copy(c); !t.empty()) codes.push_back(t);
      result = cmd_intervene(cfg, window_start, codes);
    } else if (sub == attention_cmd) {
      result = cmd_export_attention(cfg, window_start, out_path);
    } else {
      return cmd_serve(cfg, host, port, out);
    }
    out << result.dump() << '\n';
    return exit_code;
  } catch (const CliError& e) {
    if (e.usage) err << sub->help();
    error_line(err, e.code, e.what());
    return e.exit_code;
  } catch (const ConfigError& e) {
    error_line(err, "config", e.what());
    return 1;
  } catch (const UnknownAirportError& e) {
    error_line(err, "unknown_airport", e.what());
    return 1;
  } catch (const ShapeError& e) {
    error_line(err, "shape", e.what());
    return 1;
  } catch (const FormatError& e) {
    error_line(err, "format", e.what());
    return 1;
  } catch (const DegenerateChannelError& e) {
    error_line(err, "degenerate_channel", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    error_line(err, "invalid_argument", e.what());
    return 1;
  } catch (const std::exception& e) {
    error_line(err, "runtime", e.what());
    return 1;
  }
}

}  // namespace stpn::tools
