#include <doctest.h>

#include <bit>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stpn/checkpoint.hpp"
#include "stpn/container.hpp"
#include "stpn/inference.hpp"
#include "stpn/synthetic.hpp"
#include "stpn/train.hpp"
#include "support.hpp"

using namespace stpn;
using namespace stpn::testing;

namespace {

ModelConfig small_model() {
  ModelConfig c = tiny_config();
  c.nodes = 5;
  c.h = 6;
  c.p = 3;
  c.weather_categories = 8;
  return c;
}

struct Fixture {
  Dataset dataset;
  MultiGraph graph;
};

Fixture tiny_fixture(std::uint64_t seed = 7, std::size_t days = 6) {
  SyntheticOptions o;
  o.seed = seed;
  o.airports = 5;
  o.days = days;
  const SyntheticData syn = gen_synthetic(o);
  Fixture f{synthetic_dataset(syn), {}};
  f.graph = build_multigraph(f.dataset.airports, f.dataset.train_flow);
  return f;
}

Checkpoint golden_checkpoint() {
  Checkpoint ck;
  ck.config = tiny_config();
  ck.zscore.mean = {1.5, -2.0};
  ck.zscore.stddev = {10.0, 8.0};
  ck.params = init_params(ck.config, 0);
  ck.training = {{"seed", 0}, {"epochs_run", 0}};
  return ck;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::uint64_t le(std::string_view b, std::size_t at, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) v |= std::uint64_t(static_cast<unsigned char>(b[at + i])) << (8 * i);
  return v;
}

}  // namespace

TEST_SUITE("train_eval") {

TEST_CASE("zero epochs return the initial parameters") {
  const Fixture f = tiny_fixture();
  TrainOptions o;
  o.epochs = 0;
  o.seed = 3;
  const TrainResult r = train(small_model(), f.dataset, f.graph, o);
  const auto init = init_params(small_model(), 3);
  CHECK(r.history.empty());
  CHECK_FALSE(r.aborted);
  for (const auto& p : init) CHECK(r.checkpoint.params.at(p.name).value == p.value);
  CHECK(r.checkpoint.training.at("epochs_run") == 0);
}

TEST_CASE("default learning rate") { CHECK(TrainOptions{}.adam.lr == 0.001); }

TEST_CASE("training loss falls over the first five epochs for most seeds") {
  const Fixture f = tiny_fixture();
  int monotone = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainOptions o;
    o.epochs = 5;
    o.seed = seed;
    o.batch_size = 16;
    const TrainResult r = train(small_model(), f.dataset, f.graph, o);
    REQUIRE(r.history.size() == 5);
    bool ok = true;
    for (std::size_t e = 1; e < 5; ++e) ok = ok && r.history[e].train_loss <= r.history[e - 1].train_loss;
    std::ostringstream losses;
    for (const auto& h : r.history) losses << h.train_loss << " ";
    MESSAGE("seed " << seed << ": " << losses.str());
    monotone += ok;
  }
  CHECK(monotone >= 4);
}

TEST_CASE("training is deterministic for a seed") {
  const Fixture f = tiny_fixture();
  TrainOptions o;
  o.epochs = 2;
  o.seed = 11;
  const auto a = train(small_model(), f.dataset, f.graph, o);
  const auto b = train(small_model(), f.dataset, f.graph, o);
  CHECK(checkpoint_bytes(a.checkpoint) == checkpoint_bytes(b.checkpoint));
}

TEST_CASE("best validation parameters are kept") {
  const Fixture f = tiny_fixture(8, 10);
  TrainOptions o;
  o.epochs = 4;
  o.seed = 1;
  const auto r = train(small_model(), f.dataset, f.graph, o);
  double best = INFINITY;
  for (const auto& h : r.history) best = std::min(best, h.val_rmse);
  const auto supports = model_supports(small_model(), f.graph);
  const double got = validation_rmse(small_model(), r.checkpoint.params, supports, f.dataset.zscore,
                                     f.dataset.val_windows({6, 3, 1}));
  const double init = validation_rmse(small_model(), init_params(small_model(), 1), supports, f.dataset.zscore,
                                      f.dataset.val_windows({6, 3, 1}));
  CHECK(got == doctest::Approx(std::min(best, init)).epsilon(1e-12));
  CHECK(r.checkpoint.training.at("best_val_rmse").get<double>() == doctest::Approx(got).epsilon(1e-12));
}

TEST_CASE("a divergent run aborts and keeps the last good parameters") {
  const Fixture f = tiny_fixture();
  TrainOptions o;
  o.epochs = 3;
  o.adam.lr = 1e300;
  const auto r = train(small_model(), f.dataset, f.graph, o);
  CHECK(r.aborted);
  CHECK_FALSE(r.abort_reason.empty());
  for (const auto& p : r.checkpoint.params) CHECK(all_finite(ad::flat(p.value)));
  CHECK(r.checkpoint.training.at("aborted") == true);
}

TEST_CASE("train rejects mismatched inputs") {
  const Fixture f = tiny_fixture();
  ModelConfig c = small_model();
  c.weather_categories = 3;
  CHECK_THROWS_AS(train(c, f.dataset, f.graph, {}), std::invalid_argument);
  c = small_model();
  c.relations = 2;
  CHECK_THROWS(train(c, f.dataset, f.graph, {}));
}

TEST_CASE("checkpoint round trip reproduces predictions") {
  Rng rng(81);
  Checkpoint ck = golden_checkpoint();
  ck.optimizer = OptimizerState{{}, 17, {}};
  for (const auto& p : ck.params) ck.optimizer->moments[p.name] = {ad::zeros_like(p.value), ad::zeros_like(p.value)};
  const auto path = std::filesystem::temp_directory_path() / "stpn_ck_roundtrip.ckpt";
  save_checkpoint(ck, path);
  const Checkpoint back = load_checkpoint(path);
  std::filesystem::remove(path);
  CHECK(param_signature(back.params) == param_signature(ck.params));
  CHECK(back.optimizer->step == 17);
  CHECK(back.zscore.mean == ck.zscore.mean);
  CHECK(back.training == ck.training);
  const auto sup = diffusion_supports(random_graph(rng, 5), 1, true);
  const WindowInput w = random_window(rng, ck.config, 5);
  const Tensor3 a = predict(ck.config, ck.params, sup, w.input());
  const Tensor3 b = predict(back.config, back.params, sup, w.input());
  CHECK(max_abs_difference(a.values(), b.values()) <= 1e-12);
  CHECK(checkpoint_bytes(back) == checkpoint_bytes(ck));
}

TEST_CASE("checkpoint byte layout decodes independently") {
  const Checkpoint ck = golden_checkpoint();
  const std::string b = checkpoint_bytes(ck);
  REQUIRE(b.size() > 20);
  CHECK(b.substr(0, 8) == "STPNCKPT");
  CHECK(le(b, 8, 4) == kCheckpointFormatVersion);
  const std::size_t header_len = le(b, 12, 8);
  const auto header = nlohmann::json::parse(b.substr(20, header_len));
  CHECK(header.at("format") == "stpn-checkpoint");
  const std::size_t base = 20 + header_len;
  CHECK(b.size() == base + 8 * header.at("payload_doubles").get<std::size_t>());
  for (const auto& e : header.at("tensors")) {
    const std::string name = e.at("name");
    REQUIRE(name.starts_with("param/"));
    const Matrix& m = std::get<Matrix>(ck.params.at(name.substr(6)).value);
    const auto shape = e.at("shape").get<std::vector<std::size_t>>();
    CHECK(shape == std::vector<std::size_t>{m.rows(), m.cols()});
    const std::size_t off = e.at("offset").get<std::size_t>();
    for (std::size_t i = 0; i < m.values().size(); ++i)
      CHECK(std::bit_cast<double>(le(b, base + 8 * (off + i), 8)) == m.values()[i]);
  }
}

TEST_CASE("checkpoint bytes match the golden file") {
  const std::filesystem::path golden = std::filesystem::path(STPN_TEST_DIR) / "golden" / "checkpoint_tiny.ckpt";
  const std::string bytes = checkpoint_bytes(golden_checkpoint());
  if (std::getenv("STPN_REGENERATE_GOLDEN")) {
    std::filesystem::create_directories(golden.parent_path());
    std::ofstream(golden, std::ios::binary) << bytes;
  }
  REQUIRE(std::filesystem::exists(golden));
  CHECK(read_bytes(golden) == bytes);
}

TEST_CASE("damaged checkpoints are rejected") {
  const std::string good = checkpoint_bytes(golden_checkpoint());
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(parse_checkpoint(bad_magic), FormatError);
  std::string bad_version = good;
  bad_version[8] = 9;
  CHECK_THROWS_AS(parse_checkpoint(bad_version), FormatError);
  std::string bad_header = good;
  bad_header[20] = '#';
  CHECK_THROWS_AS(parse_checkpoint(bad_header), FormatError);
  CHECK_THROWS_AS(parse_checkpoint(std::string_view(good).substr(0, good.size() - 8)), FormatError);
  CHECK_THROWS_AS(parse_checkpoint(std::string_view(good).substr(0, 10)), FormatError);
  CHECK_THROWS(load_checkpoint("/nonexistent/model.ckpt"));
}

Predictor make_predictor(const Dataset& ds, const MultiGraph& g) {
  Checkpoint ck;
  ck.config = small_model();
  ck.zscore = ds.zscore;
  ck.params = init_params(ck.config, 5);
  return Predictor(std::move(ck), std::make_shared<Dataset>(ds), g);
}

TEST_CASE("empty intervention changes nothing") {
  const Fixture f = tiny_fixture(9, 8);
  const Predictor pr = make_predictor(f.dataset, f.graph);
  const std::size_t start = f.dataset.test_windows({6, 3, 1}).starts().front();
  const auto r = intervene(pr, f.dataset.delays->timeline.at(start), {});
  for (double v : r.delta.values()) CHECK(v == 0.0);
  CHECK(r.factual == r.counterfactual);
  CHECK(r.target_times.size() == 3);
  CHECK(r.target_times[0] == f.dataset.delays->timeline.at(start + 6));
}

TEST_CASE("zeroing an already zero, fully observed history changes nothing") {
  const Fixture f = tiny_fixture(9, 8);
  DelayTensor d = *f.dataset.delays;
  const std::size_t start = f.dataset.split.val_end + 4;
  for (std::size_t n = 0; n < d.nodes(); ++n)
    for (std::size_t t = start; t < start + 6; ++t)
      for (std::size_t c = 0; c < 2; ++c) {
        d.values(n, t, c) = 0.0;
        d.mask.set(n, t, c, true);
      }
  Dataset ds = f.dataset;
  ds.delays = std::make_shared<const DelayTensor>(std::move(d));
  const Predictor pr = make_predictor(ds, f.graph);
  const auto r = intervene(pr, ds.delays->timeline.at(start), pr.airport_codes());
  for (double v : r.delta.values()) CHECK(v == 0.0);
}

TEST_CASE("intervention delta is factual minus counterfactual") {
  const Fixture f = tiny_fixture(9, 8);
  const Predictor pr = make_predictor(f.dataset, f.graph);
  const std::size_t start = f.dataset.test_windows({6, 3, 1}).starts().front();
  const Timestamp ts = f.dataset.delays->timeline.at(start);
  const auto r = intervene(pr, ts, {pr.airport_codes()[0], pr.airport_codes()[3]});
  bool any = false;
  for (std::size_t i = 0; i < r.delta.values().size(); ++i) {
    CHECK(r.delta.values()[i] == r.factual.values()[i] - r.counterfactual.values()[i]);
    any = any || r.delta.values()[i] != 0.0;
  }
  CHECK(any);
  CHECK(r.factual == predict_at(pr, ts).minutes);

  // The counterfactual is the model run on the edited window.
  const Sample s = make_sample(*f.dataset.delays, *f.dataset.covariates, start, 6, 0);
  Tensor3 x = s.input;
  Mask3 m = s.input_mask;
  for (std::size_t n : {0u, 3u})
    for (std::size_t t = 0; t < 6; ++t) {
      x(n, t, kDeparture) = 0.0;
      m.set(n, t, kDeparture, true);
    }
  const auto pos_out = slot_positions(f.dataset.delays->timeline, start + 6, 3);
  CHECK(r.counterfactual == pr.predict_minutes(x, m, s.covariates, s.pos_in, pos_out));

  const auto j = r.to_json();
  CHECK(j.at("intervened") == nlohmann::json({pr.airport_codes()[0], pr.airport_codes()[3]}));
  CHECK(j.contains("delta"));
}

TEST_CASE("unknown airports and windows are rejected") {
  const Fixture f = tiny_fixture(9, 8);
  const Predictor pr = make_predictor(f.dataset, f.graph);
  const Timestamp ts = f.dataset.delays->timeline.at(f.dataset.split.val_end);
  try {
    intervene(pr, ts, {"NOPE"});
    FAIL("expected UnknownAirportError");
  } catch (const UnknownAirportError& e) {
    CHECK(e.code() == "NOPE");
    CHECK(std::string(e.what()).find(pr.airport_codes()[0]) != std::string::npos);
  }
  CHECK_THROWS_AS(intervene(pr, ts + 7, {}), std::invalid_argument);
  CHECK_THROWS_AS(intervene(pr, f.dataset.delays->timeline.at(f.dataset.delays->steps() - 2), {}),
                  std::invalid_argument);
}

TEST_CASE("attention export") {
  const Fixture f = tiny_fixture(9, 8);
  const Predictor pr = make_predictor(f.dataset, f.graph);
  const Timestamp ts = f.dataset.delays->timeline.at(f.dataset.split.val_end);
  const AttentionExport a = export_attention(pr, ts);
  REQUIRE(a.maps.layers.size() == 3);
  for (const auto& layer : a.maps.layers) {
    CHECK(layer.size() == small_model().heads);
    for (const auto& m : layer)
      for (std::size_t o = 0; o < m.cols(); ++o) {
        double s = 0.0;
        for (std::size_t t = 0; t < m.rows(); ++t) s += m(t, o);
        CHECK(std::abs(s - 1.0) < 1e-9);
      }
  }
  const auto path = std::filesystem::temp_directory_path() / "stpn_attention.stpn";
  save_attention(a, path);
  const AttentionExport back = load_attention(path);
  std::filesystem::remove(path);
  CHECK(back.window_start == ts);
  CHECK(back.maps.layers.size() == 3);
  CHECK(back.maps.layers[2][1] == a.maps.layers[2][1]);
  CHECK(back.to_json() == a.to_json());
}

TEST_CASE("evaluate rejects an empty test segment") {
  const Fixture f = tiny_fixture(9, 2);
  CHECK_THROWS_AS(evaluate(Forecaster::ha, f.dataset, 12, 12, nullptr), std::invalid_argument);
}

}  // TEST_SUITE
