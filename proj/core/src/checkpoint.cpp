#include "stpn/checkpoint.hpp"

#include "stpn/container.hpp"

namespace stpn {

namespace {

constexpr std::string_view kMagic = "STPNCKPT";

const Matrix& as_matrix(const ad::Value& v, const std::string& name) {
  if (const auto* m = std::get_if<Matrix>(&v)) return *m;
  throw ShapeError("checkpoint: tensor-valued entry '" + name + "' is not supported");
}

}  // namespace

std::string checkpoint_bytes(const Checkpoint& ck) {
  ContainerWriter w(kMagic, kCheckpointFormatVersion);
  auto& m = w.meta();
  m["format"] = "stpn-checkpoint";
  m["config"] = ck.config.to_json();
  m["zscore"] = {{"mean", ck.zscore.mean}, {"stddev", ck.zscore.stddev}};
  m["training"] = ck.training;
  nlohmann::json names = nlohmann::json::array();
  for (const auto& p : ck.params) {
    names.push_back(p.name);
    w.add("param/" + p.name, as_matrix(p.value, p.name));
  }
  m["params"] = names;
  if (ck.optimizer) {
    const auto& o = *ck.optimizer;
    m["optimizer"] = {{"kind", "adam"},
                      {"lr", o.options.lr},
                      {"beta1", o.options.beta1},
                      {"beta2", o.options.beta2},
                      {"eps", o.options.eps},
                      {"clip_norm", o.options.clip_norm},
                      {"step", o.step}};
    for (const auto& [name, mom] : o.moments) {
      w.add("adam/m/" + name, as_matrix(mom.first, name));
      w.add("adam/v/" + name, as_matrix(mom.second, name));
    }
  }
  return w.bytes();
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_file(path, checkpoint_bytes(ck));
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  auto r = ContainerReader::parse(bytes, kMagic, kCheckpointFormatVersion);
  try {
    const auto& m = r.meta();
    Checkpoint ck;
    ck.config = ModelConfig::from_json(m.at("config"));
    ck.zscore.mean = m.at("zscore").at("mean").get<std::array<double, 2>>();
    ck.zscore.stddev = m.at("zscore").at("stddev").get<std::array<double, 2>>();
    ck.training = m.at("training");
    for (const auto& name : m.at("params")) {
      const auto n = name.get<std::string>();
      ck.params.add(n, r.matrix("param/" + n));
    }
    check_params(ck.config, ck.params);
    if (m.contains("optimizer")) {
      const auto& o = m.at("optimizer");
      OptimizerState st;
      st.options.lr = o.at("lr").get<double>();
      st.options.beta1 = o.at("beta1").get<double>();
      st.options.beta2 = o.at("beta2").get<double>();
      st.options.eps = o.at("eps").get<double>();
      st.options.clip_norm = o.at("clip_norm").get<double>();
      st.step = o.at("step").get<std::uint64_t>();
      for (const auto& p : ck.params)
        if (r.contains("adam/m/" + p.name))
          st.moments[p.name] = {r.matrix("adam/m/" + p.name), r.matrix("adam/v/" + p.name)};
      ck.optimizer = std::move(st);
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw FormatError(std::string("checkpoint is missing an entry: ") + e.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return parse_checkpoint(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace stpn
