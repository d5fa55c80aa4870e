#pragma once

// HTTP/JSON API over a loaded predictor. Handlers are plain functions of the
// request body so they can be exercised without a socket.

#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "stpn/inference.hpp"

namespace httplib {
class Server;
}

namespace stpn::tools {

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// Problem document: {"schema_version", "status", "code", "title", "detail"}.
ApiResponse problem(int status, const std::string& code, const std::string& detail);

class Service {
 public:
  Service(std::shared_ptr<const Predictor> predictor, std::optional<AttentionExport> attention,
          std::string version);

  ApiResponse model() const;
  ApiResponse airports() const;
  ApiResponse predict(const std::string& body) const;
  ApiResponse intervene(const std::string& body) const;
  /// Latest export, or a fresh one for `window_start` when given.
  ApiResponse attention(const std::string& window_start = {}) const;

  /// Registers every route on `server`.
  void mount(httplib::Server& server) const;

  const Predictor& predictor() const { return *predictor_; }
  /// {"name", "version", "checkpoint_format"}, attached to predictions.
  nlohmann::json model_info() const;

 private:
  std::shared_ptr<const Predictor> predictor_;
  std::optional<AttentionExport> attention_;
  std::string version_;
};

/// Raw-array request: "delays" N x h x 2 (null = unobserved), optional
/// "weather" N x h codes and "first_slot" (slot of day of the first input
/// step). Dimension problems throw ShapeError.
struct RawWindow {
  Tensor3 x;
  Mask3 mask;
  std::vector<int> weather;
  std::vector<int> pos_in;
  std::vector<int> pos_out;
};
RawWindow parse_raw_window(const nlohmann::json& request, const ModelConfig& config, std::size_t nodes);

/// First input slot of the first test window; a sensible default window.
Timestamp default_window_start(const Predictor& predictor);

}  // namespace stpn::tools
