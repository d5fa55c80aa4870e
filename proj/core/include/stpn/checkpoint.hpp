#pragma once

// Trained model artifact: config, normalization statistics, named parameters,
// optional optimizer state and training metadata in one versioned container.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "stpn/autodiff.hpp"
#include "stpn/data.hpp"
#include "stpn/model.hpp"

namespace stpn {

struct OptimizerState {
  ad::AdamOptions options;
  std::uint64_t step = 0;
  std::map<std::string, ad::Adam::Moments> moments;
};

struct Checkpoint {
  ModelConfig config;
  ZScore zscore;
  ad::ParamStore params;
  std::optional<OptimizerState> optimizer;
  /// seed, epochs, best validation RMSE and anything else worth keeping.
  nlohmann::json training = nlohmann::json::object();
};

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

std::string checkpoint_bytes(const Checkpoint& checkpoint);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint parse_checkpoint(std::string_view bytes);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stpn
