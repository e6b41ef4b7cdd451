#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include <nlohmann/json.hpp>

#include "disenkgat/model.hpp"

namespace disenkgat {

/// Independence regularizer between components.
enum class MacroMode { Club, Hsic, None };

MacroMode parse_macro_mode(std::string_view name);
std::string_view to_string(MacroMode mode);

struct TrainConfig {
  ModelConfig model;
  double mi_weight = 0.01;  // lambda
  MacroMode macro = MacroMode::Club;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  double q_learning_rate = 1e-3;
  double label_smoothing = 0.1;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  std::size_t patience = 0;    // epochs without validation gain before stopping; 0 = never
  std::size_t eval_every = 1;  // validation interval in epochs; 0 = never
  double hsic_bandwidth = 0.0; // <= 0: median heuristic

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Flat key/value form, e.g. {"components": 4, "operator": "cross", ...}.
nlohmann::json to_json(const TrainConfig& config);
/// Overlays the keys present in `j` onto `base`; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

}  // namespace disenkgat
