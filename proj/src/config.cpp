#include "disenkgat/config.hpp"

#include <string>

#include "disenkgat/errors.hpp"

namespace disenkgat {

MacroMode parse_macro_mode(std::string_view name) {
  if (name == "club") return MacroMode::Club;
  if (name == "hsic") return MacroMode::Hsic;
  if (name == "none") return MacroMode::None;
  throw ConfigError("unknown macro mode '" + std::string(name) + "' (expected club, hsic or none)");
}

std::string_view to_string(MacroMode mode) {
  switch (mode) {
    case MacroMode::Club: return "club";
    case MacroMode::Hsic: return "hsic";
    case MacroMode::None: return "none";
  }
  return "?";
}

void TrainConfig::validate() const {
  const EncoderConfig& e = model.encoder;
  if (e.components == 0) throw ConfigError("components must be >= 1");
  if (e.component_dim == 0) throw ConfigError("component_dim must be >= 1");
  if (e.dropout < 0.0 || e.dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (mi_weight < 0.0) throw ConfigError("lambda must be >= 0");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw ConfigError("label_smoothing must lie in [0, 1)");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (macro == MacroMode::Club && batch_size < 2) {
    throw ConfigError("batch_size must be >= 2 with the club regularizer");
  }
  if (!(learning_rate > 0.0) || !(q_learning_rate > 0.0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (model.decoder.score == ScoreFunction::ConvE) conve_reshape(model.decoder.conve, e.component_dim);
}

nlohmann::json to_json(const TrainConfig& c) {
  const EncoderConfig& e = c.model.encoder;
  const ConvEConfig& v = c.model.decoder.conve;
  return {
      {"components", e.components},
      {"component_dim", e.component_dim},
      {"input_dim", e.input_dim},
      {"layers", e.layers},
      {"operator", std::string(to_string(e.op))},
      {"activation", std::string(to_string(e.activation))},
      {"dropout", e.dropout},
      {"scaled_attention", e.scaled_attention},
      {"micro", e.micro},
      {"score_fn", std::string(to_string(c.model.decoder.score))},
      {"conve_rows", v.rows},
      {"conve_cols", v.cols},
      {"conve_kernel", v.kernel},
      {"conve_filters", v.filters},
      {"conve_input_dropout", v.input_dropout},
      {"conve_feature_dropout", v.feature_dropout},
      {"conve_hidden_dropout", v.hidden_dropout},
      {"conve_entity_bias", v.entity_bias},
      {"lambda", c.mi_weight},
      {"macro", std::string(to_string(c.macro))},
      {"batch_size", c.batch_size},
      {"learning_rate", c.learning_rate},
      {"q_learning_rate", c.q_learning_rate},
      {"label_smoothing", c.label_smoothing},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"patience", c.patience},
      {"eval_every", c.eval_every},
      {"hsic_bandwidth", c.hsic_bandwidth},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base) {
  if (!j.is_object()) throw ConfigError("training configuration must be a JSON object");
  TrainConfig c = std::move(base);
  EncoderConfig& e = c.model.encoder;
  ConvEConfig& v = c.model.decoder.conve;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "components") e.components = value.get<std::size_t>();
      else if (key == "component_dim") e.component_dim = value.get<std::size_t>();
      else if (key == "input_dim") e.input_dim = value.get<std::size_t>();
      else if (key == "layers") e.layers = value.get<std::size_t>();
      else if (key == "operator") e.op = parse_composition(value.get<std::string>());
      else if (key == "activation") e.activation = parse_activation(value.get<std::string>());
      else if (key == "dropout") e.dropout = value.get<double>();
      else if (key == "scaled_attention") e.scaled_attention = value.get<bool>();
      else if (key == "micro") e.micro = value.get<bool>();
      else if (key == "score_fn") c.model.decoder.score = parse_score_function(value.get<std::string>());
      else if (key == "conve_rows") v.rows = value.get<std::size_t>();
      else if (key == "conve_cols") v.cols = value.get<std::size_t>();
      else if (key == "conve_kernel") v.kernel = value.get<std::size_t>();
      else if (key == "conve_filters") v.filters = value.get<std::size_t>();
      else if (key == "conve_input_dropout") v.input_dropout = value.get<double>();
      else if (key == "conve_feature_dropout") v.feature_dropout = value.get<double>();
      else if (key == "conve_hidden_dropout") v.hidden_dropout = value.get<double>();
      else if (key == "conve_entity_bias") v.entity_bias = value.get<bool>();
      else if (key == "lambda") c.mi_weight = value.get<double>();
      else if (key == "macro") c.macro = parse_macro_mode(value.get<std::string>());
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "q_learning_rate") c.q_learning_rate = value.get<double>();
      else if (key == "label_smoothing") c.label_smoothing = value.get<double>();
      else if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "patience") c.patience = value.get<std::size_t>();
      else if (key == "eval_every") c.eval_every = value.get<std::size_t>();
      else if (key == "hsic_bandwidth") c.hsic_bandwidth = value.get<double>();
      else throw ConfigError("unknown configuration key '" + key + "'");
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError("configuration key '" + key + "': " + ex.what());
    }
  }
  return c;
}

}  // namespace disenkgat
