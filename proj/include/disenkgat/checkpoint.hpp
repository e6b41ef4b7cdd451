#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "disenkgat/config.hpp"
#include "disenkgat/evaluator.hpp"
#include "disenkgat/kg_store.hpp"
#include "disenkgat/params.hpp"

namespace disenkgat {

/// One line of the per-epoch metric log. Holds no wall-clock values so that
/// logs of identically seeded runs compare equal byte for byte.
struct EpochRecord {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double loss = 0.0;   // mean objective over the epoch's batches
  double bce = 0.0;
  double mi = 0.0;     // mean regularizer value (nats for club)
  double q_nll = 0.0;  // mean Q negative log-likelihood before each fit step
  std::optional<Metrics> valid;
};

nlohmann::json to_json(const EpochRecord& r);
EpochRecord epoch_record_from_json(const nlohmann::json& j);

struct Checkpoint {
  TrainConfig config;
  nlohmann::json meta = nlohmann::json::object();  // dataset path and sizes
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  ParamSet params;
  ParamSet q_params;
  std::vector<EpochRecord> history;
};

/// Binary encoding: magic, version, JSON sections, then raw tensors by name.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Throws DataError for missing, truncated or foreign files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws DataError unless `graph` has the entity and relation counts the
/// checkpoint's parameter tables were built for.
void check_compatible(const Checkpoint& checkpoint, const KnowledgeGraph& graph);

std::string sha256_hex(std::string_view bytes);
/// SHA-256 of the serialized checkpoint.
std::string checkpoint_digest(const Checkpoint& checkpoint);

}  // namespace disenkgat
