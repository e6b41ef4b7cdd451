#include "disenkgat/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <iterator>

#include <openssl/evp.h>

#include "disenkgat/errors.hpp"

namespace disenkgat {

namespace {

constexpr std::string_view kMagic = "DKGATCKP";
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <class T>
  void pod(T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void str(std::string_view s) {
    pod<std::uint64_t>(s.size());
    out_.append(s);
  }
  void tensors(const ParamSet& set) {
    pod<std::uint64_t>(set.size());
    for (const auto& [name, t] : set) {
      str(name);
      pod<std::uint64_t>(t.rank());
      for (std::size_t d : t.shape()) pod<std::uint64_t>(d);
      out_.append(reinterpret_cast<const char*>(t.data().data()), t.size() * sizeof(double));
    }
  }
  std::string take() { return std::move(out_); }
  void raw(std::string_view s) { out_.append(s); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::string_view bytes(std::size_t n) {
    if (n > in_.size() - pos_) throw DataError("checkpoint is truncated");
    const std::string_view s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <class T>
  T pod() {
    T value;
    std::memcpy(&value, bytes(sizeof(T)).data(), sizeof(T));
    return value;
  }
  std::string str() { return std::string(bytes(pod<std::uint64_t>())); }
  ParamSet tensors() {
    ParamSet set;
    const auto count = pod<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
      std::string name = str();
      const auto rank = pod<std::uint64_t>();
      if (rank > 8) throw DataError("checkpoint tensor '" + name + "' has implausible rank");
      Shape shape(rank);
      for (auto& d : shape) d = pod<std::uint64_t>();
      const std::size_t n = shape_numel(shape);
      if (n > (in_.size() - pos_) / sizeof(double)) throw DataError("checkpoint is truncated");
      std::vector<double> values(n);
      std::memcpy(values.data(), bytes(n * sizeof(double)).data(), n * sizeof(double));
      set.emplace(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    return set;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j = {{"epoch", r.epoch}, {"step", r.step}, {"loss", r.loss},
                      {"bce", r.bce},     {"mi", r.mi},     {"q_nll", r.q_nll}};
  if (r.valid) j["valid"] = to_json(*r.valid);
  return j;
}

EpochRecord epoch_record_from_json(const nlohmann::json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.step = j.at("step").get<std::uint64_t>();
  r.loss = j.at("loss").get<double>();
  r.bce = j.at("bce").get<double>();
  r.mi = j.at("mi").get<double>();
  r.q_nll = j.at("q_nll").get<double>();
  if (j.contains("valid")) r.valid = metrics_from_json(j.at("valid"));
  return r;
}

std::string serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  w.raw(kMagic);
  w.pod<std::uint32_t>(kVersion);
  w.str(to_json(c.config).dump());
  w.str(c.meta.dump());
  nlohmann::json history = nlohmann::json::array();
  for (const EpochRecord& r : c.history) history.push_back(to_json(r));
  w.str(history.dump());
  w.pod<std::uint64_t>(c.step);
  w.pod<std::uint64_t>(c.epoch);
  w.tensors(c.params);
  w.tensors(c.q_params);
  return w.take();
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  try {
    c.config = train_config_from_json(nlohmann::json::parse(r.str()));
    c.meta = nlohmann::json::parse(r.str());
    for (const auto& j : nlohmann::json::parse(r.str())) c.history.push_back(epoch_record_from_json(j));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("corrupt checkpoint configuration: ") + e.what());
  }
  c.step = r.pod<std::uint64_t>();
  c.epoch = r.pod<std::uint64_t>();
  c.params = r.tensors();
  c.q_params = r.tensors();
  if (!r.done()) throw DataError("checkpoint has trailing bytes");
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  const std::string bytes = serialize_checkpoint(checkpoint);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_checkpoint(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void check_compatible(const Checkpoint& checkpoint, const KnowledgeGraph& graph) {
  const auto rows = [&](const char* name) -> std::size_t {
    const auto it = checkpoint.params.find(name);
    if (it == checkpoint.params.end() || it->second.rank() != 2) {
      throw DataError(std::string("checkpoint lacks parameter table '") + name + "'");
    }
    return it->second.dim(0);
  };
  const std::size_t entities = rows("entity.features");
  const std::size_t relations = rows("relation.embedding");
  if (entities != graph.num_entities() || relations != graph.num_relations()) {
    throw DataError("checkpoint was trained on " + std::to_string(entities) + " entities and " +
                    std::to_string(relations) + " augmented relations; the dataset has " +
                    std::to_string(graph.num_entities()) + " and " +
                    std::to_string(graph.num_relations()));
  }
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

std::string checkpoint_digest(const Checkpoint& checkpoint) {
  return sha256_hex(serialize_checkpoint(checkpoint));
}

}  // namespace disenkgat
