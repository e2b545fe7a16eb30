#include "scanents/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace scanents {

namespace {
constexpr const char* kFormat = "scanents-checkpoint";
constexpr int kVersion = 1;
}  // namespace

std::string checkpoint_to_string(const CheckpointData& ckpt) {
  nlohmann::ordered_json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["model"] = ckpt.model_kind;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  for (const auto& [k, v] : ckpt.meta) meta[k] = v;
  j["meta"] = std::move(meta);
  j["vocab"] = ckpt.vocab_words;
  j["classes"] = ckpt.class_labels;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  for (const auto& [name, shape, data] : ckpt.params) {
    nlohmann::ordered_json p;
    p["shape"] = shape;
    p["data"] = data;
    params[name] = std::move(p);
  }
  j["params"] = std::move(params);
  return j.dump();
}

CheckpointData checkpoint_from_string(const std::string& text) {
  // ordered parse keeps the parameter section in creation order, which makes
  // save/load/save byte-stable.
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::ordered_json::exception& e) {
    throw CheckpointMismatch(std::string("invalid checkpoint JSON: ") + e.what());
  }
  if (j.value("format", "") != kFormat)
    throw CheckpointMismatch("not a scanents checkpoint");
  if (j.value("version", -1) != kVersion)
    throw CheckpointMismatch("unsupported checkpoint version");
  CheckpointData out;
  out.model_kind = j.at("model").get<std::string>();
  for (const auto& [k, v] : j.at("meta").items()) out.meta[k] = v.get<std::string>();
  out.vocab_words = j.at("vocab").get<std::vector<std::string>>();
  out.class_labels = j.at("classes").get<std::vector<std::string>>();
  for (const auto& [name, p] : j.at("params").items()) {
    out.params.emplace_back(name, p.at("shape").get<ad::Shape>(),
                            p.at("data").get<std::vector<double>>());
  }
  return out;
}

void save_checkpoint(const CheckpointData& ckpt, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint to " + path);
  out << checkpoint_to_string(ckpt);
  if (!out) throw IoError("failed writing checkpoint to " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint from " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_string(buf.str());
}

void restore_params(const CheckpointData& ckpt, ad::ParamStore& store,
                    const std::string& prefix) {
  int restored = 0;
  for (const auto& [name, shape, data] : ckpt.params) {
    if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
    if (!store.has(name))
      throw CheckpointMismatch("checkpoint parameter " + name + " unknown to this model");
    ad::Tensor t = store.get(name);
    if (t.shape() != shape)
      throw CheckpointMismatch("shape mismatch for " + name + ": model " +
                               ad::shape_str(t.shape()) + " vs checkpoint " +
                               ad::shape_str(shape));
    t.mutable_values() = data;
    ++restored;
  }
  if (restored == 0)
    throw CheckpointMismatch("no parameters matched prefix '" + prefix + "'");
}

std::vector<std::tuple<std::string, ad::Shape, std::vector<double>>> snapshot_params(
    const ad::ParamStore& store) {
  std::vector<std::tuple<std::string, ad::Shape, std::vector<double>>> out;
  for (const auto& e : store.entries())
    out.emplace_back(e.name, e.tensor.shape(), e.tensor.values());
  return out;
}

}  // namespace scanents
