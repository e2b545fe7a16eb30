#include "scanents/corpus_stats.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace scanents {

namespace {

// Count of class-label instances within one scene.
std::map<std::string, int> class_counts(const Scene& s) {
  std::map<std::string, int> counts;
  for (const auto& o : s.objects) ++counts[o.class_label];
  return counts;
}

}  // namespace

CorpusStats compute_stats(const std::vector<GroundedUtterance>& corpus,
                          const std::map<std::string, Scene>& scenes) {
  CorpusStats st;
  long total_tokens = 0;
  long anchor_refs = 0;
  long unique_anchor_refs = 0;

  for (const auto& u : corpus) {
    auto it = scenes.find(u.scene_id);
    if (it == scenes.end())
      throw MissingScene("utterance " + u.id + " references missing scene " + u.scene_id);
    const Scene& scene = it->second;
    validate_against(u, scene);
    const auto counts = class_counts(scene);

    ++st.n_utterances;
    total_tokens += static_cast<long>(u.tokens.size());
    ++st.entities_per_utterance_histogram[static_cast<int>(u.entities.size())];
    for (const auto& e : u.entities) {
      ++st.n_entities;
      st.n_annotated_objects += static_cast<long>(e.object_ids.size());
      if (e.is_target) continue;
      for (int oid : e.object_ids) {
        const auto& cls = scene.object_by_id(oid).class_label;
        ++anchor_refs;
        ++st.anchor_class_frequency[cls];
        if (counts.at(cls) == 1) ++unique_anchor_refs;
      }
    }
  }

  st.avg_objects_per_entity =
      st.n_entities > 0 ? static_cast<double>(st.n_annotated_objects) / st.n_entities : 0.0;
  st.unique_anchor_fraction =
      anchor_refs > 0 ? static_cast<double>(unique_anchor_refs) / anchor_refs : 0.0;
  st.mean_tokens_per_utterance =
      st.n_utterances > 0 ? static_cast<double>(total_tokens) / st.n_utterances : 0.0;
  return st;
}

std::map<int, long> entity_histogram(const std::vector<GroundedUtterance>& corpus) {
  std::map<int, long> hist;
  for (const auto& u : corpus) ++hist[static_cast<int>(u.entities.size())];
  return hist;
}

std::string stats_to_json(const CorpusStats& st) {
  nlohmann::ordered_json j;
  j["n_utterances"] = st.n_utterances;
  j["n_annotated_objects"] = st.n_annotated_objects;
  j["n_entities"] = st.n_entities;
  j["avg_objects_per_entity"] = st.avg_objects_per_entity;
  j["unique_anchor_fraction"] = st.unique_anchor_fraction;
  j["mean_tokens_per_utterance"] = st.mean_tokens_per_utterance;
  nlohmann::ordered_json hist = nlohmann::ordered_json::object();
  for (const auto& [k, v] : st.entities_per_utterance_histogram) hist[std::to_string(k)] = v;
  j["entities_per_utterance_histogram"] = std::move(hist);
  nlohmann::ordered_json freq = nlohmann::ordered_json::object();
  for (const auto& [k, v] : st.anchor_class_frequency) freq[k] = v;
  j["anchor_class_frequency"] = std::move(freq);
  return j.dump(2);
}

std::string stats_to_csv(const CorpusStats& st) {
  std::ostringstream out;
  out << "metric,value\n";
  out << "n_utterances," << st.n_utterances << "\n";
  out << "n_annotated_objects," << st.n_annotated_objects << "\n";
  out << "n_entities," << st.n_entities << "\n";
  out << "avg_objects_per_entity," << st.avg_objects_per_entity << "\n";
  out << "unique_anchor_fraction," << st.unique_anchor_fraction << "\n";
  out << "mean_tokens_per_utterance," << st.mean_tokens_per_utterance << "\n";
  for (const auto& [k, v] : st.entities_per_utterance_histogram)
    out << "entities_per_utterance_" << k << "," << v << "\n";
  for (const auto& [k, v] : st.anchor_class_frequency)
    out << "anchor_class_" << k << "," << v << "\n";
  return out.str();
}

void emit_report(const CorpusStats& stats, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir + ": " + ec.message());
  auto write = [&](const std::string& name, const std::string& content) {
    const fs::path p = fs::path(out_dir) / name;
    std::ofstream out(p);
    if (!out) throw IoError("cannot write " + p.string());
    out << content;
    if (!out) throw IoError("failed writing " + p.string());
  };
  write("stats.json", stats_to_json(stats));
  write("stats.csv", stats_to_csv(stats));
}

}  // namespace scanents
