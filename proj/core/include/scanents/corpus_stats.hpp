#pragma once

#include <map>
#include <string>
#include <vector>

#include "scanents/annotation.hpp"

namespace scanents {

// Corpus-level counting. "Annotated objects" counts object references, so an
// object referenced by two entities of one utterance counts twice.
struct CorpusStats {
  long n_utterances = 0;
  long n_annotated_objects = 0;
  long n_entities = 0;
  double avg_objects_per_entity = 0.0;  // 0 when there are no entities
  // Fraction of anchor-entity object references whose class has exactly one
  // instance in its scene; 0 when there are no anchor references.
  double unique_anchor_fraction = 0.0;
  std::map<int, long> entities_per_utterance_histogram;
  std::map<std::string, long> anchor_class_frequency;
  double mean_tokens_per_utterance = 0.0;

  bool operator==(const CorpusStats&) const = default;
};

// Throws MissingScene when an utterance references a scene that is not in the
// map; utterances are validated against their scenes.
CorpusStats compute_stats(const std::vector<GroundedUtterance>& corpus,
                          const std::map<std::string, Scene>& scenes);

// Count of utterances per number of entities.
std::map<int, long> entity_histogram(const std::vector<GroundedUtterance>& corpus);

// Writes <dir>/stats.json and <dir>/stats.csv with deterministic ordering.
void emit_report(const CorpusStats& stats, const std::string& out_dir);

std::string stats_to_json(const CorpusStats& stats);
std::string stats_to_csv(const CorpusStats& stats);

}  // namespace scanents
