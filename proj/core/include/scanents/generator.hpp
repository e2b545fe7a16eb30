#pragma once

#include <map>
#include <string>
#include <vector>

#include "scanents/annotation.hpp"
#include "scanents/geometry.hpp"
#include "scanents/relations.hpp"

namespace scanents {

// Synthetic corpus generation. The seed fully determines the output; every
// utterance is guaranteed to resolve to exactly one object under exhaustive
// evaluation of the relation predicates.
struct GenConfig {
  int n_scenes = 50;
  int utterances_per_scene = 10;
  uint64_t seed = 0;
  int max_objects = 12;
  int n_classes = 10;
  double view_dep_fraction = 0.3;
  double distractor_rate = 0.35;

  bool operator==(const GenConfig&) const = default;
};

std::string gen_config_to_json(const GenConfig& cfg);
GenConfig gen_config_from_json(const std::string& text);

struct Corpus {
  std::vector<Scene> scenes;
  std::vector<GroundedUtterance> utterances;

  std::map<std::string, Scene> scene_map() const;
};

// Class palette and the full template lexicon (class nouns, their plurals and
// the relation phrase words, specials excluded).
std::vector<std::string> generator_classes(int n_classes);
std::vector<std::string> generator_lexicon(int n_classes);

// Throws GenerationExhausted when a scene admits no resolvable utterance
// after the retry budget.
Corpus generate_corpus(const GenConfig& cfg);

}  // namespace scanents
