#include "scanents/generator.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"
#include "scanents/rng.hpp"

namespace scanents {

namespace {

const std::vector<std::string> kClassPalette = {
    "chair", "table", "lamp",  "sofa", "bed",   "desk",  "rack",
    "cabinet", "monitor", "plant", "bin", "stool", "bench",
};

std::string plural(const std::string& cls) { return cls + "s"; }

// Relation phrases usable in "the <target> <phrase> the <anchor>" templates.
const std::vector<std::pair<RelationType, std::vector<std::string>>> kPairPhrases = {
    {RelationType::kClosest, {"closest", "to"}},
    {RelationType::kFarthest, {"farthest", "from"}},
    {RelationType::kOnTopOf, {"on", "top", "of"}},
    {RelationType::kUnder, {"under"}},
    {RelationType::kAbove, {"above"}},
    {RelationType::kBelow, {"below"}},
    {RelationType::kNextTo, {"next", "to"}},
    {RelationType::kLeftOf, {"left", "of"}},
    {RelationType::kRightOf, {"right", "of"}},
    {RelationType::kInFrontOf, {"in", "front", "of"}},
    {RelationType::kBehind, {"behind"}},
};

const std::vector<std::string>* phrase_for(RelationType r) {
  for (const auto& [rel, words] : kPairPhrases) {
    if (rel == r) return &words;
  }
  return nullptr;
}

constexpr double kFloorHalfExtent = 4.0;
constexpr int kPlacementRetries = 60;
constexpr int kSceneRetries = 20;

bool boxes_overlap(const Box3& a, const Box3& b, double margin) {
  const double* ca = &a.center.x;
  const double* sa = &a.size.x;
  const double* cb = &b.center.x;
  const double* sb = &b.size.x;
  for (int axis = 0; axis < 3; ++axis) {
    const double gap = std::abs(ca[axis] - cb[axis]) - 0.5 * (sa[axis] + sb[axis]);
    if (gap >= -margin) return false;
  }
  return true;
}

Scene generate_scene(const std::string& scene_id, const GenConfig& cfg, Rng& rng) {
  const auto classes = generator_classes(cfg.n_classes);
  Scene scene;
  scene.scene_id = scene_id;
  const int lo = std::min(6, cfg.max_objects);
  const int n_objects = lo + rng.next_int(cfg.max_objects - lo + 1);

  for (int i = 0; i < n_objects; ++i) {
    SceneObject o;
    o.id = i;
    if (!scene.objects.empty() && rng.bernoulli(cfg.distractor_rate)) {
      o.class_label = scene.objects[rng.next_int(static_cast<int>(scene.objects.size()))]
                          .class_label;
    } else {
      o.class_label = classes[rng.next_int(static_cast<int>(classes.size()))];
    }
    o.box.size = {rng.uniform(0.4, 1.1), rng.uniform(0.4, 1.1), rng.uniform(0.4, 1.2)};
    o.box.yaw = 0.0;

    bool placed = false;
    // Occasionally rest the object on (or mount it above) an earlier one.
    if (!scene.objects.empty() && rng.bernoulli(0.25)) {
      const SceneObject& support =
          scene.objects[rng.next_int(static_cast<int>(scene.objects.size()))];
      if (support.box.top() < 1.6) {
        Box3 box = o.box;
        box.size.x = std::min(box.size.x, 0.6 * support.box.size.x);
        box.size.y = std::min(box.size.y, 0.6 * support.box.size.y);
        box.size.x = std::max(box.size.x, 0.15);
        box.size.y = std::max(box.size.y, 0.15);
        const double jx = 0.5 * (support.box.size.x - box.size.x);
        const double jy = 0.5 * (support.box.size.y - box.size.y);
        box.center.x = support.box.center.x + rng.uniform(-jx, jx);
        box.center.y = support.box.center.y + rng.uniform(-jy, jy);
        const double gap = rng.bernoulli(0.3) ? rng.uniform(0.15, 0.4) : 0.0;
        box.center.z = support.box.top() + gap + 0.5 * box.size.z;
        bool clear = true;
        for (const auto& other : scene.objects) {
          if (boxes_overlap(box, other.box, 0.0)) {
            clear = false;
            break;
          }
        }
        if (clear) {
          o.box = box;
          placed = true;
        }
      }
    }
    for (int attempt = 0; !placed && attempt < kPlacementRetries; ++attempt) {
      Box3 box = o.box;
      const double lim = kFloorHalfExtent - 0.5 * std::max(box.size.x, box.size.y);
      box.center.x = rng.uniform(-lim, lim);
      box.center.y = rng.uniform(-lim, lim);
      box.center.z = 0.5 * box.size.z;
      bool clear = true;
      for (const auto& other : scene.objects) {
        if (boxes_overlap(box, other.box, 0.02)) {
          clear = false;
          break;
        }
      }
      if (clear) {
        o.box = box;
        placed = true;
      }
    }
    if (placed) scene.objects.push_back(std::move(o));
  }
  return scene;
}

// One generatable utterance: a relation template plus the objects it binds.
struct Candidate {
  RelationType relation;
  int target_id;
  std::vector<int> anchor_ids;  // 1 for pair templates, 2 for between
  bool same_class_pair = false; // between over two instances of one class
};

std::map<std::string, int> class_counts(const Scene& s) {
  std::map<std::string, int> counts;
  for (const auto& o : s.objects) ++counts[o.class_label];
  return counts;
}

// Exhaustive pool of uniquely-resolvable utterance candidates for the scene.
std::vector<Candidate> candidate_pool(const Scene& scene) {
  const Vec3 vp = default_viewpoint();
  const auto counts = class_counts(scene);
  std::vector<Candidate> pool;

  auto holds = [&](RelationType r, const SceneObject& subj, const SceneObject& obj) {
    return classify_pair(subj, obj, scene, vp).count(r) > 0;
  };
  auto unique_among_class = [&](RelationType r, const SceneObject& target,
                                const SceneObject& anchor) {
    for (const auto& x : scene.objects) {
      if (x.id == target.id || x.class_label != target.class_label) continue;
      if (x.id == anchor.id) continue;
      if (holds(r, x, anchor)) return false;
    }
    return true;
  };

  for (const auto& target : scene.objects) {
    for (const auto& anchor : scene.objects) {
      if (anchor.id == target.id || anchor.class_label == target.class_label) continue;
      if (counts.at(anchor.class_label) != 1) continue;  // the anchor phrase must be unambiguous
      const auto rels = classify_pair(target, anchor, scene, vp);
      for (const auto& [rel, words] : kPairPhrases) {
        if (!rels.count(rel)) continue;
        if (unique_among_class(rel, target, anchor))
          pool.push_back({rel, target.id, {anchor.id}, false});
      }
    }
  }

  // "between" over two instances of one class, or two unambiguous classes.
  auto between_holds = [&](const SceneObject& subj, const SceneObject& a,
                           const SceneObject& b) {
    auto ctx = between_contexts(subj, a, scene);
    return std::find(ctx.begin(), ctx.end(), b.id) != ctx.end();
  };
  for (const auto& target : scene.objects) {
    for (const auto& a : scene.objects) {
      for (const auto& b : scene.objects) {
        if (a.id >= b.id) continue;
        if (a.id == target.id || b.id == target.id) continue;
        if (a.class_label == target.class_label || b.class_label == target.class_label)
          continue;
        const bool same_pair = a.class_label == b.class_label;
        if (same_pair && counts.at(a.class_label) != 2) continue;
        if (!same_pair &&
            (counts.at(a.class_label) != 1 || counts.at(b.class_label) != 1))
          continue;
        if (!between_holds(target, a, b)) continue;
        bool unique = true;
        for (const auto& x : scene.objects) {
          if (x.id == target.id || x.class_label != target.class_label) continue;
          if (x.id == a.id || x.id == b.id) continue;
          if (between_holds(x, a, b)) {
            unique = false;
            break;
          }
        }
        if (unique) pool.push_back({RelationType::kBetween, target.id, {a.id, b.id}, same_pair});
      }
    }
  }
  return pool;
}

GroundedUtterance realize(const Candidate& c, const Scene& scene, const std::string& utt_id) {
  GroundedUtterance u;
  u.id = utt_id;
  u.scene_id = scene.scene_id;
  u.target_object = c.target_id;
  u.view_dependent = relation_is_view_dependent(c.relation);
  const std::string& target_cls = scene.object_by_id(c.target_id).class_label;

  if (c.relation == RelationType::kBetween) {
    const std::string& cls_a = scene.object_by_id(c.anchor_ids[0]).class_label;
    if (c.same_class_pair) {
      // the <target> between the two <anchors>
      u.tokens = {"the", target_cls, "between", "the", "two", plural(cls_a)};
      u.entities.push_back({{0, 2}, {c.target_id}, true});
      std::vector<int> ids = c.anchor_ids;
      std::sort(ids.begin(), ids.end());
      u.entities.push_back({{3, 6}, ids, false});
    } else {
      const std::string& cls_b = scene.object_by_id(c.anchor_ids[1]).class_label;
      u.tokens = {"the", target_cls, "between", "the", cls_a, "and", "the", cls_b};
      u.entities.push_back({{0, 2}, {c.target_id}, true});
      u.entities.push_back({{3, 5}, {c.anchor_ids[0]}, false});
      u.entities.push_back({{6, 8}, {c.anchor_ids[1]}, false});
    }
    return u;
  }

  const std::vector<std::string>* phrase = phrase_for(c.relation);
  if (!phrase) throw Error("no phrase template for relation " + relation_name(c.relation));
  const std::string& anchor_cls = scene.object_by_id(c.anchor_ids[0]).class_label;
  u.tokens = {"the", target_cls};
  u.tokens.insert(u.tokens.end(), phrase->begin(), phrase->end());
  const int anchor_start = static_cast<int>(u.tokens.size());
  u.tokens.push_back("the");
  u.tokens.push_back(anchor_cls);
  u.entities.push_back({{0, 2}, {c.target_id}, true});
  u.entities.push_back({{anchor_start, anchor_start + 2}, {c.anchor_ids[0]}, false});
  return u;
}

}  // namespace

std::string gen_config_to_json(const GenConfig& cfg) {
  nlohmann::ordered_json j;
  j["n_scenes"] = cfg.n_scenes;
  j["utterances_per_scene"] = cfg.utterances_per_scene;
  j["seed"] = cfg.seed;
  j["max_objects"] = cfg.max_objects;
  j["n_classes"] = cfg.n_classes;
  j["view_dep_fraction"] = cfg.view_dep_fraction;
  j["distractor_rate"] = cfg.distractor_rate;
  return j.dump();
}

GenConfig gen_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid generator config: ") + e.what());
  }
  GenConfig cfg;
  cfg.n_scenes = j.value("n_scenes", cfg.n_scenes);
  cfg.utterances_per_scene = j.value("utterances_per_scene", cfg.utterances_per_scene);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.max_objects = j.value("max_objects", cfg.max_objects);
  cfg.n_classes = j.value("n_classes", cfg.n_classes);
  cfg.view_dep_fraction = j.value("view_dep_fraction", cfg.view_dep_fraction);
  cfg.distractor_rate = j.value("distractor_rate", cfg.distractor_rate);
  if (cfg.n_scenes <= 0 || cfg.utterances_per_scene <= 0 || cfg.max_objects < 2 ||
      cfg.n_classes <= 0)
    throw Error("generator config: counts must be positive");
  return cfg;
}

std::map<std::string, Scene> Corpus::scene_map() const {
  std::map<std::string, Scene> out;
  for (const auto& s : scenes) out.emplace(s.scene_id, s);
  return out;
}

std::vector<std::string> generator_classes(int n_classes) {
  if (n_classes <= 0 || n_classes > static_cast<int>(kClassPalette.size()))
    throw Error("n_classes must be in [1, " + std::to_string(kClassPalette.size()) + "]");
  return {kClassPalette.begin(), kClassPalette.begin() + n_classes};
}

std::vector<std::string> generator_lexicon(int n_classes) {
  std::vector<std::string> words;
  for (const auto& cls : generator_classes(n_classes)) {
    words.push_back(cls);
    words.push_back(plural(cls));
  }
  for (const auto& [rel, phrase] : kPairPhrases)
    words.insert(words.end(), phrase.begin(), phrase.end());
  words.insert(words.end(), {"the", "between", "and", "two"});
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  return words;
}

Corpus generate_corpus(const GenConfig& cfg) {
  if (cfg.n_scenes <= 0 || cfg.utterances_per_scene <= 0 || cfg.max_objects < 2)
    throw Error("generator config: counts must be positive");
  Rng root(cfg.seed);
  Corpus corpus;

  for (int si = 0; si < cfg.n_scenes; ++si) {
    Scene scene;
    std::vector<Candidate> view_dep, view_indep;
    bool ok = false;
    for (int attempt = 0; attempt < kSceneRetries && !ok; ++attempt) {
      Rng rng = root.fork(static_cast<uint64_t>(si) * 1000 + attempt);
      char buf[32];
      std::snprintf(buf, sizeof(buf), "scene%04d", si);
      scene = generate_scene(buf, cfg, rng);
      if (scene.objects.size() < 2) continue;
      view_dep.clear();
      view_indep.clear();
      for (auto& c : candidate_pool(scene)) {
        (relation_is_view_dependent(c.relation) ? view_dep : view_indep).push_back(c);
      }
      const bool need_view_dep = cfg.view_dep_fraction > 0.0;
      ok = !view_indep.empty() && (!need_view_dep || !view_dep.empty());
      if (cfg.view_dep_fraction >= 1.0) ok = !view_dep.empty();
    }
    if (!ok)
      throw GenerationExhausted("no resolvable utterances for scene index " +
                                std::to_string(si) + " within the retry budget");

    validate_scene(scene);
    Rng urng = root.fork(0x757400 + static_cast<uint64_t>(si));
    for (int ui = 0; ui < cfg.utterances_per_scene; ++ui) {
      const bool want_dep = !view_dep.empty() && urng.bernoulli(cfg.view_dep_fraction);
      const auto& pool =
          want_dep ? view_dep : (view_indep.empty() ? view_dep : view_indep);
      const Candidate& c = pool[urng.next_int(static_cast<int>(pool.size()))];
      char buf[48];
      std::snprintf(buf, sizeof(buf), "%s-u%03d", scene.scene_id.c_str(), ui);
      GroundedUtterance u = realize(c, scene, buf);
      validate_against(u, scene);
      corpus.utterances.push_back(std::move(u));
    }
    corpus.scenes.push_back(std::move(scene));
  }
  return corpus;
}

}  // namespace scanents
