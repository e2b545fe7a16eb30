#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "scanents/annotation.hpp"
#include "scanents/geometry.hpp"

namespace scanents {

enum class RelationType {
  kClosest,
  kFarthest,
  kOnTopOf,
  kUnder,
  kAbove,
  kBelow,
  kNextTo,
  kBetween,
  kLeftOf,
  kRightOf,
  kInFrontOf,
  kBehind,
  kInside,
};

inline constexpr int kNumRelationTypes = 13;
inline constexpr std::array<RelationType, kNumRelationTypes> kAllRelationTypes = {
    RelationType::kClosest,  RelationType::kFarthest, RelationType::kOnTopOf,
    RelationType::kUnder,    RelationType::kAbove,    RelationType::kBelow,
    RelationType::kNextTo,   RelationType::kBetween,  RelationType::kLeftOf,
    RelationType::kRightOf,  RelationType::kInFrontOf, RelationType::kBehind,
    RelationType::kInside,
};

const std::string& relation_name(RelationType r);
RelationType relation_from_name(const std::string& name);
// True for the relations whose truth depends on the observer (left/right/
// front/behind).
bool relation_is_view_dependent(RelationType r);

// Geometric predicate thresholds. Fixed so that the classifier is
// deterministic and exactly testable.
inline constexpr double kContactGap = 0.05;        // max face gap counting as contact, m
inline constexpr double kOnTopMinOverlap = 0.5;    // of the smaller footprint
inline constexpr double kInsideInflation = 1.05;   // container inflation for "inside"
inline constexpr double kNextToDiagFactor = 1.5;   // of the summed half-diagonals
inline constexpr double kBetweenMaxDist = 0.3;     // to the anchor-anchor segment, m
inline constexpr double kViewMinOffset = 0.1;      // lateral/depth dead zone, m

// A standing observer south of the scene; used for view-dependent relations.
inline Vec3 default_viewpoint() { return {0.0, -10.0, 1.6}; }

struct RelationInstance {
  int subject_id = 0;
  int object_id = 0;
  RelationType relation = RelationType::kClosest;
  std::vector<int> context_ids;  // second referent for "between", else empty

  auto operator<=>(const RelationInstance&) const = default;
};

// All relations holding between subject and object. Closest/farthest rank the
// subject against all of its same-class competitors relative to `object`;
// view-dependent relations are evaluated in the frame of an observer at
// `viewpoint` looking at the scene centroid. Throws UnknownObject when either
// object is not part of the scene.
std::set<RelationType> classify_pair(const SceneObject& subject, const SceneObject& object,
                                     const Scene& scene, const Vec3& viewpoint);

// Scene-object ids that can serve as the second referent of
// between(subject; object, c).
std::vector<int> between_contexts(const SceneObject& subject, const SceneObject& object,
                                  const Scene& scene);

// classify_pair over all ordered object pairs drawn from distinct entities of
// the utterance, deduplicated and sorted.
std::vector<RelationInstance> extract_relations(const GroundedUtterance& u, const Scene& s,
                                                const Vec3& viewpoint);

// Per-relation-type counts over extract_relations of the whole corpus. Every
// relation type is present in the result, zero counts included.
std::map<RelationType, long> relation_breakdown(const std::vector<GroundedUtterance>& corpus,
                                                const std::map<std::string, Scene>& scenes);

// A relation that holds between the target and one anchor while holding for
// no (same-class distractor, same anchor) pair; sampled uniformly and
// deterministically from all such candidates. nullopt when none exists.
std::optional<std::pair<RelationType, int>> sample_contrastive_relation(
    const GroundedUtterance& u, const Scene& s, uint64_t rng_seed);

std::string serialize_relation_instance(const RelationInstance& ri, const std::string& utterance_id);

}  // namespace scanents
