#include "scanents/relations.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "scanents/rng.hpp"

namespace scanents {

namespace {

const std::array<std::string, kNumRelationTypes> kRelationNames = {
    "closest", "farthest", "on_top_of",   "under",    "above",  "below", "next_to",
    "between", "left_of",  "right_of",    "in_front_of", "behind", "inside",
};

// Axis-aligned bounding rectangle of the (possibly yawed) footprint.
struct Footprint {
  double min_x, max_x, min_y, max_y;
  double area() const { return (max_x - min_x) * (max_y - min_y); }
};

Footprint footprint(const Box3& b) {
  const double c = std::abs(std::cos(b.yaw));
  const double s = std::abs(std::sin(b.yaw));
  const double hx = 0.5 * (c * b.size.x + s * b.size.y);
  const double hy = 0.5 * (s * b.size.x + c * b.size.y);
  return {b.center.x - hx, b.center.x + hx, b.center.y - hy, b.center.y + hy};
}

double overlap_1d(double lo_a, double hi_a, double lo_b, double hi_b) {
  return std::max(0.0, std::min(hi_a, hi_b) - std::max(lo_a, lo_b));
}

double footprint_overlap(const Box3& a, const Box3& b) {
  const Footprint fa = footprint(a);
  const Footprint fb = footprint(b);
  return overlap_1d(fa.min_x, fa.max_x, fb.min_x, fb.max_x) *
         overlap_1d(fa.min_y, fa.max_y, fb.min_y, fb.max_y);
}

bool on_top_of(const Box3& a, const Box3& b) {
  if (std::abs(a.bottom() - b.top()) > kContactGap) return false;
  const double smaller = std::min(footprint(a).area(), footprint(b).area());
  return footprint_overlap(a, b) >= kOnTopMinOverlap * smaller;
}

bool above(const Box3& a, const Box3& b) {
  return a.center.z - b.center.z > kContactGap && footprint_overlap(a, b) > 0.0 &&
         a.bottom() - b.top() > kContactGap;
}

bool stacked(const Box3& a, const Box3& b) {
  return on_top_of(a, b) || on_top_of(b, a) || above(a, b) || above(b, a);
}

bool next_to(const Box3& a, const Box3& b) {
  const double d = (a.center - b.center).norm();
  return d <= kNextToDiagFactor * (a.half_diagonal() + b.half_diagonal()) && !stacked(a, b);
}

bool inside(const Box3& a, const Box3& b) {
  const Footprint fa = footprint(a);
  const Footprint fb = footprint(b);
  const double gx = 0.5 * (fb.max_x - fb.min_x) * (kInsideInflation - 1.0);
  const double gy = 0.5 * (fb.max_y - fb.min_y) * (kInsideInflation - 1.0);
  const double gz = 0.5 * b.size.z * (kInsideInflation - 1.0);
  return fa.min_x >= fb.min_x - gx && fa.max_x <= fb.max_x + gx && fa.min_y >= fb.min_y - gy &&
         fa.max_y <= fb.max_y + gy && a.bottom() >= b.bottom() - gz && a.top() <= b.top() + gz;
}

double point_segment_distance(const Vec3& p, const Vec3& s0, const Vec3& s1) {
  const Vec3 d = s1 - s0;
  const double len2 = d.dot(d);
  if (len2 == 0.0) return (p - s0).norm();
  const double t = std::clamp((p - s0).dot(d) / len2, 0.0, 1.0);
  return (p - (s0 + d * t)).norm();
}

struct ViewFrame {
  Vec3 right;
  Vec3 forward;
};

ViewFrame view_frame(const Scene& scene, const Vec3& viewpoint) {
  Vec3 centroid;
  for (const auto& o : scene.objects) centroid = centroid + o.box.center;
  centroid = centroid * (1.0 / static_cast<double>(scene.objects.size()));
  Vec3 forward = centroid - viewpoint;
  if (forward.norm() < 1e-9) forward = {0.0, 1.0, 0.0};
  forward = forward.normalized();
  Vec3 right = forward.cross({0.0, 0.0, 1.0});
  if (right.norm() < 1e-9) right = {1.0, 0.0, 0.0};
  right = right.normalized();
  return {right, forward};
}

// Unique arg-extremum of distance-to-object among the subject's same-class
// competitors. `want_min` selects closest vs farthest.
bool unique_extremum(const SceneObject& subject, const SceneObject& object, const Scene& scene,
                     bool want_min) {
  const double own = distance(subject, object);
  for (const auto& o : scene.objects) {
    if (o.id == subject.id || o.id == object.id) continue;
    if (o.class_label != subject.class_label) continue;
    const double d = distance(o, object);
    if (want_min ? d <= own : d >= own) return false;
  }
  return true;
}

}  // namespace

const std::string& relation_name(RelationType r) {
  return kRelationNames[static_cast<size_t>(r)];
}

RelationType relation_from_name(const std::string& name) {
  for (size_t i = 0; i < kRelationNames.size(); ++i) {
    if (kRelationNames[i] == name) return static_cast<RelationType>(i);
  }
  throw Error("unknown relation type: " + name);
}

bool relation_is_view_dependent(RelationType r) {
  return r == RelationType::kLeftOf || r == RelationType::kRightOf ||
         r == RelationType::kInFrontOf || r == RelationType::kBehind;
}

std::vector<int> between_contexts(const SceneObject& subject, const SceneObject& object,
                                  const Scene& scene) {
  std::vector<int> out;
  for (const auto& c : scene.objects) {
    if (c.id == subject.id || c.id == object.id) continue;
    if (point_segment_distance(subject.box.center, object.box.center, c.box.center) <=
        kBetweenMaxDist)
      out.push_back(c.id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::set<RelationType> classify_pair(const SceneObject& subject, const SceneObject& object,
                                     const Scene& scene, const Vec3& viewpoint) {
  if (!scene.has_object(subject.id) || !scene.has_object(object.id))
    throw UnknownObject("classify_pair: object not in scene " + scene.scene_id);
  if (subject.id == object.id) throw Error("classify_pair: subject equals object");

  const Box3& a = subject.box;
  const Box3& b = object.box;
  std::set<RelationType> rels;

  if (on_top_of(a, b)) rels.insert(RelationType::kOnTopOf);
  if (on_top_of(b, a)) rels.insert(RelationType::kUnder);
  if (above(a, b)) rels.insert(RelationType::kAbove);
  if (above(b, a)) rels.insert(RelationType::kBelow);
  if (next_to(a, b)) rels.insert(RelationType::kNextTo);
  if (inside(a, b)) rels.insert(RelationType::kInside);
  if (!between_contexts(subject, object, scene).empty()) rels.insert(RelationType::kBetween);
  if (unique_extremum(subject, object, scene, /*want_min=*/true))
    rels.insert(RelationType::kClosest);
  if (unique_extremum(subject, object, scene, /*want_min=*/false))
    rels.insert(RelationType::kFarthest);

  const ViewFrame frame = view_frame(scene, viewpoint);
  const Vec3 d = a.center - b.center;
  const double lateral = d.dot(frame.right);
  const double depth = d.dot(frame.forward);
  if (lateral < -kViewMinOffset) rels.insert(RelationType::kLeftOf);
  if (lateral > kViewMinOffset) rels.insert(RelationType::kRightOf);
  if (depth < -kViewMinOffset) rels.insert(RelationType::kInFrontOf);
  if (depth > kViewMinOffset) rels.insert(RelationType::kBehind);
  return rels;
}

std::vector<RelationInstance> extract_relations(const GroundedUtterance& u, const Scene& s,
                                                const Vec3& viewpoint) {
  validate_against(u, s);
  std::set<RelationInstance> seen;
  for (size_t i = 0; i < u.entities.size(); ++i) {
    for (size_t k = 0; k < u.entities.size(); ++k) {
      if (i == k) continue;
      for (int sid : u.entities[i].object_ids) {
        for (int oid : u.entities[k].object_ids) {
          if (sid == oid) continue;
          const SceneObject& subject = s.object_by_id(sid);
          const SceneObject& object = s.object_by_id(oid);
          for (RelationType r : classify_pair(subject, object, s, viewpoint)) {
            if (r == RelationType::kBetween) {
              for (int c : between_contexts(subject, object, s))
                seen.insert({sid, oid, r, {c}});
            } else {
              seen.insert({sid, oid, r, {}});
            }
          }
        }
      }
    }
  }
  return {seen.begin(), seen.end()};
}

std::map<RelationType, long> relation_breakdown(const std::vector<GroundedUtterance>& corpus,
                                                const std::map<std::string, Scene>& scenes) {
  std::map<RelationType, long> counts;
  for (RelationType r : kAllRelationTypes) counts[r] = 0;
  for (const auto& u : corpus) {
    auto it = scenes.find(u.scene_id);
    if (it == scenes.end())
      throw MissingScene("utterance " + u.id + " references missing scene " + u.scene_id);
    for (const auto& ri : extract_relations(u, it->second, default_viewpoint()))
      ++counts[ri.relation];
  }
  return counts;
}

std::optional<std::pair<RelationType, int>> sample_contrastive_relation(
    const GroundedUtterance& u, const Scene& s, uint64_t rng_seed) {
  const SceneObject& target = s.object_by_id(u.target_object);
  const auto distractor_ids = same_class_distractors(s, u.target_object);
  const Vec3 vp = default_viewpoint();

  std::vector<std::pair<RelationType, int>> candidates;
  for (int aid : u.anchor_ids()) {
    const SceneObject& anchor = s.object_by_id(aid);
    for (RelationType r : classify_pair(target, anchor, s, vp)) {
      bool held_by_distractor = false;
      for (int did : distractor_ids) {
        if (classify_pair(s.object_by_id(did), anchor, s, vp).count(r)) {
          held_by_distractor = true;
          break;
        }
      }
      if (!held_by_distractor) candidates.emplace_back(r, aid);
    }
  }
  if (candidates.empty()) return std::nullopt;
  std::sort(candidates.begin(), candidates.end());
  Rng rng(rng_seed);
  return candidates[rng.next_int(static_cast<int>(candidates.size()))];
}

std::string serialize_relation_instance(const RelationInstance& ri,
                                        const std::string& utterance_id) {
  nlohmann::ordered_json j;
  j["utterance_id"] = utterance_id;
  j["subject_id"] = ri.subject_id;
  j["object_id"] = ri.object_id;
  j["relation"] = relation_name(ri.relation);
  j["context_ids"] = ri.context_ids;
  return j.dump();
}

}  // namespace scanents
