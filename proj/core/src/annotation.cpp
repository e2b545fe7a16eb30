#include "scanents/annotation.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace scanents {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

GroundedUtterance utterance_from_json(const json& j) {
  GroundedUtterance u;
  u.id = j.at("id").get<std::string>();
  u.scene_id = j.at("scene_id").get<std::string>();
  u.tokens = j.at("tokens").get<std::vector<std::string>>();
  u.target_object = j.at("target_object").get<int>();
  u.view_dependent = j.at("view_dependent").get<bool>();
  for (const auto& je : j.at("entities")) {
    ScanEntity e;
    const auto& span = je.at("span");
    if (!span.is_array() || span.size() != 2) throw Error("span must be [start, end]");
    e.span.start = span[0].get<int>();
    e.span.end = span[1].get<int>();
    e.object_ids = je.at("object_ids").get<std::vector<int>>();
    e.is_target = je.at("is_target").get<bool>();
    u.entities.push_back(std::move(e));
  }
  return u;
}

ordered_json utterance_to_json(const GroundedUtterance& u) {
  ordered_json j;
  j["id"] = u.id;
  j["scene_id"] = u.scene_id;
  j["tokens"] = u.tokens;
  j["target_object"] = u.target_object;
  j["view_dependent"] = u.view_dependent;
  j["entities"] = ordered_json::array();
  for (const auto& e : u.entities) {
    ordered_json je;
    je["span"] = ordered_json::array({e.span.start, e.span.end});
    je["object_ids"] = e.object_ids;
    je["is_target"] = e.is_target;
    j["entities"].push_back(std::move(je));
  }
  return j;
}

}  // namespace

const ScanEntity& GroundedUtterance::target_entity() const {
  for (const auto& e : entities) {
    if (e.is_target) return e;
  }
  throw Error("utterance " + id + " has no target entity");
}

std::vector<int> GroundedUtterance::anchor_ids() const {
  std::set<int> ids;
  for (const auto& e : entities) {
    if (e.is_target) continue;
    for (int oid : e.object_ids) {
      if (oid != target_object) ids.insert(oid);
    }
  }
  return {ids.begin(), ids.end()};
}

void validate_structure(const GroundedUtterance& u) {
  const int n = static_cast<int>(u.tokens.size());
  if (n < 1) throw Error("utterance " + u.id + " has no tokens");

  int targets = 0;
  for (const auto& e : u.entities) {
    if (!(0 <= e.span.start && e.span.start < e.span.end))
      throw SpanOutOfRange("utterance " + u.id + ": bad span [" +
                           std::to_string(e.span.start) + "," + std::to_string(e.span.end) + ")");
    if (e.span.end > n)
      throw SpanOutOfRange("utterance " + u.id + ": span end " + std::to_string(e.span.end) +
                           " exceeds token count " + std::to_string(n));
    if (e.object_ids.empty()) throw Error("utterance " + u.id + ": entity with no object ids");
    std::set<int> distinct(e.object_ids.begin(), e.object_ids.end());
    if (distinct.size() != e.object_ids.size())
      throw Error("utterance " + u.id + ": duplicate object ids within an entity");
    if (e.is_target) {
      ++targets;
      if (e.object_ids.size() != 1)
        throw Error("utterance " + u.id + ": target entity must reference exactly one object");
      if (e.object_ids[0] != u.target_object)
        throw Error("utterance " + u.id + ": target entity object does not match target_object");
    }
  }
  if (targets == 0) throw Error("utterance " + u.id + ": no target entity");
  if (targets > 1) throw MultipleTargets("utterance " + u.id + ": multiple target entities");

  for (size_t i = 0; i < u.entities.size(); ++i) {
    for (size_t k = i + 1; k < u.entities.size(); ++k) {
      if (u.entities[i].span.overlaps(u.entities[k].span))
        throw OverlappingSpans("utterance " + u.id + ": overlapping entity spans");
    }
  }
}

void validate_against(const GroundedUtterance& u, const Scene& s) {
  validate_structure(u);
  if (u.scene_id != s.scene_id)
    throw MissingScene("utterance " + u.id + " refers to scene " + u.scene_id + ", got " +
                       s.scene_id);
  for (const auto& e : u.entities) {
    for (int oid : e.object_ids) {
      if (!s.has_object(oid))
        throw UnknownObject("utterance " + u.id + " references unknown object " +
                            std::to_string(oid));
    }
  }
}

std::vector<GroundedUtterance> parse_annotations(std::istream& in) {
  std::vector<GroundedUtterance> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
    GroundedUtterance u;
    try {
      u = utterance_from_json(j);
    } catch (const json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
    try {
      validate_structure(u);
    } catch (const SpanOutOfRange& e) {
      throw SpanOutOfRange("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const MultipleTargets& e) {
      throw MultipleTargets("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const OverlappingSpans& e) {
      throw OverlappingSpans("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw MalformedRecord(line_no, e.what());
    }
    out.push_back(std::move(u));
  }
  return out;
}

std::string serialize_annotation(const GroundedUtterance& u) {
  return utterance_to_json(u).dump();
}

void serialize_annotations(const std::vector<GroundedUtterance>& us, std::ostream& out) {
  for (const auto& u : us) out << serialize_annotation(u) << "\n";
}

SupervisionTargets build_targets(const GroundedUtterance& u, const Scene& s, bool nm_token) {
  validate_against(u, s);
  const int m = static_cast<int>(s.objects.size());
  const int n = static_cast<int>(u.tokens.size());
  const int target_index = s.index_of(u.target_object);
  const int col_offset = nm_token ? 1 : 0;

  SupervisionTargets t;
  t.y_anc.assign(m, 0);
  t.y_dis.assign(m, 0);
  t.y_men.assign(m, 0);
  t.y_attn = BinaryMatrix(m, n + col_offset);

  for (const auto& e : u.entities) {
    for (int oid : e.object_ids) {
      const int i = s.index_of(oid);
      t.y_men[i] = 1;
      if (!e.is_target && i != target_index) t.y_anc[i] = 1;
      for (int j = e.span.start; j < e.span.end; ++j) t.y_attn.at(i, j + col_offset) = 1;
    }
  }
  for (int did : same_class_distractors(s, u.target_object)) t.y_dis[s.index_of(did)] = 1;
  if (nm_token) {
    for (int i = 0; i < m; ++i) {
      if (!t.y_men[i]) t.y_attn.at(i, 0) = 1;
    }
  }
  return t;
}

GroundedUtterance lesion_anchor_words(const GroundedUtterance& u, const std::string& unk) {
  GroundedUtterance out = u;
  for (const auto& e : u.entities) {
    if (e.is_target) continue;
    for (int j = e.span.start; j < e.span.end; ++j) out.tokens[j] = unk;
  }
  return out;
}

Scene lesion_anchor_objects(const GroundedUtterance& u, const Scene& s) {
  std::set<int> drop;
  for (const auto& e : u.entities) {
    if (e.is_target) continue;
    drop.insert(e.object_ids.begin(), e.object_ids.end());
  }
  drop.erase(u.target_object);  // target retention wins
  Scene out;
  out.scene_id = s.scene_id;
  for (const auto& o : s.objects) {
    if (!drop.count(o.id)) out.objects.push_back(o);
  }
  return out;
}

Scene anchors_only_scene(const GroundedUtterance& u, const Scene& s) {
  std::set<int> keep;
  keep.insert(u.target_object);
  for (int a : u.anchor_ids()) keep.insert(a);
  for (int d : same_class_distractors(s, u.target_object)) keep.insert(d);
  Scene out;
  out.scene_id = s.scene_id;
  for (const auto& o : s.objects) {
    if (keep.count(o.id)) out.objects.push_back(o);
  }
  return out;
}

}  // namespace scanents
