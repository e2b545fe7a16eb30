#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "scanents/geometry.hpp"

namespace scanents {

// Half-open token index range [start, end).
struct TokenSpan {
  int start = 0;
  int end = 0;

  int length() const { return end - start; }
  bool contains(int token_index) const { return token_index >= start && token_index < end; }
  bool overlaps(const TokenSpan& o) const { return start < o.end && o.start < end; }
  bool operator==(const TokenSpan&) const = default;
};

// A noun phrase of the utterance together with the scene objects it denotes.
struct ScanEntity {
  TokenSpan span;
  std::vector<int> object_ids;
  bool is_target = false;

  bool operator==(const ScanEntity&) const = default;
};

// Tokenized referential sentence with phrase-to-object correspondences.
// Exactly one entity is the target and its sole object id equals
// `target_object`.
struct GroundedUtterance {
  std::string id;
  std::string scene_id;
  std::vector<std::string> tokens;
  std::vector<ScanEntity> entities;
  bool view_dependent = false;
  int target_object = 0;

  const ScanEntity& target_entity() const;
  // Object ids that belong to at least one non-target entity, the target
  // itself excluded; sorted and unique.
  std::vector<int> anchor_ids() const;
  bool operator==(const GroundedUtterance&) const = default;
};

struct BinaryMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> cells;  // row-major, values in {0,1}

  BinaryMatrix() = default;
  BinaryMatrix(int r, int c) : rows(r), cols(c), cells(static_cast<size_t>(r) * c, 0) {}
  int& at(int r, int c) { return cells[static_cast<size_t>(r) * cols + c]; }
  int at(int r, int c) const { return cells[static_cast<size_t>(r) * cols + c]; }
  bool operator==(const BinaryMatrix&) const = default;
};

// Binary supervision built from one utterance against its scene. Vectors are
// indexed by object position in Scene::objects; y_attn rows likewise, columns
// by token position (shifted by one when the no-mention column is enabled).
struct SupervisionTargets {
  std::vector<int> y_anc;
  std::vector<int> y_dis;
  BinaryMatrix y_attn;
  std::vector<int> y_men;

  bool operator==(const SupervisionTargets&) const = default;
};

// Structural checks that need no scene: span bounds, span overlap, exactly one
// target, distinct object ids. Throws SpanOutOfRange / OverlappingSpans /
// MultipleTargets / Error.
void validate_structure(const GroundedUtterance& u);

// Additionally checks every referenced object id against the scene
// (UnknownObject) and the scene id itself.
void validate_against(const GroundedUtterance& u, const Scene& s);

// Reads one JSON record per line:
//   {"id": str, "scene_id": str, "tokens": [str], "target_object": int,
//    "view_dependent": bool, "entities": [{"span": [int,int],
//    "object_ids": [int], "is_target": bool}]}
// Structural invariants are enforced; every error carries the line number.
std::vector<GroundedUtterance> parse_annotations(std::istream& in);

// Inverse of parse_annotations with stable field ordering.
void serialize_annotations(const std::vector<GroundedUtterance>& us, std::ostream& out);
std::string serialize_annotation(const GroundedUtterance& u);

// Builds all four supervision targets. With `nm_token`, y_attn gains a
// leading column that is set for every object belonging to no entity.
SupervisionTargets build_targets(const GroundedUtterance& u, const Scene& s, bool nm_token);

// Replaces every token inside a non-target entity span with `unk`. Spans and
// entities are preserved; idempotent.
GroundedUtterance lesion_anchor_words(const GroundedUtterance& u, const std::string& unk);

// Scene without the objects of non-target entities. The target is always
// retained, even when it is also listed in a non-target entity.
Scene lesion_anchor_objects(const GroundedUtterance& u, const Scene& s);

// Scene restricted to {target} ∪ anchors ∪ same-class distractors.
Scene anchors_only_scene(const GroundedUtterance& u, const Scene& s);

}  // namespace scanents
