#pragma once

#include <cmath>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "scanents/error.hpp"

namespace scanents {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const;
  bool operator==(const Vec3&) const = default;
};

// Oriented box: center, full extents and a rotation about the vertical axis.
// Extents must be strictly positive; yaw is normalized to [-pi, pi).
struct Box3 {
  Vec3 center;
  Vec3 size;
  double yaw = 0.0;

  double volume() const { return size.x * size.y * size.z; }
  double bottom() const { return center.z - 0.5 * size.z; }
  double top() const { return center.z + 0.5 * size.z; }
  // Half of the box diagonal length.
  double half_diagonal() const { return 0.5 * size.norm(); }
  bool operator==(const Box3&) const = default;
};

struct SceneObject {
  int id = 0;
  std::string class_label;
  Box3 box;
  std::optional<std::vector<Vec3>> points;

  bool operator==(const SceneObject&) const = default;
};

struct Scene {
  std::string scene_id;
  std::vector<SceneObject> objects;

  // Throws UnknownObject when no object carries `id`.
  const SceneObject& object_by_id(int id) const;
  // Position of `id` within `objects`, or UnknownObject.
  int index_of(int id) const;
  bool has_object(int id) const;
  bool operator==(const Scene&) const = default;
};

// Throws Error when a structural invariant is violated (duplicate ids, empty
// scene, non-positive extents, out-of-range yaw, stray point samples).
void validate_scene(const Scene& s);

// Intersection-over-union of two axis-aligned boxes. Both yaws must be zero,
// otherwise NonAxisAligned is thrown.
double aabb_iou(const Box3& a, const Box3& b);

// Translates every object (boxes and point samples) so the centroid of the
// object centers lands on the origin. Relative geometry is unchanged.
Scene center_scene(const Scene& s);

// Ids of all objects sharing the target's class label, target excluded.
std::set<int> same_class_distractors(const Scene& s, int target_id);

// Euclidean distance between box centers.
double distance(const SceneObject& a, const SceneObject& b);

// -- serialization ------------------------------------------------------------
// Scene files are JSON objects of the form
//   {"scene_id": str, "objects": [{"id": int, "class": str,
//    "center": [x,y,z], "size": [sx,sy,sz], "yaw": 0.0}]}
// stored one per file or as a JSONL stream.

Scene parse_scene(const std::string& json_text);
std::string serialize_scene(const Scene& s);

std::vector<Scene> parse_scenes_jsonl(std::istream& in);
void serialize_scenes_jsonl(const std::vector<Scene>& scenes, std::ostream& out);

// Loads scenes from a .json file, a .jsonl stream or a directory of such
// files, keyed by scene_id. Throws IoError when the path cannot be read.
std::map<std::string, Scene> load_scenes(const std::string& path);

}  // namespace scanents
