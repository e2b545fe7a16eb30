#include "scanents/geometry.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace scanents {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

bool finite(const Vec3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

double interval_overlap(double lo_a, double hi_a, double lo_b, double hi_b) {
  return std::max(0.0, std::min(hi_a, hi_b) - std::max(lo_a, lo_b));
}

ordered_json vec_to_json(const Vec3& v) { return ordered_json::array({v.x, v.y, v.z}); }

Vec3 vec_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Scene scene_from_json(const json& j) {
  Scene s;
  s.scene_id = j.at("scene_id").get<std::string>();
  for (const auto& jo : j.at("objects")) {
    SceneObject o;
    o.id = jo.at("id").get<int>();
    o.class_label = jo.at("class").get<std::string>();
    o.box.center = vec_from_json(jo.at("center"));
    o.box.size = vec_from_json(jo.at("size"));
    o.box.yaw = jo.value("yaw", 0.0);
    if (jo.contains("points")) {
      std::vector<Vec3> pts;
      for (const auto& jp : jo.at("points")) pts.push_back(vec_from_json(jp));
      o.points = std::move(pts);
    }
    s.objects.push_back(std::move(o));
  }
  validate_scene(s);
  return s;
}

ordered_json scene_to_json(const Scene& s) {
  ordered_json j;
  j["scene_id"] = s.scene_id;
  j["objects"] = ordered_json::array();
  for (const auto& o : s.objects) {
    ordered_json jo;
    jo["id"] = o.id;
    jo["class"] = o.class_label;
    jo["center"] = vec_to_json(o.box.center);
    jo["size"] = vec_to_json(o.box.size);
    jo["yaw"] = o.box.yaw;
    if (o.points) {
      ordered_json jp = ordered_json::array();
      for (const auto& p : *o.points) jp.push_back(vec_to_json(p));
      jo["points"] = std::move(jp);
    }
    j["objects"].push_back(std::move(jo));
  }
  return j;
}

}  // namespace

Vec3 Vec3::normalized() const {
  const double n = norm();
  if (n == 0.0) throw Error("cannot normalize a zero vector");
  return {x / n, y / n, z / n};
}

const SceneObject& Scene::object_by_id(int id) const {
  for (const auto& o : objects) {
    if (o.id == id) return o;
  }
  throw UnknownObject("object id " + std::to_string(id) + " not in scene " + scene_id);
}

int Scene::index_of(int id) const {
  for (size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].id == id) return static_cast<int>(i);
  }
  throw UnknownObject("object id " + std::to_string(id) + " not in scene " + scene_id);
}

bool Scene::has_object(int id) const {
  return std::any_of(objects.begin(), objects.end(),
                     [id](const SceneObject& o) { return o.id == id; });
}

void validate_scene(const Scene& s) {
  if (s.objects.empty()) throw Error("scene " + s.scene_id + " has no objects");
  std::set<int> ids;
  for (const auto& o : s.objects) {
    if (o.id < 0) throw Error("negative object id in scene " + s.scene_id);
    if (!ids.insert(o.id).second)
      throw Error("duplicate object id " + std::to_string(o.id) + " in scene " + s.scene_id);
    if (o.class_label.empty()) throw Error("empty class label in scene " + s.scene_id);
    if (!(o.box.size.x > 0 && o.box.size.y > 0 && o.box.size.z > 0))
      throw Error("non-positive box extents in scene " + s.scene_id);
    if (!finite(o.box.center) || !finite(o.box.size) || !std::isfinite(o.box.yaw))
      throw Error("non-finite geometry in scene " + s.scene_id);
    if (o.box.yaw < -M_PI || o.box.yaw >= M_PI)
      throw Error("yaw out of [-pi, pi) in scene " + s.scene_id);
    if (o.points) {
      // Point samples must lie inside the box inflated by 5%.
      const Vec3 half = o.box.size * (0.5 * 1.05);
      for (const auto& p : *o.points) {
        const Vec3 d = p - o.box.center;
        if (std::abs(d.x) > half.x || std::abs(d.y) > half.y || std::abs(d.z) > half.z)
          throw Error("point sample outside inflated box of object " + std::to_string(o.id));
      }
    }
  }
}

double aabb_iou(const Box3& a, const Box3& b) {
  if (a.yaw != 0.0 || b.yaw != 0.0)
    throw NonAxisAligned("aabb_iou requires yaw == 0 on both boxes");
  double inter = 1.0;
  const double* ca = &a.center.x;
  const double* sa = &a.size.x;
  const double* cb = &b.center.x;
  const double* sb = &b.size.x;
  for (int axis = 0; axis < 3; ++axis) {
    inter *= interval_overlap(ca[axis] - 0.5 * sa[axis], ca[axis] + 0.5 * sa[axis],
                              cb[axis] - 0.5 * sb[axis], cb[axis] + 0.5 * sb[axis]);
  }
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

Scene center_scene(const Scene& s) {
  Vec3 mean;
  for (const auto& o : s.objects) mean = mean + o.box.center;
  mean = mean * (1.0 / static_cast<double>(s.objects.size()));
  // A centroid within rounding noise of the origin counts as centered; this
  // keeps repeated centering exactly stable.
  if (std::abs(mean.x) <= 1e-12 && std::abs(mean.y) <= 1e-12 && std::abs(mean.z) <= 1e-12)
    return s;
  Scene out = s;
  for (auto& o : out.objects) {
    o.box.center = o.box.center - mean;
    if (o.points) {
      for (auto& p : *o.points) p = p - mean;
    }
  }
  return out;
}

std::set<int> same_class_distractors(const Scene& s, int target_id) {
  const SceneObject& target = s.object_by_id(target_id);
  std::set<int> out;
  for (const auto& o : s.objects) {
    if (o.id != target_id && o.class_label == target.class_label) out.insert(o.id);
  }
  return out;
}

double distance(const SceneObject& a, const SceneObject& b) {
  return (a.box.center - b.box.center).norm();
}

Scene parse_scene(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(std::string("invalid scene JSON: ") + e.what());
  }
  return scene_from_json(j);
}

std::string serialize_scene(const Scene& s) { return scene_to_json(s).dump(); }

std::vector<Scene> parse_scenes_jsonl(std::istream& in) {
  std::vector<Scene> scenes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    scenes.push_back(parse_scene(line));
  }
  return scenes;
}

void serialize_scenes_jsonl(const std::vector<Scene>& scenes, std::ostream& out) {
  for (const auto& s : scenes) out << serialize_scene(s) << "\n";
}

std::map<std::string, Scene> load_scenes(const std::string& path) {
  namespace fs = std::filesystem;
  std::map<std::string, Scene> out;
  auto add = [&out](Scene&& s) {
    std::string id = s.scene_id;
    out.emplace(std::move(id), std::move(s));
  };
  auto load_file = [&](const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    if (p.extension() == ".jsonl") {
      for (auto& s : parse_scenes_jsonl(in)) add(std::move(s));
    } else {
      std::stringstream buf;
      buf << in.rdbuf();
      add(parse_scene(buf.str()));
    }
  };
  fs::path p(path);
  if (fs::is_directory(p)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.path().extension() == ".json" || e.path().extension() == ".jsonl")
        files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) load_file(f);
  } else if (fs::exists(p)) {
    load_file(p);
  } else {
    throw IoError("no such scene path: " + path);
  }
  return out;
}

}  // namespace scanents
