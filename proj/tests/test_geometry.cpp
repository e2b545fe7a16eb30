#include <sstream>

#include "doctest.h"
#include "scanents/geometry.hpp"
#include "scanents/rng.hpp"

using namespace scanents;

namespace {

Box3 box(double cx, double cy, double cz, double sx, double sy, double sz, double yaw = 0.0) {
  return {{cx, cy, cz}, {sx, sy, sz}, yaw};
}

Scene two_object_scene() {
  Scene s;
  s.scene_id = "s0";
  SceneObject a;
  a.id = 0;
  a.class_label = "chair";
  a.box = box(2, 0, 0, 1, 1, 1);
  SceneObject b;
  b.id = 1;
  b.class_label = "table";
  b.box = box(4, 0, 0, 1, 1, 1);
  s.objects = {a, b};
  return s;
}

Scene random_scene(Rng& rng, int n) {
  Scene s;
  s.scene_id = "rand";
  for (int i = 0; i < n; ++i) {
    SceneObject o;
    o.id = i;
    o.class_label = i % 2 ? "chair" : "table";
    o.box = box(rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(0, 2),
                rng.uniform(0.2, 1.5), rng.uniform(0.2, 1.5), rng.uniform(0.2, 1.5));
    s.objects.push_back(o);
  }
  return s;
}

}  // namespace

TEST_CASE("aabb_iou identical unit cubes") {
  const Box3 a = box(0, 0, 0, 1, 1, 1);
  CHECK(aabb_iou(a, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("aabb_iou disjoint cubes") {
  CHECK(aabb_iou(box(0, 0, 0, 1, 1, 1), box(5, 0, 0, 1, 1, 1)) == 0.0);
}

TEST_CASE("aabb_iou half-shifted cubes is one third") {
  // intersection 0.5, union 1.5
  CHECK(aabb_iou(box(0, 0, 0, 1, 1, 1), box(0.5, 0, 0, 1, 1, 1)) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("aabb_iou rejects rotated boxes") {
  CHECK_THROWS_AS(aabb_iou(box(0, 0, 0, 1, 1, 1, 0.3), box(0, 0, 0, 1, 1, 1)),
                  NonAxisAligned);
  CHECK_THROWS_AS(aabb_iou(box(0, 0, 0, 1, 1, 1), box(0, 0, 0, 1, 1, 1, -0.1)),
                  NonAxisAligned);
}

TEST_CASE("aabb_iou symmetry and bounds on random boxes") {
  Rng rng(7);
  for (int k = 0; k < 200; ++k) {
    const Box3 a = box(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2),
                       rng.uniform(0.1, 2), rng.uniform(0.1, 2), rng.uniform(0.1, 2));
    const Box3 b = box(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2),
                       rng.uniform(0.1, 2), rng.uniform(0.1, 2), rng.uniform(0.1, 2));
    const double ab = aabb_iou(a, b);
    CHECK(ab == aabb_iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(aabb_iou(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    if (ab == 1.0) CHECK(a == b);
  }
}

TEST_CASE("center_scene on a centered scene is the identity") {
  Scene s = two_object_scene();
  s.objects[0].box.center = {-1, 0, 0};
  s.objects[1].box.center = {1, 0, 0};
  CHECK(center_scene(s) == s);
}

TEST_CASE("center_scene subtracts the centroid") {
  const Scene c = center_scene(two_object_scene());
  CHECK(c.objects[0].box.center == Vec3{-1, 0, 0});
  CHECK(c.objects[1].box.center == Vec3{1, 0, 0});
}

TEST_CASE("center_scene is idempotent and preserves pairwise distances") {
  Rng rng(13);
  for (int k = 0; k < 20; ++k) {
    const Scene s = random_scene(rng, 2 + rng.next_int(6));
    const Scene c = center_scene(s);
    CHECK(center_scene(c) == c);
    for (size_t i = 0; i < s.objects.size(); ++i) {
      for (size_t j = i + 1; j < s.objects.size(); ++j) {
        CHECK(distance(s.objects[i], s.objects[j]) ==
              doctest::Approx(distance(c.objects[i], c.objects[j])).epsilon(1e-12));
      }
    }
    Vec3 centroid;
    for (const auto& o : c.objects) centroid = centroid + o.box.center;
    CHECK(centroid.norm() / static_cast<double>(c.objects.size()) < 1e-12);
  }
}

TEST_CASE("center_scene moves point samples with the boxes") {
  Scene s = two_object_scene();
  s.objects[0].points = std::vector<Vec3>{{2, 0, 0}, {2.2, 0.1, 0.0}};
  const Scene c = center_scene(s);
  CHECK((*c.objects[0].points)[0] == Vec3{-1, 0, 0});
}

TEST_CASE("same_class_distractors direct definition") {
  Scene s;
  s.scene_id = "chairs";
  for (int id : {1, 2, 3}) {
    SceneObject o;
    o.id = id;
    o.class_label = "chair";
    o.box = box(id, 0, 0, 1, 1, 1);
    s.objects.push_back(o);
  }
  CHECK(same_class_distractors(s, 2) == std::set<int>{1, 3});
}

TEST_CASE("same_class_distractors unique class is empty") {
  const Scene s = two_object_scene();
  CHECK(same_class_distractors(s, 0).empty());
}

TEST_CASE("same_class_distractors filters by class label") {
  Scene s;
  s.scene_id = "mixed";
  const std::vector<std::pair<int, std::string>> spec = {
      {1, "chair"}, {2, "table"}, {3, "chair"}, {4, "lamp"}};
  for (const auto& [id, cls] : spec) {
    SceneObject o;
    o.id = id;
    o.class_label = cls;
    o.box = box(id, 0, 0, 1, 1, 1);
    s.objects.push_back(o);
  }
  CHECK(same_class_distractors(s, 1) == std::set<int>{3});

  SUBCASE("invariant under object reordering") {
    Scene shuffled = s;
    std::swap(shuffled.objects[0], shuffled.objects[3]);
    std::swap(shuffled.objects[1], shuffled.objects[2]);
    CHECK(same_class_distractors(shuffled, 1) == std::set<int>{3});
  }
  SUBCASE("unknown target") {
    CHECK_THROWS_AS(same_class_distractors(s, 99), UnknownObject);
  }
}

TEST_CASE("distance examples and symmetry") {
  Scene s = two_object_scene();
  s.objects[0].box.center = {0, 0, 0};
  s.objects[1].box.center = {3, 4, 0};
  CHECK(distance(s.objects[0], s.objects[0]) == 0.0);
  CHECK(distance(s.objects[0], s.objects[1]) == doctest::Approx(5.0).epsilon(1e-12));
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    const Scene r = random_scene(rng, 2);
    CHECK(distance(r.objects[0], r.objects[1]) == distance(r.objects[1], r.objects[0]));
  }
}

TEST_CASE("scene JSON round trip") {
  Scene s = two_object_scene();
  s.objects[0].points = std::vector<Vec3>{{2.1, 0.2, 0.1}};
  const Scene back = parse_scene(serialize_scene(s));
  CHECK(back == s);

  std::stringstream stream;
  serialize_scenes_jsonl({s, center_scene(s)}, stream);
  const auto scenes = parse_scenes_jsonl(stream);
  REQUIRE(scenes.size() == 2);
  CHECK(scenes[0] == s);
}

TEST_CASE("validate_scene rejects structural violations") {
  Scene s = two_object_scene();
  SUBCASE("duplicate ids") {
    s.objects[1].id = 0;
    CHECK_THROWS_AS(validate_scene(s), Error);
  }
  SUBCASE("empty scene") {
    s.objects.clear();
    CHECK_THROWS_AS(validate_scene(s), Error);
  }
  SUBCASE("non-positive extent") {
    s.objects[0].box.size.x = 0.0;
    CHECK_THROWS_AS(validate_scene(s), Error);
  }
  SUBCASE("point outside the inflated box") {
    s.objects[0].points = std::vector<Vec3>{{9, 9, 9}};
    CHECK_THROWS_AS(validate_scene(s), Error);
  }
  SUBCASE("empty class label") {
    s.objects[0].class_label.clear();
    CHECK_THROWS_AS(validate_scene(s), Error);
  }
}
