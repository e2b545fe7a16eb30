#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "scanents/annotation.hpp"
#include "scanents/rng.hpp"

using namespace scanents;

namespace {

SceneObject make_obj(int id, const std::string& cls, double x) {
  SceneObject o;
  o.id = id;
  o.class_label = cls;
  o.box = {{x, 0, 0.5}, {1, 1, 1}, 0.0};
  return o;
}

// Four objects, ids 0..3: two chairs and two tables.
Scene four_object_scene() {
  Scene s;
  s.scene_id = "s4";
  s.objects = {make_obj(0, "table", 0), make_obj(1, "chair", 2), make_obj(2, "chair", 4),
               make_obj(3, "table", 6)};
  return s;
}

GroundedUtterance spec_example_utterance() {
  GroundedUtterance u;
  u.id = "u0";
  u.scene_id = "s4";
  u.tokens = {"the", "chair", "by", "the", "two", "tables"};
  u.target_object = 2;
  u.entities = {{{1, 2}, {2}, true}, {{4, 6}, {0, 3}, false}};
  return u;
}

std::string well_formed_line() {
  return R"({"id": "u0", "scene_id": "s4", "tokens": ["the", "chair", "by", "the", "two", "tables"], )"
         R"("target_object": 2, "view_dependent": false, )"
         R"("entities": [{"span": [1, 2], "object_ids": [2], "is_target": true}, )"
         R"({"span": [4, 6], "object_ids": [0, 3], "is_target": false}]})";
}

}  // namespace

TEST_CASE("parse_annotations accepts a well-formed record") {
  std::stringstream in(well_formed_line());
  const auto parsed = parse_annotations(in);
  REQUIRE(parsed.size() == 1);
  CHECK(parsed[0] == spec_example_utterance());
}

TEST_CASE("parse and serialize round trip on fixtures") {
  GroundedUtterance a = spec_example_utterance();
  GroundedUtterance b = a;
  b.id = "u1";
  b.view_dependent = true;
  b.entities = {{{1, 2}, {2}, true}};
  GroundedUtterance c = a;
  c.id = "u2";
  c.tokens = {"chair", "near", "table"};
  c.entities = {{{0, 1}, {2}, true}, {{2, 3}, {0}, false}};

  for (const auto& u : {a, b, c}) {
    std::stringstream io(serialize_annotation(u));
    const auto back = parse_annotations(io);
    REQUIRE(back.size() == 1);
    CHECK(back[0] == u);
  }

  std::stringstream all;
  serialize_annotations({a, b, c}, all);
  CHECK(parse_annotations(all) == std::vector<GroundedUtterance>{a, b, c});
}

TEST_CASE("parse_annotations rejects spans past the token count") {
  GroundedUtterance u = spec_example_utterance();
  u.entities[1].span = {4, 9};
  std::stringstream in(serialize_annotation(u));
  CHECK_THROWS_AS(parse_annotations(in), SpanOutOfRange);
}

TEST_CASE("parse_annotations rejects multiple targets") {
  GroundedUtterance u = spec_example_utterance();
  u.entities.push_back({{2, 3}, {2}, true});
  std::stringstream in(serialize_annotation(u));
  CHECK_THROWS_AS(parse_annotations(in), MultipleTargets);
}

TEST_CASE("parse_annotations rejects overlapping spans") {
  GroundedUtterance u = spec_example_utterance();
  u.entities[1].span = {1, 5};
  std::stringstream in(serialize_annotation(u));
  CHECK_THROWS_AS(parse_annotations(in), OverlappingSpans);
}

TEST_CASE("parse_annotations reports the failing line") {
  std::stringstream in(well_formed_line() + "\nnot json at all\n");
  try {
    parse_annotations(in);
    FAIL("expected MalformedRecord");
  } catch (const MalformedRecord& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("build_targets matches the direct construction") {
  const Scene s = four_object_scene();
  const GroundedUtterance u = spec_example_utterance();
  const SupervisionTargets t = build_targets(u, s, false);

  CHECK(t.y_anc == std::vector<int>{1, 0, 0, 1});
  CHECK(t.y_men == std::vector<int>{1, 0, 1, 1});
  CHECK(t.y_dis == std::vector<int>{0, 1, 0, 0});  // the other chair
  CHECK(t.y_attn.rows == 4);
  CHECK(t.y_attn.cols == 6);
  CHECK(t.y_attn.at(2, 1) == 1);  // target on its span token
  CHECK(t.y_attn.at(0, 4) == 1);
  CHECK(t.y_attn.at(0, 5) == 1);
  CHECK(t.y_attn.at(3, 4) == 1);
  CHECK(t.y_attn.at(1, 1) == 0);
}

TEST_CASE("build_targets with no anchors leaves y_anc zero") {
  const Scene s = four_object_scene();
  GroundedUtterance u = spec_example_utterance();
  u.entities = {{{1, 2}, {2}, true}};
  const SupervisionTargets t = build_targets(u, s, false);
  CHECK(t.y_anc == std::vector<int>{0, 0, 0, 0});
  CHECK(t.y_men == std::vector<int>{0, 0, 1, 0});
}

TEST_CASE("no-mention column marks objects outside every entity") {
  const Scene s = four_object_scene();
  GroundedUtterance u = spec_example_utterance();
  u.entities = {{{1, 2}, {2}, true}, {{4, 6}, {0}, false}};  // object 1 and 3 unmentioned
  const SupervisionTargets t = build_targets(u, s, true);
  const SupervisionTargets oracle = testing::build_targets_oracle(u, s, true);
  CHECK(t == oracle);
  CHECK(t.y_attn.cols == 7);
  CHECK(t.y_attn.at(1, 0) == 1);
  CHECK(t.y_attn.at(3, 0) == 1);
  CHECK(t.y_attn.at(2, 0) == 0);
  for (int j = 1; j < 7; ++j) CHECK(t.y_attn.at(1, j) == 0);
}

TEST_CASE("build_targets equals the membership-scan oracle on random fixtures") {
  Rng rng(21);
  for (int k = 0; k < 60; ++k) {
    Scene s;
    s.scene_id = "r";
    const int m = 2 + rng.next_int(5);
    for (int i = 0; i < m; ++i)
      s.objects.push_back(make_obj(i, rng.bernoulli(0.5) ? "chair" : "table", i * 2.0));
    GroundedUtterance u;
    u.id = "ru";
    u.scene_id = "r";
    const int n = 4 + rng.next_int(5);
    for (int j = 0; j < n; ++j) u.tokens.push_back("w" + std::to_string(rng.next_int(6)));
    const int target = rng.next_int(m);
    u.target_object = target;
    u.entities.push_back({{0, 1}, {target}, true});
    if (m > 1 && rng.bernoulli(0.8)) {
      std::vector<int> anchors;
      for (int i = 0; i < m; ++i) {
        if (i != target && rng.bernoulli(0.5)) anchors.push_back(i);
      }
      if (!anchors.empty()) u.entities.push_back({{2, std::min(n, 4)}, anchors, false});
    }
    const bool nm = rng.bernoulli(0.5);
    const SupervisionTargets got = build_targets(u, s, nm);
    const SupervisionTargets want = testing::build_targets_oracle(u, s, nm);
    CHECK(got == want);

    // y_men is the union of anchors and the target when those are the only
    // entity members.
    std::vector<int> expected_men(m, 0);
    for (int i = 0; i < m; ++i)
      expected_men[i] = got.y_anc[i] || i == s.index_of(u.target_object);
    CHECK(got.y_men == expected_men);

    // Shape contract.
    CHECK(static_cast<int>(got.y_anc.size()) == m);
    CHECK(static_cast<int>(got.y_dis.size()) == m);
    CHECK(static_cast<int>(got.y_men.size()) == m);
    CHECK(got.y_attn.rows == m);
    CHECK(got.y_attn.cols == n + (nm ? 1 : 0));
    if (nm) {
      for (int i = 0; i < m; ++i) {
        int ones = 0;
        for (int j = 0; j < got.y_attn.cols; ++j) ones += got.y_attn.at(i, j);
        CHECK(ones >= 1);
      }
    }
  }
}

TEST_CASE("build_targets rejects unknown objects") {
  const Scene s = four_object_scene();
  GroundedUtterance u = spec_example_utterance();
  u.entities[1].object_ids = {0, 9};
  CHECK_THROWS_AS(build_targets(u, s, false), UnknownObject);
}

TEST_CASE("lesion_anchor_words replaces exactly the anchor spans") {
  GroundedUtterance u;
  u.id = "lw";
  u.scene_id = "s";
  u.tokens = {"the", "chair", "near", "the", "door"};
  u.target_object = 1;
  u.entities = {{{0, 2}, {1}, true}, {{3, 5}, {7}, false}};
  const GroundedUtterance lesioned = lesion_anchor_words(u, "<unk>");
  CHECK(lesioned.tokens ==
        std::vector<std::string>{"the", "chair", "near", "<unk>", "<unk>"});
  CHECK(lesioned.entities == u.entities);
  CHECK(lesion_anchor_words(lesioned, "<unk>") == lesioned);

  SUBCASE("no anchors leaves the utterance unchanged") {
    u.entities = {{{0, 2}, {1}, true}};
    CHECK(lesion_anchor_words(u, "<unk>") == u);
  }
}

TEST_CASE("lesion_anchor_objects removes anchors but keeps the target") {
  Scene s;
  s.scene_id = "s5";
  for (int i = 0; i < 5; ++i) s.objects.push_back(make_obj(i, "c" + std::to_string(i), i));
  GroundedUtterance u;
  u.id = "lo";
  u.scene_id = "s5";
  u.tokens = {"a", "b", "c", "d", "e", "f"};
  u.target_object = 2;
  u.entities = {{{0, 1}, {2}, true}, {{2, 4}, {0, 3}, false}};

  const Scene lesioned = lesion_anchor_objects(u, s);
  REQUIRE(lesioned.objects.size() == 3);
  CHECK(lesioned.has_object(2));
  CHECK(!lesioned.has_object(0));
  CHECK(!lesioned.has_object(3));

  SUBCASE("no anchors leaves the scene unchanged") {
    u.entities = {{{0, 1}, {2}, true}};
    CHECK(lesion_anchor_objects(u, s) == s);
  }
  SUBCASE("target listed in an anchor entity is retained") {
    u.entities = {{{0, 1}, {2}, true}, {{2, 4}, {2, 3}, false}};
    const Scene out = lesion_anchor_objects(u, s);
    CHECK(out.has_object(2));
    CHECK(!out.has_object(3));
  }
}

TEST_CASE("anchors_only_scene keeps target, anchors and distractors") {
  Scene s;
  s.scene_id = "s6";
  s.objects = {make_obj(0, "chair", 0), make_obj(1, "chair", 1), make_obj(2, "table", 2),
               make_obj(3, "lamp", 3),  make_obj(4, "sofa", 4),  make_obj(5, "chair", 5)};
  GroundedUtterance u;
  u.id = "ao";
  u.scene_id = "s6";
  u.tokens = {"a", "b", "c", "d"};
  u.target_object = 0;
  u.entities = {{{0, 1}, {0}, true}, {{2, 3}, {2}, false}};

  auto ids_of = [](const Scene& scene) {
    std::set<int> ids;
    for (const auto& o : scene.objects) ids.insert(o.id);
    return ids;
  };

  // brute-force set formula: {target} ∪ anchors ∪ same-class distractors
  CHECK(ids_of(anchors_only_scene(u, s)) == std::set<int>{0, 1, 2, 5});

  SUBCASE("two anchor entities") {
    u.entities.push_back({{3, 4}, {3, 4}, false});
    CHECK(ids_of(anchors_only_scene(u, s)) == std::set<int>{0, 1, 2, 3, 4, 5});
  }
  SUBCASE("no anchors, no distractors") {
    u.target_object = 3;
    u.entities = {{{0, 1}, {3}, true}};
    CHECK(ids_of(anchors_only_scene(u, s)) == std::set<int>{3});
  }
}

TEST_CASE("lesioning invariants over random fixtures") {
  Rng rng(99);
  for (int k = 0; k < 40; ++k) {
    Scene s;
    s.scene_id = "r";
    const int m = 3 + rng.next_int(5);
    for (int i = 0; i < m; ++i)
      s.objects.push_back(make_obj(i, rng.bernoulli(0.4) ? "chair" : "c" + std::to_string(i), i));
    GroundedUtterance u;
    u.id = "ru";
    u.scene_id = "r";
    u.tokens = {"t0", "t1", "t2", "t3"};
    const int target = rng.next_int(m);
    u.target_object = target;
    u.entities = {{{0, 1}, {target}, true}};
    std::vector<int> anchors;
    for (int i = 0; i < m; ++i) {
      if (i != target && rng.bernoulli(0.4)) anchors.push_back(i);
    }
    if (!anchors.empty()) u.entities.push_back({{1, 3}, anchors, false});

    const Scene lesioned = lesion_anchor_objects(u, s);
    CHECK(lesioned.has_object(target));
    for (int a : u.anchor_ids()) CHECK(!lesioned.has_object(a));

    const Scene only = anchors_only_scene(u, s);
    std::set<int> expected{target};
    for (int a : u.anchor_ids()) expected.insert(a);
    for (int d : same_class_distractors(s, target)) expected.insert(d);
    std::set<int> got;
    for (const auto& o : only.objects) got.insert(o.id);
    CHECK(got == expected);
  }
}
