#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "scanents/listener.hpp"
#include "scanents/rng.hpp"

using namespace scanents;
namespace ad = scanents::ad;
using scanents::testing::obj;

namespace {

const std::vector<std::string> kWords = {"the", "chair", "closest", "to",
                                         "table", "lamp", "left", "of"};
const std::vector<std::string> kClasses = {"chair", "lamp", "table"};

Vocabulary vocab() { return Vocabulary(kWords); }
ClassVocabulary classes() { return ClassVocabulary(kClasses); }

Scene demo_scene(int m) {
  Scene s;
  s.scene_id = "demo";
  for (int i = 0; i < m; ++i) {
    s.objects.push_back(obj(i, kClasses[i % kClasses.size()], 0.8 * i, 0.3 * (i % 3),
                            0.4, 0.6, 0.6, 0.8));
  }
  return s;
}

ListenerConfig small_config(bool nm = false) {
  ListenerConfig cfg;
  cfg.d = 8;
  cfg.use_nm_token = nm;
  return cfg;
}

GroundedUtterance demo_utterance(const Scene& s) {
  GroundedUtterance u;
  u.id = "demo-u";
  u.scene_id = s.scene_id;
  u.tokens = {"the", "chair", "closest", "to", "the", "table"};
  u.target_object = 0;
  u.entities = {{{0, 2}, {0}, true}};
  if (s.objects.size() > 2) u.entities.push_back({{4, 6}, {2}, false});
  return u;
}

}  // namespace

TEST_CASE("forward shape contract") {
  const Scene s = demo_scene(7);
  ListenerModel model(small_config(), vocab(), classes(), 1);
  std::vector<std::string> tokens(12, "the");
  const ListenerOutputs out = model.forward(s, tokens);
  CHECK(out.attn.shape() == ad::Shape{7, 12});
  CHECK(out.f_o.shape() == ad::Shape{7, 8});
  CHECK(out.obj_enc.shape() == ad::Shape{7, 8});
  CHECK(out.target_logits.shape() == ad::Shape{7});
  CHECK(out.anchor_logits.shape() == ad::Shape{7});
  CHECK(out.distractor_logits.shape() == ad::Shape{7});
  CHECK(out.class_logits.shape() == ad::Shape{7, 3});

  SUBCASE("no-mention key adds one column") {
    ListenerModel nm_model(small_config(true), vocab(), classes(), 1);
    CHECK(nm_model.forward(s, tokens).attn.shape() == ad::Shape{7, 13});
  }
}

TEST_CASE("single-object scene is a trivial argmax") {
  const Scene s = demo_scene(1);
  ListenerModel model(small_config(), vocab(), classes(), 2);
  const ListenerOutputs out = model.forward(s, std::vector<std::string>{"the", "chair"});
  REQUIRE(out.target_logits.numel() == 1);
  CHECK(ad::softmax(out.target_logits, 0).values()[0] == doctest::Approx(1.0));
}

TEST_CASE("object permutation permutes target logits") {
  const Scene s = demo_scene(5);
  ListenerModel model(small_config(), vocab(), classes(), 3);
  const std::vector<std::string> tokens = {"the", "chair", "left", "of", "the", "lamp"};
  const auto base = model.forward(s, tokens).target_logits.values();

  Scene permuted = s;
  const std::vector<int> perm = {3, 0, 4, 1, 2};  // position i holds old object perm[i]
  for (size_t i = 0; i < perm.size(); ++i) permuted.objects[i] = s.objects[perm[i]];
  const auto moved = model.forward(permuted, tokens).target_logits.values();
  for (size_t i = 0; i < perm.size(); ++i)
    CHECK(moved[i] == doctest::Approx(base[perm[i]]).epsilon(1e-9));

  const auto argmax = [](const std::vector<double>& v) {
    return std::distance(v.begin(), std::max_element(v.begin(), v.end()));
  };
  CHECK(perm[argmax(moved)] == argmax(base));
}

TEST_CASE("identical seeds give identical models regardless of later flags") {
  const Scene s = demo_scene(4);
  ListenerModel a(small_config(), vocab(), classes(), 9);
  ListenerModel b(small_config(), vocab(), classes(), 9);
  const std::vector<std::string> tokens = {"the", "lamp"};
  CHECK(a.forward(s, tokens).target_logits.values() ==
        b.forward(s, tokens).target_logits.values());
  CHECK(a.params().total_size() == b.params().total_size());
}

TEST_CASE("token ids outside the vocabulary are rejected") {
  const Scene s = demo_scene(3);
  ListenerModel model(small_config(), vocab(), classes(), 4);
  CHECK_THROWS_AS(model.forward(s, std::vector<int64_t>{0, 99}), VocabOverflow);
}

// -- loss values on fabricated outputs ---------------------------------------

namespace {

ListenerOutputs outputs_with(const std::vector<double>& anchor,
                             const std::vector<double>& dis,
                             const std::vector<double>& target) {
  ListenerOutputs out;
  if (!anchor.empty())
    out.anchor_logits = ad::Tensor::constant({static_cast<int64_t>(anchor.size())}, anchor);
  if (!dis.empty())
    out.distractor_logits = ad::Tensor::constant({static_cast<int64_t>(dis.size())}, dis);
  if (!target.empty())
    out.target_logits = ad::Tensor::constant({static_cast<int64_t>(target.size())}, target);
  return out;
}

SupervisionTargets targets_with(std::vector<int> y_anc, std::vector<int> y_dis) {
  SupervisionTargets t;
  t.y_anc = std::move(y_anc);
  t.y_dis = std::move(y_dis);
  return t;
}

double stable_bce(double x, double y) {
  return std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

TEST_CASE("loss_anc values") {
  CHECK(loss_anc(outputs_with({0, 0}, {}, {}), targets_with({1, 0}, {})).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(loss_anc(outputs_with({30, -30}, {}, {}), targets_with({1, 0}, {})).item() < 1e-12);
  Rng rng(4);
  std::vector<double> logits = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
  std::vector<int> y = {1, 0, 1};
  const double want =
      (stable_bce(logits[0], 1) + stable_bce(logits[1], 0) + stable_bce(logits[2], 1)) / 3.0;
  CHECK(loss_anc(outputs_with(logits, {}, {}), targets_with(y, {})).item() ==
        doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("loss_dis mirrors loss_anc on y_dis") {
  CHECK(loss_dis(outputs_with({}, {0, 0}, {}), targets_with({}, {0, 1})).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(loss_dis(outputs_with({}, {-30, 30}, {}), targets_with({}, {0, 1})).item() < 1e-12);
  std::vector<double> logits = {0.3, -1.2};
  const double want = (stable_bce(0.3, 1) + stable_bce(-1.2, 0)) / 2.0;
  CHECK(loss_dis(outputs_with({}, logits, {}), targets_with({}, {1, 0})).item() ==
        doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("loss_attn row means against a brute-force double loop") {
  SUBCASE("1x1 zero score") {
    ListenerOutputs out;
    out.attn = ad::Tensor::constant({1, 1}, {0.0});
    SupervisionTargets t;
    t.y_attn = BinaryMatrix(1, 1);
    t.y_attn.at(0, 0) = 1;
    CHECK(loss_attn(out, t).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("saturated correct scores vanish") {
    ListenerOutputs out;
    out.attn = ad::Tensor::constant({2, 2}, {40.0, -40.0, -40.0, 40.0});
    SupervisionTargets t;
    t.y_attn = BinaryMatrix(2, 2);
    t.y_attn.at(0, 0) = 1;
    t.y_attn.at(1, 1) = 1;
    CHECK(loss_attn(out, t).item() < 1e-12);
  }
  SUBCASE("random 2x2 case") {
    Rng rng(6);
    std::vector<double> scores(4);
    for (auto& v : scores) v = rng.uniform(-2, 2);
    SupervisionTargets t;
    t.y_attn = BinaryMatrix(2, 2);
    t.y_attn.at(0, 1) = 1;
    t.y_attn.at(1, 0) = 1;
    ListenerOutputs out;
    out.attn = ad::Tensor::constant({2, 2}, scores);
    double acc = 0.0;
    for (int i = 0; i < 2; ++i) {
      double row = 0.0;
      for (int j = 0; j < 2; ++j) row += stable_bce(scores[i * 2 + j], t.y_attn.at(i, j));
      acc += row / 2.0;
    }
    CHECK(loss_attn(out, t).item() == doctest::Approx(acc / 2.0).epsilon(1e-12));
  }
  SUBCASE("shape mismatch is rejected") {
    ListenerOutputs out;
    out.attn = ad::Tensor::constant({2, 3}, 0.0);
    SupervisionTargets t;
    t.y_attn = BinaryMatrix(2, 2);
    CHECK_THROWS_AS(loss_attn(out, t), ShapeMismatch);
  }
}

TEST_CASE("loss_org values") {
  CHECK(loss_org(outputs_with({}, {}, {0.5, 0.5, 0.5, 0.5}), 1).item() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-9));
  CHECK(loss_org(outputs_with({}, {}, {50, 0, 0}), 0).item() < 1e-12);
  const std::vector<double> logits = {0.2, -0.7, 1.4};
  double z = 0.0;
  for (double v : logits) z += std::exp(v);
  CHECK(loss_org(outputs_with({}, {}, logits), 2).item() ==
        doctest::Approx(std::log(z) - 1.4).epsilon(1e-12));
}

TEST_CASE("loss_total composition hits 10.5 exactly with paper weights") {
  ListenerConfig cfg;  // alpha = beta = 3.0, gamma = 0.5 defaults
  AuxFlags flags;
  flags.anc = flags.attn = flags.dis = true;
  const ad::Tensor total =
      combine_listener_losses(ad::Tensor::scalar(1.0), ad::Tensor::scalar(2.0),
                              ad::Tensor::scalar(0.5), ad::Tensor::scalar(4.0), cfg, flags);
  CHECK(total.item() == 10.5);  // exact at 64-bit

  SUBCASE("all aux disabled equals the original loss") {
    AuxFlags none;
    CHECK(combine_listener_losses(ad::Tensor::scalar(1.25), ad::Tensor::scalar(9),
                                  ad::Tensor::scalar(9), ad::Tensor::scalar(9), cfg, none)
              .item() == 1.25);
  }
  SUBCASE("gamma zero drops exactly the distractor term") {
    ListenerConfig no_dis = cfg;
    no_dis.gamma = 0.0;
    const double with_dis =
        combine_listener_losses(ad::Tensor::scalar(1.0), ad::Tensor::scalar(2.0),
                                ad::Tensor::scalar(0.5), ad::Tensor::scalar(4.0), no_dis,
                                flags)
            .item();
    CHECK(with_dis == 1.0 + 3.0 * 2.0 + 3.0 * 0.5);
  }
}

TEST_CASE("loss_total through the model is finite and differentiable") {
  const Scene s = demo_scene(4);
  ListenerModel model(small_config(), vocab(), classes(), 11);
  const GroundedUtterance u = demo_utterance(s);
  const SupervisionTargets t = build_targets(u, s, false);
  AuxFlags flags;
  flags.anc = flags.attn = flags.dis = true;
  const ListenerOutputs out = model.forward(s, u.tokens);
  const ad::Tensor loss = loss_total(out, t, s.index_of(u.target_object), model.config(),
                                     flags);
  CHECK(std::isfinite(loss.item()));
  CHECK(loss.item() >= 0.0);
  model.params().zero_grad();
  loss.backward();
  CHECK(model.params().get("head.anchor.w2").grad() !=
        std::vector<double>(8, 0.0));
}

TEST_CASE("loss_contrastive candidate scoring") {
  SUBCASE("single candidate costs nothing") {
    Scene s;
    s.scene_id = "demo";
    s.objects = {obj(0, "chair", 0, 0, 0.4, 1, 1, 1), obj(1, "table", 2, 0, 0.4, 1, 1, 1)};
    ListenerModel model(small_config(), vocab(), classes(), 5);
    GroundedUtterance u;
    u.id = "c";
    u.scene_id = "demo";
    u.tokens = {"the", "chair", "closest", "to", "the", "table"};
    u.target_object = 0;
    u.entities = {{{0, 2}, {0}, true}, {{4, 6}, {1}, false}};
    const auto out = model.forward(s, u.tokens);
    const auto loss = loss_contrastive(out, {{RelationType::kClosest, 1}}, u, s,
                                       model.params());
    CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("two identical candidates give ln 2") {
    Scene s;
    s.scene_id = "demo";
    // the distractor sits exactly on the target, so their features coincide
    s.objects = {obj(0, "chair", 1, 0, 0.4, 1, 1, 1), obj(1, "table", -2, 0, 0.4, 1, 1, 1),
                 obj(2, "chair", 1, 0, 0.4, 1, 1, 1)};
    ListenerModel model(small_config(), vocab(), classes(), 5);
    GroundedUtterance u;
    u.id = "c2";
    u.scene_id = "demo";
    u.tokens = {"the", "chair", "closest", "to", "the", "table"};
    u.target_object = 0;
    u.entities = {{{0, 2}, {0}, true}, {{4, 6}, {1}, false}};
    const auto out = model.forward(s, u.tokens);
    const auto loss = loss_contrastive(out, {{RelationType::kNextTo, 1}}, u, s,
                                       model.params());
    CHECK(loss.item() == doctest::Approx(std::log(2.0)).epsilon(1e-10));
  }
  SUBCASE("no sample contributes zero") {
    const Scene s = demo_scene(3);
    ListenerModel model(small_config(), vocab(), classes(), 5);
    const GroundedUtterance u = demo_utterance(s);
    const auto out = model.forward(s, u.tokens);
    CHECK(loss_contrastive(out, std::nullopt, u, s, model.params()).item() == 0.0);
  }
  SUBCASE("three candidates against an independent recomputation") {
    Scene s;
    s.scene_id = "demo";
    s.objects = {obj(0, "chair", 1, 0, 0.4, 1, 1, 1), obj(1, "table", -2, 1, 0.4, 1, 1, 1),
                 obj(2, "chair", 3, -1, 0.4, 1, 1, 1), obj(3, "chair", -1, 2, 0.4, 1, 1, 1)};
    ListenerModel model(small_config(), vocab(), classes(), 19);
    GroundedUtterance u;
    u.id = "c3";
    u.scene_id = "demo";
    u.tokens = {"the", "chair", "closest", "to", "the", "table"};
    u.target_object = 0;
    u.entities = {{{0, 2}, {0}, true}, {{4, 6}, {1}, false}};
    const auto out = model.forward(s, u.tokens);
    const auto loss =
        loss_contrastive(out, {{RelationType::kClosest, 1}}, u, s, model.params());

    // plain-loop recomputation: concat - tanh mlp - cosine - softmax CE
    const auto& params = model.params();
    const int d = 8;
    const auto& enc = out.obj_enc.values();
    const auto rel_table = params.get("relation_embedding").values();
    std::vector<double> rel(rel_table.begin() +
                                static_cast<long>(RelationType::kClosest) * d,
                            rel_table.begin() +
                                (static_cast<long>(RelationType::kClosest) + 1) * d);
    auto mlp_pair = [&](int anchor_idx, int cand_idx) {
      std::vector<double> in(2 * d);
      for (int t = 0; t < d; ++t) {
        in[t] = enc[anchor_idx * d + t];
        in[d + t] = enc[cand_idx * d + t];
      }
      const auto& w1 = params.get("rel_pair.w1").values();
      const auto& b1 = params.get("rel_pair.b1").values();
      const auto& w2 = params.get("rel_pair.w2").values();
      const auto& b2 = params.get("rel_pair.b2").values();
      std::vector<double> h(d), f(d);
      for (int j = 0; j < d; ++j) {
        double acc = b1[j];
        for (int i = 0; i < 2 * d; ++i) acc += in[i] * w1[i * d + j];
        h[j] = std::tanh(acc);
      }
      for (int j = 0; j < d; ++j) {
        double acc = b2[j];
        for (int i = 0; i < d; ++i) acc += h[i] * w2[i * d + j];
        f[j] = acc;
      }
      return f;
    };
    auto cosine = [&](const std::vector<double>& a, const std::vector<double>& b) {
      double dot = 0, na = 0, nb = 0;
      for (int i = 0; i < d; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
      }
      return dot / (std::sqrt(na) * std::sqrt(nb));
    };
    const std::vector<int> candidates = {0, 2, 3};  // target first, then distractors
    std::vector<double> scores;
    for (int c : candidates) scores.push_back(cosine(rel, mlp_pair(1, c)));
    double z = 0.0;
    for (double v : scores) z += std::exp(v);
    const double want = std::log(z) - scores[0];
    CHECK(loss.item() == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("loss_spatial classification") {
  const Scene s = demo_scene(3);
  ListenerModel model(small_config(), vocab(), classes(), 6);
  const GroundedUtterance u = demo_utterance(s);
  const auto out = model.forward(s, u.tokens);

  SUBCASE("no known pairs costs nothing") {
    CHECK(loss_spatial(out, {}, s, model.params()).item() == 0.0);
  }
  SUBCASE("uniform logits cost ln 13") {
    // zero the head so every class scores alike
    auto& w2 = model.params().get("rel_spatial.w2").mutable_values();
    std::fill(w2.begin(), w2.end(), 0.0);
    auto& b2 = model.params().get("rel_spatial.b2").mutable_values();
    std::fill(b2.begin(), b2.end(), 0.0);
    const std::vector<RelationInstance> pairs = {{0, 1, RelationType::kNextTo, {}}};
    CHECK(loss_spatial(out, pairs, s, model.params()).item() ==
          doctest::Approx(std::log(13.0)).epsilon(1e-9));
  }
  SUBCASE("saturated correct class costs nothing") {
    auto& w2 = model.params().get("rel_spatial.w2").mutable_values();
    std::fill(w2.begin(), w2.end(), 0.0);
    auto& b2 = model.params().get("rel_spatial.b2").mutable_values();
    std::fill(b2.begin(), b2.end(), 0.0);
    b2[static_cast<int>(RelationType::kNextTo)] = 60.0;
    const std::vector<RelationInstance> pairs = {{0, 1, RelationType::kNextTo, {}}};
    CHECK(loss_spatial(out, pairs, s, model.params()).item() < 1e-12);
  }
}

TEST_CASE("assign_anchor_labels argmax with ties and zero IoU") {
  const Box3 unit{{0, 0, 0}, {1, 1, 1}, 0};
  SUBCASE("identity proposals label themselves") {
    const std::vector<Box3> proposals = {unit,
                                         {{3, 0, 0}, {1, 1, 1}, 0},
                                         {{6, 0, 0}, {1, 1, 1}, 0}};
    CHECK(assign_anchor_labels(proposals, {proposals[1]}) == std::vector<int>{0, 1, 0});
    CHECK(assign_anchor_labels(proposals, proposals) == std::vector<int>{1, 1, 1});
  }
  SUBCASE("argmax picks the highest overlap") {
    const std::vector<Box3> proposals = {{{0.9, 0, 0}, {1, 1, 1}, 0},
                                         {{0.25, 0, 0}, {1, 1, 1}, 0},
                                         {{0.5, 0, 0}, {1, 1, 1}, 0}};
    CHECK(assign_anchor_labels(proposals, {unit}) == std::vector<int>{0, 1, 0});
  }
  SUBCASE("disjoint ground truth assigns nothing") {
    const std::vector<Box3> proposals = {unit};
    CHECK(assign_anchor_labels(proposals, {{{9, 9, 9}, {1, 1, 1}, 0}}) ==
          std::vector<int>{0});
  }
  SUBCASE("ties break to the lowest proposal index") {
    const std::vector<Box3> proposals = {{{0.5, 0, 0}, {1, 1, 1}, 0},
                                         {{0.5, 0, 0}, {1, 1, 1}, 0}};
    CHECK(assign_anchor_labels(proposals, {unit}) == std::vector<int>{1, 0});
  }
  SUBCASE("empty proposals are rejected") {
    CHECK_THROWS_AS(assign_anchor_labels({}, {unit}), EmptyProposals);
  }
  SUBCASE("matches the oracle on 100 random configurations") {
    Rng rng(55);
    for (int k = 0; k < 100; ++k) {
      std::vector<Box3> proposals, gts;
      const int np = 1 + rng.next_int(6);
      const int ng = rng.next_int(4);
      for (int i = 0; i < np; ++i)
        proposals.push_back({{rng.uniform(-2, 2), rng.uniform(-2, 2), 0},
                             {rng.uniform(0.5, 2), rng.uniform(0.5, 2), 1},
                             0});
      // include exact duplicates to exercise the tie break
      if (np > 1 && rng.bernoulli(0.3)) proposals[np - 1] = proposals[0];
      for (int i = 0; i < ng; ++i) {
        if (rng.bernoulli(0.2)) {
          gts.push_back({{9, 9, 9}, {1, 1, 1}, 0});  // zero IoU everywhere
        } else {
          gts.push_back({{rng.uniform(-2, 2), rng.uniform(-2, 2), 0},
                         {rng.uniform(0.5, 2), rng.uniform(0.5, 2), 1},
                         0});
        }
      }
      const std::vector<int> got = assign_anchor_labels(proposals, gts);
      CHECK(got == testing::assign_anchor_labels_oracle(proposals, gts));
      CHECK(std::count(got.begin(), got.end(), 1) <= static_cast<long>(gts.size()));
    }
  }
}

TEST_CASE("anchor_f1 micro averaging") {
  // perfect prediction
  CHECK(anchor_f1({5, -5, 5}, {1, 0, 1}) == 1.0);
  // all negative with positives present
  CHECK(anchor_f1({-5, -5}, {1, 1}) == 0.0);
  // TP=2, FP=1, FN=1 -> 2*2/(2*2+1+1)
  CHECK(anchor_f1({5, 5, 5, -5}, {1, 1, 0, 1}) ==
        doctest::Approx(2.0 * 2.0 / (2.0 * 2.0 + 1.0 + 1.0)).epsilon(1e-12));
  // pooled accumulation matches a single concatenated call
  MicroF1 pooled;
  pooled.add({5, -5}, {1, 0});
  pooled.add({5, 5, -5}, {1, 0, 1});
  CHECK(pooled.value() == anchor_f1({5, -5, 5, 5, -5}, {1, 0, 1, 0, 1}));
}
