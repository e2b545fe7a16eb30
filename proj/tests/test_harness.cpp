#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "scanents/harness.hpp"
#include "scanents/rng.hpp"

using namespace scanents;
namespace ad = scanents::ad;

namespace {

GenConfig tiny_gen(uint64_t seed) {
  GenConfig cfg;
  cfg.n_scenes = 10;
  cfg.utterances_per_scene = 4;
  cfg.seed = seed;
  cfg.max_objects = 8;
  cfg.n_classes = 7;
  return cfg;
}

TrainConfig tiny_train(uint64_t seed, const std::string& aux, int epochs = 3) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.lr = 2e-3;
  cfg.seed = seed;
  cfg.aux = AuxFlags::parse(aux);
  cfg.listener.d = 16;
  cfg.speaker.d = 16;
  return cfg;
}

}  // namespace

TEST_CASE("aux flag parsing round trips") {
  const AuxFlags f = AuxFlags::parse("anc,attn,dis,rel,ent,men");
  CHECK(f.anc);
  CHECK(f.attn);
  CHECK(f.dis);
  CHECK(f.rel);
  CHECK(f.ent);
  CHECK(f.men);
  CHECK(AuxFlags::parse(f.to_string()) == f);
  CHECK(AuxFlags::parse("") == AuxFlags{});
  CHECK(AuxFlags::parse("anc").to_string() == "anc");
  CHECK_THROWS_AS(AuxFlags::parse("bogus"), Error);
}

TEST_CASE("train config JSON carries nested model configs") {
  TrainConfig cfg = tiny_train(9, "anc,dis");
  cfg.listener.use_nm_token = true;
  cfg.speaker.max_len = 12;
  const TrainConfig back = train_config_from_json(train_config_to_json(cfg));
  CHECK(back.epochs == cfg.epochs);
  CHECK(back.lr == cfg.lr);
  CHECK(back.seed == cfg.seed);
  CHECK(back.aux == cfg.aux);
  CHECK(back.listener == cfg.listener);
  CHECK(back.speaker == cfg.speaker);
  CHECK_THROWS_AS(train_config_from_json("{\"epochs\": -1}"), Error);
}

TEST_CASE("split_by_scene partitions utterances by scene order") {
  const Corpus corpus = generate_corpus(tiny_gen(2));
  const auto [train, test] = split_by_scene(corpus, 0.8);
  CHECK(train.size() + test.size() == corpus.utterances.size());
  CHECK(train.size() == 8 * 4);
  std::set<std::string> train_scenes, test_scenes;
  for (int i : train) train_scenes.insert(corpus.utterances[i].scene_id);
  for (int i : test) test_scenes.insert(corpus.utterances[i].scene_id);
  for (const auto& id : test_scenes) CHECK(!train_scenes.count(id));
  CHECK_THROWS_AS(split_by_scene(corpus, 1.5), Error);
}

TEST_CASE("corpus save and load round trip") {
  const Corpus corpus = generate_corpus(tiny_gen(3));
  save_corpus(corpus, "harness_test_out");
  const Corpus back =
      load_corpus("harness_test_out/annotations.jsonl", "harness_test_out/scenes.jsonl");
  CHECK(back.utterances == corpus.utterances);
  CHECK(back.scenes.size() == corpus.scenes.size());
  const auto a = corpus.scene_map();
  const auto b = back.scene_map();
  CHECK(a == b);
}

TEST_CASE("evaluate with an oracle predictor is perfect everywhere") {
  const Corpus corpus = generate_corpus(tiny_gen(4));
  const auto oracle = [&corpus](const Scene& scene, const GroundedUtterance& u) {
    Prediction p;
    p.target_index = scene.index_of(u.target_object);
    return p;
  };
  const EvalReport r = evaluate(oracle, corpus, all_indices(corpus));
  CHECK(r.overall_acc == 1.0);
  CHECK(r.easy_acc == 1.0);
  CHECK(r.n_examples == static_cast<long>(corpus.utterances.size()));
  if (r.n_hard > 0) CHECK(r.hard_acc == 1.0);
  if (r.n_view_dep > 0) CHECK(r.view_dep_acc == 1.0);
}

TEST_CASE("evaluate matches the analytic expectation for a random predictor") {
  GenConfig gcfg = tiny_gen(5);
  gcfg.n_scenes = 40;
  gcfg.utterances_per_scene = 10;
  const Corpus corpus = generate_corpus(gcfg);
  const auto indices = all_indices(corpus);
  const auto scene_map = corpus.scene_map();

  double expected = 0.0;
  double variance = 0.0;
  for (int i : indices) {
    const double m =
        static_cast<double>(scene_map.at(corpus.utterances[i].scene_id).objects.size());
    expected += 1.0 / m;
    variance += (1.0 / m) * (1.0 - 1.0 / m);
  }
  expected /= static_cast<double>(indices.size());
  const double sigma = std::sqrt(variance) / static_cast<double>(indices.size());

  Rng rng(99);
  const auto uniform_random = [&rng](const Scene& scene, const GroundedUtterance&) {
    Prediction p;
    p.target_index = rng.next_int(static_cast<int>(scene.objects.size()));
    return p;
  };
  const EvalReport r = evaluate(uniform_random, corpus, indices);
  CHECK(std::abs(r.overall_acc - expected) <= 3.0 * sigma);

  SUBCASE("overall is the weighted mean of the splits") {
    CHECK(r.n_easy + r.n_hard == r.n_examples);
    CHECK(r.n_view_dep + r.n_view_indep == r.n_examples);
    const double easy_hard =
        (r.easy_acc * r.n_easy + r.hard_acc * r.n_hard) / static_cast<double>(r.n_examples);
    const double views = (r.view_dep_acc * r.n_view_dep + r.view_indep_acc * r.n_view_indep) /
                         static_cast<double>(r.n_examples);
    CHECK(r.overall_acc == doctest::Approx(easy_hard).epsilon(1e-12));
    CHECK(r.overall_acc == doctest::Approx(views).epsilon(1e-12));
  }
}

TEST_CASE("evaluate is order independent") {
  const Corpus corpus = generate_corpus(tiny_gen(6));
  const TrainConfig cfg = tiny_train(1, "", 1);
  const TrainedListener trained = train_listener(corpus, all_indices(corpus), cfg);
  auto indices = all_indices(corpus);
  const EvalReport a = evaluate(*trained.model, corpus, indices);
  Rng rng(3);
  rng.shuffle(indices);
  const EvalReport b = evaluate(*trained.model, corpus, indices);
  CHECK(a.overall_acc == b.overall_acc);
  CHECK(a.anchor_f1 == b.anchor_f1);
  CHECK(eval_report_to_json(a) == eval_report_to_json(b));
}

TEST_CASE("listener training is deterministic and its loss decreases") {
  const Corpus corpus = generate_corpus(tiny_gen(7));
  const auto indices = all_indices(corpus);
  const TrainConfig cfg = tiny_train(11, "anc,attn,dis", 10);

  const TrainedListener a = train_listener(corpus, indices, cfg);
  const TrainedListener b = train_listener(corpus, indices, cfg);
  CHECK(checkpoint_to_string(listener_to_checkpoint(*a.model)) ==
        checkpoint_to_string(listener_to_checkpoint(*b.model)));

  REQUIRE(a.report.epochs.size() == 10);
  for (const auto& e : a.report.epochs) CHECK(std::isfinite(e.mean_loss));
  // non-increasing 5-epoch moving average
  std::vector<double> ma;
  for (size_t i = 0; i + 5 <= a.report.epochs.size(); ++i) {
    double acc = 0.0;
    for (size_t k = i; k < i + 5; ++k) acc += a.report.epochs[k].mean_loss;
    ma.push_back(acc / 5.0);
  }
  for (size_t i = 1; i < ma.size(); ++i) CHECK(ma[i] <= ma[i - 1] + 1e-9);

  SUBCASE("empty aux flags train the bare objective") {
    TrainConfig bare = tiny_train(11, "", 1);
    const TrainedListener c = train_listener(corpus, indices, bare);
    CHECK(std::isfinite(c.report.final_loss));
    CHECK(c.report.aux.empty());
  }
}

TEST_CASE("flag settings share identical initial parameters at one seed") {
  const Corpus corpus = generate_corpus(tiny_gen(8));
  // training over an empty index list performs no updates, exposing the
  // freshly initialized parameters
  const std::vector<int> none;
  const TrainedListener plain = train_listener(corpus, none, tiny_train(13, "", 1));
  const TrainedListener full =
      train_listener(corpus, none, tiny_train(13, "anc,attn,dis,rel", 1));
  CHECK(checkpoint_to_string(listener_to_checkpoint(*plain.model)) ==
        checkpoint_to_string(listener_to_checkpoint(*full.model)));
}

TEST_CASE("rel-flag training runs the spatial losses") {
  const Corpus corpus = generate_corpus(tiny_gen(14));
  const TrainConfig cfg = tiny_train(5, "anc,rel", 2);
  const TrainedListener trained = train_listener(corpus, all_indices(corpus), cfg);
  CHECK(std::isfinite(trained.report.final_loss));
  CHECK(trained.report.aux == "anc,rel");
}

TEST_CASE("listener checkpoints reload to the same evaluation") {
  const Corpus corpus = generate_corpus(tiny_gen(9));
  const auto indices = all_indices(corpus);
  const TrainedListener trained = train_listener(corpus, indices, tiny_train(2, "anc", 2));
  const EvalReport before = evaluate(*trained.model, corpus, indices);

  const CheckpointData ckpt = listener_to_checkpoint(*trained.model);
  save_checkpoint(ckpt, "harness_test_out/listener.json");
  const auto reloaded = listener_from_checkpoint(load_checkpoint("harness_test_out/listener.json"));
  const EvalReport after = evaluate(*reloaded, corpus, indices);
  CHECK(eval_report_to_json(before) == eval_report_to_json(after));
}

TEST_CASE("speaker training decreases its loss and reloads") {
  const Corpus corpus = generate_corpus(tiny_gen(10));
  const auto indices = all_indices(corpus);
  TrainConfig cfg = tiny_train(3, "ent,men", 4);
  const TrainedSpeaker trained = train_speaker(corpus, indices, cfg);
  REQUIRE(trained.report.epochs.size() == 4);
  CHECK(trained.report.epochs.back().mean_loss < trained.report.epochs.front().mean_loss);

  const CheckpointData ckpt = speaker_to_checkpoint(*trained.model);
  const auto reloaded = speaker_from_checkpoint(ckpt);
  const Scene scene = center_scene(corpus.scenes[0]);
  CHECK(reloaded->encode_objects(scene).values() ==
        trained.model->encode_objects(scene).values());

  SUBCASE("speaker seeded from a listener encoder") {
    const TrainedListener lt = train_listener(corpus, indices, tiny_train(4, "anc", 1));
    const CheckpointData lckpt = listener_to_checkpoint(*lt.model);
    const TrainedSpeaker seeded = train_speaker(corpus, indices, cfg, &lckpt);
    CHECK(std::isfinite(seeded.report.final_loss));
  }
}

TEST_CASE("knockout modes follow the lesioning transforms") {
  const Corpus corpus = generate_corpus(tiny_gen(12));
  const auto indices = all_indices(corpus);
  const TrainedListener trained = train_listener(corpus, indices, tiny_train(6, "anc", 2));

  const double base = evaluate(*trained.model, corpus, indices).overall_acc;
  for (KnockoutMode mode : {KnockoutMode::kLesionAnchorObjects,
                            KnockoutMode::kLesionAnchorWords, KnockoutMode::kAnchorsOnly}) {
    const double acc = knockout(*trained.model, corpus, indices, mode);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
    CHECK(std::isfinite(base - acc));
  }
  CHECK(knockout_mode_from_name("anchors-only") == KnockoutMode::kAnchorsOnly);
  CHECK_THROWS_AS(knockout_mode_from_name("nope"), Error);

  SUBCASE("word lesioning keeps anchor-free utterances intact") {
    // build a corpus copy whose utterances have no anchors
    Corpus bare = corpus;
    for (auto& u : bare.utterances) {
      u.entities = {{u.target_entity().span, {u.target_object}, true}};
    }
    const double plain = evaluate(*trained.model, bare, indices).overall_acc;
    const double lesioned =
        knockout(*trained.model, bare, indices, KnockoutMode::kLesionAnchorWords);
    CHECK(plain == lesioned);
  }
  SUBCASE("anchors-only with neither anchors nor distractors is trivial") {
    Corpus bare = corpus;
    for (auto& s : bare.scenes) {
      // make every class unique so no distractors survive
      int i = 0;
      for (auto& o : s.objects) o.class_label = "cls" + std::to_string(i++);
    }
    for (auto& u : bare.utterances) {
      const Scene& s = bare.scene_map().at(u.scene_id);
      u.tokens = {"the", s.object_by_id(u.target_object).class_label};
      u.entities = {{{0, 2}, {u.target_object}, true}};
      u.view_dependent = false;
    }
    const double acc =
        knockout(*trained.model, bare, indices, KnockoutMode::kAnchorsOnly);
    CHECK(acc == 1.0);  // single-candidate argmax
  }
}

TEST_CASE("gradcheck_all passes across three seeds") {
  for (uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const GradCheckReport r = gradcheck_all(seed, 2);
    CHECK(r.all_pass);
    CHECK(r.results.size() == 8);
    for (const auto& res : r.results) {
      CAPTURE(res.loss_name);
      CHECK(res.max_rel_err < 1e-4);
    }
  }
}
