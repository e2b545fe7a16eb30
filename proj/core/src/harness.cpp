#include "scanents/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "scanents/corpus_stats.hpp"
#include "scanents/optim.hpp"

namespace scanents {

namespace ad = scanents::ad;

std::string train_config_to_json(const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["lr"] = cfg.lr;
  j["seed"] = cfg.seed;
  j["aux"] = cfg.aux.to_string();
  j["listener"] = nlohmann::ordered_json::parse(listener_config_to_json(cfg.listener));
  j["speaker"] = nlohmann::ordered_json::parse(speaker_config_to_json(cfg.speaker));
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid train config: ") + e.what());
  }
  TrainConfig cfg;
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.lr = j.value("lr", cfg.lr);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("aux")) cfg.aux = AuxFlags::parse(j.at("aux").get<std::string>());
  if (j.contains("listener")) cfg.listener = listener_config_from_json(j.at("listener").dump());
  if (j.contains("speaker")) cfg.speaker = speaker_config_from_json(j.at("speaker").dump());
  if (cfg.epochs <= 0 || cfg.batch_size <= 0 || cfg.lr <= 0)
    throw Error("train config: epochs, batch_size and lr must be positive");
  return cfg;
}

std::string train_report_to_json(const TrainReport& r) {
  nlohmann::ordered_json j;
  j["model"] = r.model_kind;
  j["aux"] = r.aux;
  j["seed"] = r.seed;
  nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
  for (const auto& e : r.epochs) {
    nlohmann::ordered_json je;
    je["epoch"] = e.epoch;
    je["mean_loss"] = e.mean_loss;
    epochs.push_back(std::move(je));
  }
  j["epochs"] = std::move(epochs);
  j["final_loss"] = r.final_loss;
  return j.dump(2);
}

std::string eval_report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["overall_acc"] = r.overall_acc;
  j["easy_acc"] = r.easy_acc;
  j["hard_acc"] = r.hard_acc;
  j["view_dep_acc"] = r.view_dep_acc;
  j["view_indep_acc"] = r.view_indep_acc;
  j["anchor_f1"] = r.anchor_f1;
  j["n_examples"] = r.n_examples;
  j["n_easy"] = r.n_easy;
  j["n_hard"] = r.n_hard;
  j["n_view_dep"] = r.n_view_dep;
  j["n_view_indep"] = r.n_view_indep;
  nlohmann::ordered_json per_seed = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.per_seed) per_seed[std::to_string(k)] = v;
  j["per_seed"] = std::move(per_seed);
  nlohmann::ordered_json knockout = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.knockout) knockout[k] = v;
  j["knockout"] = std::move(knockout);
  return j.dump(2);
}

std::string eval_report_to_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "metric,value\n";
  out << "overall_acc," << r.overall_acc << "\n";
  out << "easy_acc," << r.easy_acc << "\n";
  out << "hard_acc," << r.hard_acc << "\n";
  out << "view_dep_acc," << r.view_dep_acc << "\n";
  out << "view_indep_acc," << r.view_indep_acc << "\n";
  out << "anchor_f1," << r.anchor_f1 << "\n";
  out << "n_examples," << r.n_examples << "\n";
  for (const auto& [k, v] : r.knockout) out << "knockout_" << k << "," << v << "\n";
  return out.str();
}

// -- corpus plumbing -----------------------------------------------------------

Corpus load_corpus(const std::string& annotations_path, const std::string& scenes_path) {
  Corpus corpus;
  auto scene_map = load_scenes(scenes_path);
  for (auto& [id, scene] : scene_map) corpus.scenes.push_back(scene);
  std::ifstream in(annotations_path);
  if (!in) throw IoError("cannot open annotations: " + annotations_path);
  corpus.utterances = parse_annotations(in);
  for (const auto& u : corpus.utterances) {
    auto it = scene_map.find(u.scene_id);
    if (it == scene_map.end())
      throw MissingScene("utterance " + u.id + " references missing scene " + u.scene_id);
    validate_against(u, it->second);
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir + ": " + ec.message());
  {
    std::ofstream out(fs::path(out_dir) / "scenes.jsonl");
    if (!out) throw IoError("cannot write scenes.jsonl under " + out_dir);
    serialize_scenes_jsonl(corpus.scenes, out);
  }
  {
    std::ofstream out(fs::path(out_dir) / "annotations.jsonl");
    if (!out) throw IoError("cannot write annotations.jsonl under " + out_dir);
    serialize_annotations(corpus.utterances, out);
  }
}

std::pair<std::vector<int>, std::vector<int>> split_by_scene(const Corpus& corpus,
                                                             double train_fraction) {
  if (train_fraction < 0.0 || train_fraction > 1.0)
    throw Error("train_fraction must lie in [0,1]");
  const size_t n_train_scenes =
      static_cast<size_t>(std::ceil(train_fraction * static_cast<double>(corpus.scenes.size())));
  std::set<std::string> train_scene_ids;
  for (size_t i = 0; i < corpus.scenes.size() && i < n_train_scenes; ++i)
    train_scene_ids.insert(corpus.scenes[i].scene_id);
  std::vector<int> train, test;
  for (size_t i = 0; i < corpus.utterances.size(); ++i) {
    (train_scene_ids.count(corpus.utterances[i].scene_id) ? train : test)
        .push_back(static_cast<int>(i));
  }
  return {train, test};
}

std::vector<int> all_indices(const Corpus& corpus) {
  std::vector<int> idx(corpus.utterances.size());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

Vocabulary corpus_vocabulary(const Corpus& corpus) {
  std::set<std::string> words;
  for (const auto& u : corpus.utterances) words.insert(u.tokens.begin(), u.tokens.end());
  return Vocabulary(std::vector<std::string>(words.begin(), words.end()));
}

ClassVocabulary corpus_classes(const Corpus& corpus) {
  std::vector<std::string> labels;
  for (const auto& s : corpus.scenes)
    for (const auto& o : s.objects) labels.push_back(o.class_label);
  return ClassVocabulary(labels);
}

// -- training -------------------------------------------------------------------

namespace {

struct PreparedListenerExample {
  const GroundedUtterance* u = nullptr;
  Scene scene;  // centered
  std::vector<int64_t> token_ids;
  SupervisionTargets targets;
  int target_index = 0;
  std::vector<int64_t> class_ids;
  std::optional<std::pair<RelationType, int>> rel_sample;
  std::vector<RelationInstance> rel_instances;
};


}  // namespace

TrainedListener train_listener(const Corpus& corpus, const std::vector<int>& example_indices,
                               const TrainConfig& cfg) {
  const auto scene_map = corpus.scene_map();
  const Vocabulary vocab = corpus_vocabulary(corpus);
  const ClassVocabulary classes = corpus_classes(corpus);
  auto model = std::make_unique<ListenerModel>(cfg.listener, vocab, classes, cfg.seed);
  const ListenerConfig& lcfg = model->config();

  std::vector<PreparedListenerExample> examples;
  examples.reserve(example_indices.size());
  for (int idx : example_indices) {
    const GroundedUtterance& u = corpus.utterances.at(idx);
    PreparedListenerExample ex;
    ex.u = &u;
    ex.scene = center_scene(scene_map.at(u.scene_id));
    ex.token_ids = vocab.encode(u.tokens);
    ex.targets = build_targets(u, ex.scene, lcfg.use_nm_token);
    ex.target_index = ex.scene.index_of(u.target_object);
    for (const auto& o : ex.scene.objects) ex.class_ids.push_back(classes.id(o.class_label));
    if (cfg.aux.rel) {
      ex.rel_sample = sample_contrastive_relation(
          u, ex.scene, Rng::mix(cfg.seed, static_cast<uint64_t>(idx) + 0xc0ffee));
      ex.rel_instances = extract_relations(u, ex.scene, default_viewpoint());
    }
    examples.push_back(std::move(ex));
  }

  ad::Adam opt(cfg.lr);
  Rng shuffle_rng(Rng::mix(cfg.seed, 0x0dd5));
  TrainReport report;
  report.model_kind = "listener";
  report.aux = cfg.aux.to_string();
  report.seed = cfg.seed;

  std::vector<int> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      model->params().zero_grad();
      for (size_t k = start; k < stop; ++k) {
        const auto& ex = examples[order[k]];
        ListenerOutputs out = model->forward(ex.scene, ex.token_ids);
        ad::Tensor loss =
            lcfg.use_class_aux
                ? combine_listener_losses(
                      loss_org(out, ex.target_index, ex.class_ids, lcfg),
                      cfg.aux.anc ? loss_anc(out, ex.targets) : ad::Tensor(),
                      cfg.aux.attn ? loss_attn(out, ex.targets) : ad::Tensor(),
                      cfg.aux.dis ? loss_dis(out, ex.targets) : ad::Tensor(), lcfg, cfg.aux)
                : loss_total(out, ex.targets, ex.target_index, lcfg, cfg.aux);
        if (cfg.aux.rel) {
          loss = ad::add(loss, loss_contrastive(out, ex.rel_sample, *ex.u, ex.scene,
                                                model->params()));
          loss = ad::add(loss,
                         loss_spatial(out, ex.rel_instances, ex.scene, model->params()));
        }
        loss_sum += loss.item();
        ad::scale(loss, inv_batch).backward();
      }
      opt.step(model->params());
    }
    report.epochs.push_back(
        {epoch, examples.empty() ? 0.0 : loss_sum / static_cast<double>(examples.size())});
  }
  report.final_loss = report.epochs.empty() ? 0.0 : report.epochs.back().mean_loss;
  return {std::move(model), std::move(report)};
}

TrainedSpeaker train_speaker(const Corpus& corpus, const std::vector<int>& example_indices,
                             const TrainConfig& cfg, const CheckpointData* init_encoder_from) {
  const auto scene_map = corpus.scene_map();
  const Vocabulary vocab = corpus_vocabulary(corpus);
  const ClassVocabulary classes = corpus_classes(corpus);
  auto model = std::make_unique<SpeakerModel>(cfg.speaker, vocab, classes, cfg.seed);
  if (init_encoder_from) model->init_from_listener(*init_encoder_from);
  const SpeakerConfig& scfg = model->config();

  struct PreparedSpeakerExample {
    const GroundedUtterance* u = nullptr;
    Scene scene;
    std::vector<int64_t> caption_ids;  // tokens only
    std::vector<int64_t> target_seq;   // tokens + <eos>
    std::vector<int> y_men;
  };
  std::vector<PreparedSpeakerExample> examples;
  examples.reserve(example_indices.size());
  for (int idx : example_indices) {
    const GroundedUtterance& u = corpus.utterances.at(idx);
    PreparedSpeakerExample ex;
    ex.u = &u;
    ex.scene = center_scene(scene_map.at(u.scene_id));
    ex.caption_ids = vocab.encode(u.tokens);
    ex.target_seq = ex.caption_ids;
    ex.target_seq.push_back(vocab.eos());
    ex.y_men = build_targets(u, ex.scene, false).y_men;
    examples.push_back(std::move(ex));
  }

  ad::Adam opt(cfg.lr);
  Rng shuffle_rng(Rng::mix(cfg.seed, 0x0dd5));
  TrainReport report;
  report.model_kind = "speaker";
  report.aux = cfg.aux.to_string();
  report.seed = cfg.seed;

  std::vector<int> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      model->params().zero_grad();
      for (size_t k = start; k < stop; ++k) {
        const auto& ex = examples[order[k]];
        ad::Tensor x_l = model->encode_objects(ex.scene);
        auto steps = model->decode_teacher_forced(x_l, ex.target_seq);
        ad::Tensor loss = loss_words(steps, ex.target_seq);
        if (cfg.aux.ent)
          loss = ad::add(loss, ad::scale(loss_ent(steps, *ex.u, ex.scene),
                                         scfg.entity_loss_weight));
        if (cfg.aux.men) {
          ad::Tensor token_feats = model->token_features(ex.caption_ids);
          loss = ad::add(loss, ad::scale(loss_men(model->mention_logits(x_l, token_feats),
                                                  ex.y_men),
                                         scfg.mention_loss_weight));
        }
        loss_sum += loss.item();
        ad::scale(loss, inv_batch).backward();
      }
      opt.step(model->params());
    }
    report.epochs.push_back(
        {epoch, examples.empty() ? 0.0 : loss_sum / static_cast<double>(examples.size())});
  }
  report.final_loss = report.epochs.empty() ? 0.0 : report.epochs.back().mean_loss;
  return {std::move(model), std::move(report)};
}

// -- checkpoints -------------------------------------------------------------------

CheckpointData listener_to_checkpoint(const ListenerModel& model) {
  CheckpointData ckpt;
  ckpt.model_kind = "listener";
  ckpt.meta["config"] = listener_config_to_json(model.config());
  ckpt.vocab_words = model.vocab().words();
  ckpt.class_labels = model.classes().labels();
  ckpt.params = snapshot_params(model.params());
  return ckpt;
}

std::unique_ptr<ListenerModel> listener_from_checkpoint(const CheckpointData& ckpt) {
  if (ckpt.model_kind != "listener")
    throw CheckpointMismatch("expected a listener checkpoint, got '" + ckpt.model_kind + "'");
  auto it = ckpt.meta.find("config");
  if (it == ckpt.meta.end()) throw CheckpointMismatch("listener checkpoint without config");
  const ListenerConfig cfg = listener_config_from_json(it->second);
  auto model = std::make_unique<ListenerModel>(cfg, Vocabulary(ckpt.vocab_words),
                                               ClassVocabulary(ckpt.class_labels), 0);
  restore_params(ckpt, model->params());
  return model;
}

CheckpointData speaker_to_checkpoint(const SpeakerModel& model) {
  CheckpointData ckpt;
  ckpt.model_kind = "speaker";
  ckpt.meta["config"] = speaker_config_to_json(model.config());
  ckpt.vocab_words = model.vocab().words();
  ckpt.class_labels = model.classes().labels();
  ckpt.params = snapshot_params(model.params());
  return ckpt;
}

std::unique_ptr<SpeakerModel> speaker_from_checkpoint(const CheckpointData& ckpt) {
  if (ckpt.model_kind != "speaker")
    throw CheckpointMismatch("expected a speaker checkpoint, got '" + ckpt.model_kind + "'");
  auto it = ckpt.meta.find("config");
  if (it == ckpt.meta.end()) throw CheckpointMismatch("speaker checkpoint without config");
  const SpeakerConfig cfg = speaker_config_from_json(it->second);
  auto model = std::make_unique<SpeakerModel>(cfg, Vocabulary(ckpt.vocab_words),
                                              ClassVocabulary(ckpt.class_labels), 0);
  restore_params(ckpt, model->params());
  return model;
}

// -- evaluation -------------------------------------------------------------------

EvalReport evaluate(const PredictFn& predict, const Corpus& corpus,
                    const std::vector<int>& example_indices) {
  const auto scene_map = corpus.scene_map();
  EvalReport r;
  long correct = 0, easy_correct = 0, hard_correct = 0, dep_correct = 0, indep_correct = 0;
  MicroF1 f1;
  for (int idx : example_indices) {
    const GroundedUtterance& u = corpus.utterances.at(idx);
    auto it = scene_map.find(u.scene_id);
    if (it == scene_map.end())
      throw MissingScene("utterance " + u.id + " references missing scene " + u.scene_id);
    const Scene scene = center_scene(it->second);
    const Prediction pred = predict(scene, u);
    const int target_index = scene.index_of(u.target_object);
    const bool ok = pred.target_index == target_index;
    const bool hard = same_class_distractors(scene, u.target_object).size() > 2;

    ++r.n_examples;
    correct += ok;
    if (hard) {
      ++r.n_hard;
      hard_correct += ok;
    } else {
      ++r.n_easy;
      easy_correct += ok;
    }
    if (u.view_dependent) {
      ++r.n_view_dep;
      dep_correct += ok;
    } else {
      ++r.n_view_indep;
      indep_correct += ok;
    }
    if (!pred.anchor_logits.empty())
      f1.add(pred.anchor_logits, build_targets(u, scene, false).y_anc);
  }
  auto ratio = [](long num, long den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  r.overall_acc = ratio(correct, r.n_examples);
  r.easy_acc = ratio(easy_correct, r.n_easy);
  r.hard_acc = ratio(hard_correct, r.n_hard);
  r.view_dep_acc = ratio(dep_correct, r.n_view_dep);
  r.view_indep_acc = ratio(indep_correct, r.n_view_indep);
  r.anchor_f1 = f1.value();
  return r;
}

namespace {

Prediction model_prediction(const ListenerModel& model, const Scene& centered_scene,
                            const std::vector<int64_t>& token_ids) {
  ad::NoGradGuard no_grad;
  ListenerOutputs out = model.forward(centered_scene, token_ids);
  const auto& logits = out.target_logits.values();
  Prediction pred;
  pred.target_index = static_cast<int>(
      std::distance(logits.begin(), std::max_element(logits.begin(), logits.end())));
  pred.anchor_logits = out.anchor_logits.values();
  return pred;
}

}  // namespace

EvalReport evaluate(const ListenerModel& model, const Corpus& corpus,
                    const std::vector<int>& example_indices) {
  return evaluate(
      [&model](const Scene& scene, const GroundedUtterance& u) {
        return model_prediction(model, scene, model.vocab().encode(u.tokens));
      },
      corpus, example_indices);
}

const std::string& knockout_mode_name(KnockoutMode mode) {
  static const std::string names[] = {"lesion-anchor-objects", "lesion-anchor-words",
                                      "anchors-only"};
  return names[static_cast<int>(mode)];
}

KnockoutMode knockout_mode_from_name(const std::string& name) {
  for (KnockoutMode m : {KnockoutMode::kLesionAnchorObjects, KnockoutMode::kLesionAnchorWords,
                         KnockoutMode::kAnchorsOnly}) {
    if (knockout_mode_name(m) == name) return m;
  }
  throw Error("unknown knockout mode: " + name);
}

double knockout(const ListenerModel& model, const Corpus& corpus,
                const std::vector<int>& example_indices, KnockoutMode mode) {
  const auto scene_map = corpus.scene_map();
  long correct = 0;
  for (int idx : example_indices) {
    const GroundedUtterance& u = corpus.utterances.at(idx);
    const Scene& original = scene_map.at(u.scene_id);
    Scene transformed;
    std::vector<std::string> tokens = u.tokens;
    switch (mode) {
      case KnockoutMode::kLesionAnchorObjects:
        transformed = lesion_anchor_objects(u, original);
        break;
      case KnockoutMode::kLesionAnchorWords:
        transformed = original;
        tokens = lesion_anchor_words(u, kUnkToken).tokens;
        break;
      case KnockoutMode::kAnchorsOnly:
        transformed = anchors_only_scene(u, original);
        break;
    }
    const Scene centered = center_scene(transformed);
    const int target_index = centered.index_of(u.target_object);
    const Prediction pred =
        model_prediction(model, centered, model.vocab().encode(tokens));
    correct += pred.target_index == target_index;
  }
  return example_indices.empty()
             ? 0.0
             : static_cast<double>(correct) / static_cast<double>(example_indices.size());
}

// -- gradient checking ---------------------------------------------------------------

double max_fd_rel_error(ad::ParamStore& params, const std::function<ad::Tensor()>& loss_fn,
                        double h) {
  params.zero_grad();
  ad::Tensor loss = loss_fn();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& e : params.entries()) analytic.push_back(e.tensor.grad());

  double max_err = 0.0;
  ad::NoGradGuard no_grad;
  for (size_t pi = 0; pi < params.entries().size(); ++pi) {
    auto& values = params.entries()[pi].tensor.mutable_values();
    for (size_t i = 0; i < values.size(); ++i) {
      const double v = values[i];
      values[i] = v + h;
      const double fp = loss_fn().item();
      values[i] = v - h;
      const double fm = loss_fn().item();
      values[i] = v;
      const double fd = (fp - fm) / (2.0 * h);
      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(fd), 1e-2});
      max_err = std::max(max_err, std::abs(a - fd) / denom);
    }
  }
  return max_err;
}

namespace {

// A small random scene/utterance pair with one anchor entity; enough
// structure to light up every loss.
struct TinyInstance {
  Scene scene;
  GroundedUtterance u;
};

TinyInstance make_tiny_instance(Rng& rng) {
  static const std::vector<std::string> kTinyClasses = {"ca", "cb", "cc"};
  static const std::vector<std::string> kTinyWords = {"w0", "w1", "w2", "w3",
                                                      "w4", "w5", "w6", "w7"};
  TinyInstance inst;
  inst.scene.scene_id = "tiny";
  const int m = 2 + rng.next_int(3);  // 2..4 objects
  for (int i = 0; i < m; ++i) {
    SceneObject o;
    o.id = i;
    // At least one same-class pair when possible, so y_dis can be non-zero.
    o.class_label = kTinyClasses[i < 2 ? rng.next_int(2) : rng.next_int(3)];
    o.box.center = {rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0.2, 1.0)};
    o.box.size = {rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0)};
    inst.scene.objects.push_back(std::move(o));
  }
  const int n = 4 + rng.next_int(3);  // 4..6 tokens
  inst.u.id = "tiny-u0";
  inst.u.scene_id = "tiny";
  for (int j = 0; j < n; ++j)
    inst.u.tokens.push_back(kTinyWords[rng.next_int(static_cast<int>(kTinyWords.size()))]);
  const int target = rng.next_int(m);
  inst.u.target_object = target;
  inst.u.entities.push_back({{0, 1}, {target}, true});
  if (m >= 2) {
    int anchor = rng.next_int(m);
    while (anchor == target) anchor = rng.next_int(m);
    std::vector<int> anchor_ids{anchor};
    if (m >= 3 && rng.bernoulli(0.4)) {
      int second = rng.next_int(m);
      if (second != target && second != anchor) anchor_ids.push_back(second);
    }
    std::sort(anchor_ids.begin(), anchor_ids.end());
    inst.u.entities.push_back({{2, std::min(4, n)}, anchor_ids, false});
  }
  return inst;
}

const std::vector<std::string>& tiny_vocab_words() {
  static const std::vector<std::string> words = {"w0", "w1", "w2", "w3",
                                                 "w4", "w5", "w6", "w7"};
  return words;
}

const std::vector<std::string>& tiny_class_labels() {
  static const std::vector<std::string> labels = {"ca", "cb", "cc"};
  return labels;
}

}  // namespace

GradCheckReport gradcheck_all(uint64_t seed, int instances_per_loss, double tolerance) {
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckReport report;
  Rng root(seed);

  const Vocabulary vocab(tiny_vocab_words());
  const ClassVocabulary classes(tiny_class_labels());

  struct LossCase {
    std::string name;
    std::function<double(const TinyInstance&, uint64_t)> run;  // returns max rel err
  };

  ListenerConfig lcfg;
  lcfg.d = 4;
  lcfg.alpha = 3.0;
  lcfg.beta = 3.0;
  lcfg.gamma = 0.5;

  auto run_listener_loss =
      [&](const TinyInstance& inst, uint64_t model_seed, bool nm,
          const std::function<ad::Tensor(const ListenerModel&, const TinyInstance&,
                                         const SupervisionTargets&)>& make_loss) {
        ListenerConfig cfg = lcfg;
        cfg.use_nm_token = nm;
        ListenerModel model(cfg, vocab, classes, model_seed);
        const SupervisionTargets targets = build_targets(inst.u, inst.scene, nm);
        return max_fd_rel_error(model.params(), [&]() {
          return make_loss(model, inst, targets);
        });
      };

  auto forward_of = [&](const ListenerModel& model, const TinyInstance& inst) {
    return model.forward(inst.scene, model.vocab().encode(inst.u.tokens));
  };

  std::vector<LossCase> cases;
  cases.push_back({"loss_anc", [&](const TinyInstance& inst, uint64_t ms) {
                     return run_listener_loss(inst, ms, false,
                                              [&](const ListenerModel& m, const TinyInstance& i,
                                                  const SupervisionTargets& t) {
                                                return loss_anc(forward_of(m, i), t);
                                              });
                   }});
  cases.push_back({"loss_attn", [&](const TinyInstance& inst, uint64_t ms) {
                     return run_listener_loss(inst, ms, ms % 2 == 0,
                                              [&](const ListenerModel& m, const TinyInstance& i,
                                                  const SupervisionTargets& t) {
                                                return loss_attn(forward_of(m, i), t);
                                              });
                   }});
  cases.push_back({"loss_dis", [&](const TinyInstance& inst, uint64_t ms) {
                     return run_listener_loss(inst, ms, false,
                                              [&](const ListenerModel& m, const TinyInstance& i,
                                                  const SupervisionTargets& t) {
                                                return loss_dis(forward_of(m, i), t);
                                              });
                   }});
  cases.push_back(
      {"loss_total", [&](const TinyInstance& inst, uint64_t ms) {
         return run_listener_loss(
             inst, ms, false,
             [&](const ListenerModel& m, const TinyInstance& i, const SupervisionTargets& t) {
               AuxFlags flags;
               flags.anc = flags.attn = flags.dis = true;
               return loss_total(forward_of(m, i), t, i.scene.index_of(i.u.target_object),
                                 m.config(), flags);
             });
       }});
  cases.push_back(
      {"loss_contrastive", [&](const TinyInstance& inst, uint64_t ms) {
         ListenerModel model(lcfg, vocab, classes, ms);
         // Force a sample; the loss itself never checks geometric validity.
         Rng srng(ms);
         const RelationType rel =
             kAllRelationTypes[srng.next_int(kNumRelationTypes)];
         const auto anchors = inst.u.anchor_ids();
         const int anchor =
             anchors.empty() ? (inst.u.target_object + 1) % static_cast<int>(
                                                               inst.scene.objects.size())
                             : anchors[0];
         std::optional<std::pair<RelationType, int>> sample;
         if (anchor != inst.u.target_object) sample = {rel, anchor};
         return max_fd_rel_error(model.params(), [&]() {
           return loss_contrastive(forward_of(model, inst), sample, inst.u, inst.scene,
                                   model.params());
         });
       }});
  cases.push_back(
      {"loss_spatial", [&](const TinyInstance& inst, uint64_t ms) {
         ListenerModel model(lcfg, vocab, classes, ms);
         Rng srng(ms + 1);
         std::vector<RelationInstance> instances;
         const int m = static_cast<int>(inst.scene.objects.size());
         const int n_pairs = 1 + srng.next_int(3);
         for (int p = 0; p < n_pairs && m >= 2; ++p) {
           int a = srng.next_int(m);
           int b = srng.next_int(m);
           if (a == b) b = (b + 1) % m;
           instances.push_back({inst.scene.objects[a].id, inst.scene.objects[b].id,
                                kAllRelationTypes[srng.next_int(kNumRelationTypes)],
                                {}});
         }
         return max_fd_rel_error(model.params(), [&]() {
           return loss_spatial(forward_of(model, inst), instances, inst.scene,
                               model.params());
         });
       }});

  SpeakerConfig scfg;
  scfg.d = 4;
  cases.push_back({"loss_ent", [&](const TinyInstance& inst, uint64_t ms) {
                     SpeakerModel model(scfg, vocab, classes, ms);
                     std::vector<int64_t> seq = model.vocab().encode(inst.u.tokens);
                     seq.push_back(model.vocab().eos());
                     return max_fd_rel_error(model.params(), [&]() {
                       ad::Tensor x_l = model.encode_objects(inst.scene);
                       auto steps = model.decode_teacher_forced(x_l, seq);
                       return loss_ent(steps, inst.u, inst.scene);
                     });
                   }});
  cases.push_back({"loss_men", [&](const TinyInstance& inst, uint64_t ms) {
                     SpeakerModel model(scfg, vocab, classes, ms);
                     const std::vector<int64_t> ids = model.vocab().encode(inst.u.tokens);
                     const std::vector<int> y_men =
                         build_targets(inst.u, inst.scene, false).y_men;
                     return max_fd_rel_error(model.params(), [&]() {
                       ad::Tensor x_l = model.encode_objects(inst.scene);
                       return loss_men(model.mention_logits(x_l, model.token_features(ids)),
                                       y_men);
                     });
                   }});

  report.all_pass = true;
  for (const auto& c : cases) {
    GradCheckResult result;
    result.loss_name = c.name;
    result.instances = instances_per_loss;
    for (int k = 0; k < instances_per_loss; ++k) {
      Rng rng = root.fork(Rng::mix(std::hash<std::string>{}(c.name), k));
      const TinyInstance inst = make_tiny_instance(rng);
      const double err = c.run(inst, rng.next_u64());
      result.max_rel_err = std::max(result.max_rel_err, err);
    }
    result.pass = result.max_rel_err < tolerance;
    report.all_pass = report.all_pass && result.pass;
    report.results.push_back(std::move(result));
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::string gradcheck_report_to_json(const GradCheckReport& r) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json results = nlohmann::ordered_json::array();
  for (const auto& res : r.results) {
    nlohmann::ordered_json jr;
    jr["loss"] = res.loss_name;
    jr["instances"] = res.instances;
    jr["max_rel_err"] = res.max_rel_err;
    jr["pass"] = res.pass;
    results.push_back(std::move(jr));
  }
  j["results"] = std::move(results);
  j["all_pass"] = r.all_pass;
  j["seconds"] = r.seconds;
  return j.dump(2);
}

}  // namespace scanents
