#include "scanents/speaker.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

#include "json.hpp"

namespace scanents {

namespace ad = scanents::ad;

std::string speaker_config_to_json(const SpeakerConfig& cfg) {
  nlohmann::ordered_json j;
  j["d"] = cfg.d;
  j["vocab_size"] = cfg.vocab_size;
  j["n_classes"] = cfg.n_classes;
  j["n_self_layers"] = cfg.n_self_layers;
  j["max_len"] = cfg.max_len;
  j["entity_loss_weight"] = cfg.entity_loss_weight;
  j["mention_loss_weight"] = cfg.mention_loss_weight;
  return j.dump();
}

SpeakerConfig speaker_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid speaker config: ") + e.what());
  }
  SpeakerConfig cfg;
  cfg.d = j.value("d", cfg.d);
  cfg.vocab_size = j.value("vocab_size", cfg.vocab_size);
  cfg.n_classes = j.value("n_classes", cfg.n_classes);
  cfg.n_self_layers = j.value("n_self_layers", cfg.n_self_layers);
  cfg.max_len = j.value("max_len", cfg.max_len);
  cfg.entity_loss_weight = j.value("entity_loss_weight", cfg.entity_loss_weight);
  cfg.mention_loss_weight = j.value("mention_loss_weight", cfg.mention_loss_weight);
  if (cfg.max_len < 2) throw Error("speaker config: max_len must be at least 2");
  return cfg;
}

SpeakerModel::SpeakerModel(const SpeakerConfig& cfg, const Vocabulary& vocab,
                           const ClassVocabulary& classes, uint64_t seed)
    : cfg_(cfg), vocab_(vocab), classes_(classes) {
  if (cfg_.d <= 0) throw Error("speaker: d must be positive");
  if (cfg_.max_len < 2) throw Error("speaker: max_len must be at least 2");
  if (cfg_.vocab_size == 0) cfg_.vocab_size = vocab.size();
  if (cfg_.n_classes == 0) cfg_.n_classes = classes.size();
  if (cfg_.vocab_size != vocab.size())
    throw Error("speaker: config vocab_size disagrees with the vocabulary");
  if (cfg_.n_classes != classes.size())
    throw Error("speaker: config n_classes disagrees with the class vocabulary");

  Rng rng(Rng::mix(seed, 0x5fea4e));
  const int64_t d = cfg_.d;
  encoder_ = ObjectEncoder({cfg_.d, cfg_.n_self_layers, cfg_.n_classes}, classes, params_, rng);

  const double emb_limit = 1.0 / std::sqrt(static_cast<double>(d));
  params_.create("word_embedding", {cfg_.vocab_size, d},
                 ad::uniform_init(static_cast<int64_t>(cfg_.vocab_size) * d, -emb_limit,
                                  emb_limit, rng));
  params_.create("lstm.w_ih", {d, 4 * d}, ad::glorot_uniform({d, 4 * d}, rng));
  params_.create("lstm.w_hh", {d, 4 * d}, ad::glorot_uniform({d, 4 * d}, rng));
  params_.create("lstm.bias", {4 * d}, std::vector<double>(4 * d, 0.0));
  create_mlp2(params_, "word_head", 2 * d, d, cfg_.vocab_size, rng);
  params_.create("mention_attn.wq", {d, d}, ad::glorot_uniform({d, d}, rng));
  params_.create("mention_attn.wk", {d, d}, ad::glorot_uniform({d, d}, rng));
  params_.create("mention_attn.wv", {d, d}, ad::glorot_uniform({d, d}, rng));
  params_.create("mention_attn.wo", {d, d}, ad::glorot_uniform({d, d}, rng));
  create_mlp2(params_, "mention_head", d, d, 1, rng);
}

ad::Tensor SpeakerModel::encode_objects(const Scene& scene) const {
  if (scene.objects.empty()) throw Error("speaker encode: empty scene");
  return encoder_.forward(scene, params_);
}

ad::Tensor SpeakerModel::token_features(const std::vector<int64_t>& ids) const {
  for (int64_t id : ids) {
    if (id < 0 || id >= cfg_.vocab_size)
      throw TokenOutOfVocab("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(cfg_.vocab_size));
  }
  return ad::embedding_lookup(params_.get("word_embedding"), ids);
}

namespace {

struct StepOutputs {
  ad::Tensor h;
  ad::Tensor c;
  ad::Tensor word_logits;       // [1×V]
  ad::Tensor attention_scores;  // [1×M]
};

StepOutputs run_step(const ad::ParamStore& params, const ad::Tensor& x_l, int64_t token_id,
                     const ad::Tensor& h, const ad::Tensor& c) {
  ad::LstmWeights w{params.get("lstm.w_ih"), params.get("lstm.w_hh"), params.get("lstm.bias")};
  ad::Tensor emb = ad::embedding_lookup(params.get("word_embedding"), {token_id});
  auto [h2, c2] = ad::lstm_cell(emb, h, c, w);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(h2.dim(1)));
  ad::Tensor scores = ad::scale(ad::matmul(h2, ad::transpose(x_l)), inv_sqrt_d);
  ad::Tensor context = ad::matmul(ad::softmax(scores, 1), x_l);
  ad::Tensor logits = mlp2(params, "word_head", ad::concat({h2, context}, 1));
  return {h2, c2, logits, scores};
}

}  // namespace

std::vector<DecodeStep> SpeakerModel::decode_teacher_forced(
    const ad::Tensor& x_l, const std::vector<int64_t>& gt_tokens) const {
  if (gt_tokens.empty()) throw Error("decode_teacher_forced: empty target sequence");
  for (int64_t id : gt_tokens) {
    if (id < 0 || id >= cfg_.vocab_size)
      throw TokenOutOfVocab("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(cfg_.vocab_size));
  }
  const int64_t m = x_l.dim(0);
  const int64_t d = cfg_.d;
  ad::Tensor h = ad::Tensor::constant({1, d}, 0.0);
  ad::Tensor c = ad::Tensor::constant({1, d}, 0.0);

  std::vector<DecodeStep> steps;
  steps.reserve(gt_tokens.size());
  int64_t prev = vocab_.bos();
  for (int64_t target : gt_tokens) {
    StepOutputs s = run_step(params_, x_l, prev, h, c);
    h = s.h;
    c = s.c;
    steps.push_back({ad::reshape(s.word_logits, {cfg_.vocab_size}),
                     ad::reshape(s.attention_scores, {m})});
    prev = target;
  }
  return steps;
}

ad::Tensor SpeakerModel::mention_logits(const ad::Tensor& x_l,
                                        const ad::Tensor& token_feats) const {
  const int64_t m = x_l.dim(0);
  ad::Tensor q = ad::matmul(x_l, params_.get("mention_attn.wq"));
  ad::Tensor k = ad::matmul(token_feats, params_.get("mention_attn.wk"));
  ad::Tensor v = ad::matmul(token_feats, params_.get("mention_attn.wv"));
  auto [ctx, scores] = ad::scaled_dot_attention(q, k, v);
  ad::Tensor x_star =
      ad::layer_norm(ad::add(x_l, ad::matmul(ctx, params_.get("mention_attn.wo"))));
  return ad::reshape(mlp2(params_, "mention_head", x_star), {m});
}

std::vector<int64_t> SpeakerModel::greedy_decode(const ad::Tensor& x_l, int max_len) const {
  ad::NoGradGuard no_grad;
  const int64_t d = cfg_.d;
  ad::Tensor h = ad::Tensor::constant({1, d}, 0.0);
  ad::Tensor c = ad::Tensor::constant({1, d}, 0.0);
  std::vector<int64_t> out;
  int64_t prev = vocab_.bos();
  for (int t = 0; t < max_len; ++t) {
    StepOutputs s = run_step(params_, x_l, prev, h, c);
    h = s.h;
    c = s.c;
    const auto& logits = s.word_logits.values();
    const int64_t best =
        std::distance(logits.begin(), std::max_element(logits.begin(), logits.end()));
    if (best == vocab_.eos()) break;
    out.push_back(best);
    prev = best;
  }
  return out;
}

void SpeakerModel::init_from_listener(const CheckpointData& listener_ckpt) {
  if (listener_ckpt.model_kind != "listener")
    throw CheckpointMismatch("init_from_listener: checkpoint is a '" +
                             listener_ckpt.model_kind + "' model");
  restore_params(listener_ckpt, params_, "encoder.");
}

ad::Tensor loss_ent(const std::vector<DecodeStep>& steps, const GroundedUtterance& u,
                    const Scene& s) {
  std::vector<ad::Tensor> step_losses;
  for (size_t t = 0; t < steps.size(); ++t) {
    const ScanEntity* hit = nullptr;
    for (const auto& e : u.entities) {
      if (e.span.contains(static_cast<int>(t))) {
        hit = &e;
        break;
      }
    }
    if (!hit) continue;
    std::vector<double> membership(s.objects.size(), 0.0);
    for (int oid : hit->object_ids) membership[s.index_of(oid)] = 1.0;
    const int64_t m = static_cast<int64_t>(membership.size());
    ad::Tensor y = ad::Tensor::constant({m}, std::move(membership));
    step_losses.push_back(ad::bce_with_logits(steps[t].object_attention_logits, y));
  }
  if (step_losses.empty()) return ad::Tensor::scalar(0.0);
  return ad::mean(ad::concat(step_losses, 0));
}

ad::Tensor loss_men(const ad::Tensor& mention_logits, const std::vector<int>& y_men) {
  std::vector<double> y(y_men.begin(), y_men.end());
  const int64_t m = static_cast<int64_t>(y.size());
  return ad::bce_with_logits(mention_logits, ad::Tensor::constant({m}, std::move(y)));
}

ad::Tensor loss_words(const std::vector<DecodeStep>& steps,
                      const std::vector<int64_t>& gt_tokens) {
  if (steps.size() != gt_tokens.size())
    throw ShapeMismatch("loss_words: " + std::to_string(steps.size()) + " steps vs " +
                        std::to_string(gt_tokens.size()) + " targets");
  std::vector<ad::Tensor> rows;
  rows.reserve(steps.size());
  for (const auto& s : steps)
    rows.push_back(ad::reshape(s.word_logits, {1, s.word_logits.dim(0)}));
  return ad::cross_entropy(ad::concat(rows, 0), gt_tokens);
}

}  // namespace scanents
