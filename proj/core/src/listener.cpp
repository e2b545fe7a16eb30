#include "scanents/listener.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace scanents {

namespace ad = scanents::ad;

AuxFlags AuxFlags::parse(const std::string& csv) {
  AuxFlags f;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "anc") f.anc = true;
    else if (item == "attn") f.attn = true;
    else if (item == "dis") f.dis = true;
    else if (item == "rel") f.rel = true;
    else if (item == "ent") f.ent = true;
    else if (item == "men") f.men = true;
    else throw Error("unknown aux flag: " + item);
  }
  return f;
}

std::string AuxFlags::to_string() const {
  std::string out;
  auto append = [&out](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  append(anc, "anc");
  append(attn, "attn");
  append(dis, "dis");
  append(rel, "rel");
  append(ent, "ent");
  append(men, "men");
  return out;
}

std::string listener_config_to_json(const ListenerConfig& cfg) {
  nlohmann::ordered_json j;
  j["d"] = cfg.d;
  j["n_self_layers"] = cfg.n_self_layers;
  j["n_cross_layers"] = cfg.n_cross_layers;
  j["vocab_size"] = cfg.vocab_size;
  j["n_classes"] = cfg.n_classes;
  j["alpha"] = cfg.alpha;
  j["beta"] = cfg.beta;
  j["gamma"] = cfg.gamma;
  j["use_nm_token"] = cfg.use_nm_token;
  j["use_class_aux"] = cfg.use_class_aux;
  return j.dump();
}

ListenerConfig listener_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid listener config: ") + e.what());
  }
  ListenerConfig cfg;
  cfg.d = j.value("d", cfg.d);
  cfg.n_self_layers = j.value("n_self_layers", cfg.n_self_layers);
  cfg.n_cross_layers = j.value("n_cross_layers", cfg.n_cross_layers);
  cfg.vocab_size = j.value("vocab_size", cfg.vocab_size);
  cfg.n_classes = j.value("n_classes", cfg.n_classes);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.beta = j.value("beta", cfg.beta);
  cfg.gamma = j.value("gamma", cfg.gamma);
  cfg.use_nm_token = j.value("use_nm_token", cfg.use_nm_token);
  cfg.use_class_aux = j.value("use_class_aux", cfg.use_class_aux);
  if (cfg.d <= 0) throw Error("listener config: d must be positive");
  if (cfg.alpha < 0 || cfg.beta < 0 || cfg.gamma < 0)
    throw Error("listener config: loss weights must be non-negative");
  return cfg;
}

ListenerModel::ListenerModel(const ListenerConfig& cfg, const Vocabulary& vocab,
                             const ClassVocabulary& classes, uint64_t seed)
    : cfg_(cfg), vocab_(vocab), classes_(classes) {
  if (cfg_.d <= 0) throw Error("listener: d must be positive");
  if (cfg_.vocab_size == 0) cfg_.vocab_size = vocab.size();
  if (cfg_.n_classes == 0) cfg_.n_classes = classes.size();
  if (cfg_.vocab_size != vocab.size())
    throw Error("listener: config vocab_size disagrees with the vocabulary");
  if (cfg_.n_classes != classes.size())
    throw Error("listener: config n_classes disagrees with the class vocabulary");

  Rng rng(Rng::mix(seed, 0x115731));
  const int64_t d = cfg_.d;
  encoder_ = ObjectEncoder({cfg_.d, cfg_.n_self_layers, cfg_.n_classes}, classes, params_, rng);

  const double emb_limit = 1.0 / std::sqrt(static_cast<double>(d));
  params_.create("word_embedding", {cfg_.vocab_size, d},
                 ad::uniform_init(static_cast<int64_t>(cfg_.vocab_size) * d, -emb_limit,
                                  emb_limit, rng));
  // The learned no-mention key; created regardless of use_nm_token so the
  // parameter layout is config-independent.
  params_.create("nm_key", {1, d}, ad::uniform_init(d, -emb_limit, emb_limit, rng));

  for (int l = 0; l < cfg_.n_cross_layers; ++l) {
    const std::string p = "cross_attn." + std::to_string(l);
    params_.create(p + ".wq", {d, d}, ad::glorot_uniform({d, d}, rng));
    params_.create(p + ".wk", {d, d}, ad::glorot_uniform({d, d}, rng));
    params_.create(p + ".wv", {d, d}, ad::glorot_uniform({d, d}, rng));
    params_.create(p + ".wo", {d, d}, ad::glorot_uniform({d, d}, rng));
  }
  create_mlp2(params_, "head.target", d, d, 1, rng);
  create_mlp2(params_, "head.anchor", d, d, 1, rng);
  create_mlp2(params_, "head.distractor", d, d, 1, rng);
  create_mlp2(params_, "head.class", d, d, cfg_.n_classes, rng);
  params_.create("relation_embedding", {kNumRelationTypes, d},
                 ad::uniform_init(static_cast<int64_t>(kNumRelationTypes) * d, -emb_limit,
                                  emb_limit, rng));
  create_mlp2(params_, "rel_pair", 2 * d, d, d, rng);
  create_mlp2(params_, "rel_spatial", 2 * d, d, kNumRelationTypes, rng);
}

ListenerOutputs ListenerModel::forward(const Scene& scene,
                                       const std::vector<int64_t>& token_ids) const {
  if (scene.objects.empty()) throw Error("listener forward: empty scene");
  if (token_ids.empty()) throw Error("listener forward: empty token list");
  for (int64_t id : token_ids) {
    if (id < 0 || id >= cfg_.vocab_size)
      throw VocabOverflow("token id " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(cfg_.vocab_size));
  }
  const int64_t m = static_cast<int64_t>(scene.objects.size());

  ListenerOutputs out;
  out.obj_enc = encoder_.forward(scene, params_);
  ad::Tensor words = ad::embedding_lookup(params_.get("word_embedding"), token_ids);
  ad::Tensor keys =
      cfg_.use_nm_token ? ad::concat({params_.get("nm_key"), words}, 0) : words;

  ad::Tensor h = out.obj_enc;
  for (int l = 0; l < cfg_.n_cross_layers; ++l) {
    const std::string p = "cross_attn." + std::to_string(l);
    ad::Tensor q = ad::matmul(h, params_.get(p + ".wq"));
    ad::Tensor k = ad::matmul(keys, params_.get(p + ".wk"));
    ad::Tensor v = ad::matmul(keys, params_.get(p + ".wv"));
    auto [ctx, scores] = ad::scaled_dot_attention(q, k, v);
    out.attn = scores;  // last layer wins
    h = ad::layer_norm(ad::add(h, ad::matmul(ctx, params_.get(p + ".wo"))));
  }
  out.f_o = h;
  out.target_logits = ad::reshape(mlp2(params_, "head.target", h), {m});
  out.anchor_logits = ad::reshape(mlp2(params_, "head.anchor", h), {m});
  out.distractor_logits = ad::reshape(mlp2(params_, "head.distractor", h), {m});
  out.class_logits = mlp2(params_, "head.class", h);
  return out;
}

ListenerOutputs ListenerModel::forward(const Scene& scene,
                                       const std::vector<std::string>& tokens) const {
  return forward(scene, vocab_.encode(tokens));
}

namespace {

ad::Tensor binary_tensor(const std::vector<int>& bits) {
  std::vector<double> v(bits.begin(), bits.end());
  return ad::Tensor::constant({static_cast<int64_t>(bits.size())}, std::move(v));
}

}  // namespace

ad::Tensor loss_anc(const ListenerOutputs& out, const SupervisionTargets& targets) {
  return ad::bce_with_logits(out.anchor_logits, binary_tensor(targets.y_anc));
}

ad::Tensor loss_attn(const ListenerOutputs& out, const SupervisionTargets& targets) {
  const int64_t m = out.attn.dim(0);
  const int64_t n = out.attn.dim(1);
  if (targets.y_attn.rows != m || targets.y_attn.cols != n)
    throw ShapeMismatch("loss_attn: attention map " + ad::shape_str(out.attn.shape()) +
                        " vs target " + std::to_string(targets.y_attn.rows) + "x" +
                        std::to_string(targets.y_attn.cols));
  std::vector<ad::Tensor> row_losses;
  row_losses.reserve(static_cast<size_t>(m));
  for (int64_t i = 0; i < m; ++i) {
    ad::Tensor row = ad::slice(out.attn, 0, i, i + 1);
    std::vector<double> y(static_cast<size_t>(n));
    for (int64_t j = 0; j < n; ++j)
      y[j] = targets.y_attn.at(static_cast<int>(i), static_cast<int>(j));
    row_losses.push_back(
        ad::bce_with_logits(row, ad::Tensor::constant({1, n}, std::move(y))));
  }
  return ad::mean(ad::concat(row_losses, 0));
}

ad::Tensor loss_dis(const ListenerOutputs& out, const SupervisionTargets& targets) {
  return ad::bce_with_logits(out.distractor_logits, binary_tensor(targets.y_dis));
}

ad::Tensor loss_org(const ListenerOutputs& out, int target_index) {
  const int64_t m = out.target_logits.dim(0);
  return ad::cross_entropy(ad::reshape(out.target_logits, {1, m}), {target_index});
}

ad::Tensor loss_org(const ListenerOutputs& out, int target_index,
                    const std::vector<int64_t>& class_ids, const ListenerConfig& cfg) {
  ad::Tensor l = loss_org(out, target_index);
  if (cfg.use_class_aux) l = ad::add(l, ad::cross_entropy(out.class_logits, class_ids));
  return l;
}

ad::Tensor combine_listener_losses(const ad::Tensor& org, const ad::Tensor& anc,
                                   const ad::Tensor& attn, const ad::Tensor& dis,
                                   const ListenerConfig& cfg, const AuxFlags& flags) {
  ad::Tensor total = org;
  if (flags.anc) total = ad::add(total, ad::scale(anc, cfg.alpha));
  if (flags.attn) total = ad::add(total, ad::scale(attn, cfg.beta));
  if (flags.dis) total = ad::add(total, ad::scale(dis, cfg.gamma));
  return total;
}

ad::Tensor loss_total(const ListenerOutputs& out, const SupervisionTargets& targets,
                      int target_index, const ListenerConfig& cfg, const AuxFlags& flags) {
  ad::Tensor org = loss_org(out, target_index);
  ad::Tensor anc = flags.anc ? loss_anc(out, targets) : ad::Tensor();
  ad::Tensor attn = flags.attn ? loss_attn(out, targets) : ad::Tensor();
  ad::Tensor dis = flags.dis ? loss_dis(out, targets) : ad::Tensor();
  return combine_listener_losses(org, anc, attn, dis, cfg, flags);
}

namespace {

ad::Tensor cosine(const ad::Tensor& a, const ad::Tensor& b) {
  ad::Tensor dot = ad::sum(ad::mul(a, b));
  ad::Tensor na = ad::sqrt(ad::sum(ad::mul(a, a)));
  ad::Tensor nb = ad::sqrt(ad::sum(ad::mul(b, b)));
  return ad::div(dot, ad::mul(na, nb));
}

}  // namespace

ad::Tensor loss_contrastive(const ListenerOutputs& out,
                            const std::optional<std::pair<RelationType, int>>& sample,
                            const GroundedUtterance& u, const Scene& s,
                            const ad::ParamStore& params) {
  if (!sample) return ad::Tensor::scalar(0.0);
  const auto [relation, anchor_id] = *sample;
  const int anchor_idx = s.index_of(anchor_id);
  const int target_idx = s.index_of(u.target_object);

  std::vector<int> candidate_idx{target_idx};
  for (int did : same_class_distractors(s, u.target_object))
    candidate_idx.push_back(s.index_of(did));

  ad::Tensor rel_emb = ad::embedding_lookup(params.get("relation_embedding"),
                                            {static_cast<int64_t>(relation)});
  ad::Tensor anchor_feat = ad::slice(out.obj_enc, 0, anchor_idx, anchor_idx + 1);

  std::vector<ad::Tensor> scores;
  scores.reserve(candidate_idx.size());
  for (int ci : candidate_idx) {
    ad::Tensor cand = ad::slice(out.obj_enc, 0, ci, ci + 1);
    ad::Tensor pair_feat = mlp2(params, "rel_pair", ad::concat({anchor_feat, cand}, 1));
    scores.push_back(cosine(rel_emb, pair_feat));
  }
  ad::Tensor score_row =
      ad::reshape(ad::concat(scores, 0), {1, static_cast<int64_t>(scores.size())});
  return ad::cross_entropy(score_row, {0});  // candidate 0 is the target
}

ad::Tensor loss_spatial(const ListenerOutputs& out,
                        const std::vector<RelationInstance>& instances, const Scene& s,
                        const ad::ParamStore& params) {
  if (instances.empty()) return ad::Tensor::scalar(0.0);
  std::vector<ad::Tensor> rows;
  std::vector<int64_t> labels;
  rows.reserve(instances.size());
  for (const auto& ri : instances) {
    const int si = s.index_of(ri.subject_id);
    const int oi = s.index_of(ri.object_id);
    ad::Tensor fs = ad::slice(out.f_o, 0, si, si + 1);
    ad::Tensor fo = ad::slice(out.f_o, 0, oi, oi + 1);
    rows.push_back(ad::concat({fs, fo}, 1));
    labels.push_back(static_cast<int64_t>(ri.relation));
  }
  ad::Tensor logits = mlp2(params, "rel_spatial", ad::concat(rows, 0));
  return ad::cross_entropy(logits, labels);
}

std::vector<int> assign_anchor_labels(const std::vector<Box3>& proposals,
                                      const std::vector<Box3>& gt_anchor_boxes) {
  if (proposals.empty()) throw EmptyProposals("assign_anchor_labels: no proposals");
  std::vector<int> labels(proposals.size(), 0);
  for (const auto& gt : gt_anchor_boxes) {
    double best = 0.0;
    int best_idx = -1;
    for (size_t i = 0; i < proposals.size(); ++i) {
      const double iou = aabb_iou(proposals[i], gt);
      if (iou > best) {
        best = iou;
        best_idx = static_cast<int>(i);
      }
    }
    if (best_idx >= 0) labels[best_idx] = 1;  // zero-IoU boxes assign nothing
  }
  return labels;
}

void MicroF1::add(const std::vector<double>& logits, const std::vector<int>& y_anc,
                  double threshold) {
  if (logits.size() != y_anc.size())
    throw ShapeMismatch("anchor_f1: " + std::to_string(logits.size()) + " logits vs " +
                        std::to_string(y_anc.size()) + " labels");
  for (size_t i = 0; i < logits.size(); ++i) {
    const bool pred = 1.0 / (1.0 + std::exp(-logits[i])) > threshold;
    if (pred && y_anc[i]) ++tp_;
    else if (pred && !y_anc[i]) ++fp_;
    else if (!pred && y_anc[i]) ++fn_;
  }
}

double MicroF1::value() const {
  const long denom = 2 * tp_ + fp_ + fn_;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp_) / static_cast<double>(denom);
}

double anchor_f1(const std::vector<double>& pred_logits, const std::vector<int>& y_anc,
                 double threshold) {
  MicroF1 f1;
  f1.add(pred_logits, y_anc, threshold);
  return f1.value();
}

}  // namespace scanents
