#pragma once

#include <string>
#include <vector>

#include "scanents/annotation.hpp"
#include "scanents/autodiff.hpp"
#include "scanents/checkpoint.hpp"
#include "scanents/encoder.hpp"
#include "scanents/vocab.hpp"

namespace scanents {

struct SpeakerConfig {
  int d = 64;
  int vocab_size = 0;  // filled from the vocabulary when 0
  int n_classes = 0;   // filled from the class vocabulary when 0
  int n_self_layers = 1;
  int max_len = 24;
  double entity_loss_weight = 1.0;
  double mention_loss_weight = 1.0;

  bool operator==(const SpeakerConfig&) const = default;
};

std::string speaker_config_to_json(const SpeakerConfig& cfg);
SpeakerConfig speaker_config_from_json(const std::string& text);

struct DecodeStep {
  ad::Tensor word_logits;              // [vocab]
  ad::Tensor object_attention_logits;  // [M] pre-softmax attention to objects
};

// Teacher-forced LSTM captioner with attention over the object features. The
// object encoder is shared with the listener so a pre-trained listener
// encoder can be restored verbatim.
class SpeakerModel {
 public:
  SpeakerModel(const SpeakerConfig& cfg, const Vocabulary& vocab,
               const ClassVocabulary& classes, uint64_t seed);

  // X_L: [M×d] object features in scene order.
  ad::Tensor encode_objects(const Scene& scene) const;

  // One step per target token; step t consumes gt_tokens[t-1] (BOS at t=0)
  // and scores gt_tokens[t].
  std::vector<DecodeStep> decode_teacher_forced(const ad::Tensor& x_l,
                                                const std::vector<int64_t>& gt_tokens) const;

  // Word embeddings of the given token ids, [N×d].
  ad::Tensor token_features(const std::vector<int64_t>& ids) const;

  // Mention head: cross-attention from X_L onto the token features followed
  // by a two-layer MLP, yielding one is-mentioned logit per object.
  ad::Tensor mention_logits(const ad::Tensor& x_l, const ad::Tensor& token_feats) const;

  // Deterministic argmax decoding; stops at <eos> or after max_len tokens.
  // The returned ids exclude <bos>/<eos>.
  std::vector<int64_t> greedy_decode(const ad::Tensor& x_l, int max_len) const;

  // Copies the "encoder." parameters of a listener checkpoint; throws
  // CheckpointMismatch when shapes disagree.
  void init_from_listener(const CheckpointData& listener_ckpt);

  const SpeakerConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  const ClassVocabulary& classes() const { return classes_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

 private:
  SpeakerConfig cfg_;
  Vocabulary vocab_;
  ClassVocabulary classes_;
  ad::ParamStore params_;
  ObjectEncoder encoder_;
};

// Mean BCE between the per-step object attention logits and the multi-hot
// membership of the entity whose span covers the step's target token; steps
// outside every entity span contribute nothing. Zero when no step qualifies.
ad::Tensor loss_ent(const std::vector<DecodeStep>& steps, const GroundedUtterance& u,
                    const Scene& s);

// BCE between mention logits and y_men.
ad::Tensor loss_men(const ad::Tensor& mention_logits, const std::vector<int>& y_men);

// Mean word cross entropy over the teacher-forced steps.
ad::Tensor loss_words(const std::vector<DecodeStep>& steps,
                      const std::vector<int64_t>& gt_tokens);

}  // namespace scanents
