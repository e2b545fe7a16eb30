#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scanents/annotation.hpp"
#include "scanents/autodiff.hpp"
#include "scanents/encoder.hpp"
#include "scanents/relations.hpp"
#include "scanents/vocab.hpp"

namespace scanents {

// Which auxiliary losses participate in a training run. Flags change only the
// loss composition, never the forward architecture.
struct AuxFlags {
  bool anc = false;
  bool attn = false;
  bool dis = false;
  bool rel = false;  // contrastive + spatial relation losses
  bool ent = false;  // speaker entity loss
  bool men = false;  // speaker mention loss

  static AuxFlags parse(const std::string& csv);
  std::string to_string() const;
  bool operator==(const AuxFlags&) const = default;
};

struct ListenerConfig {
  int d = 64;
  int n_self_layers = 1;
  int n_cross_layers = 1;
  int vocab_size = 0;  // filled from the vocabulary when 0
  int n_classes = 0;   // filled from the class vocabulary when 0
  double alpha = 3.0;
  double beta = 3.0;
  double gamma = 0.5;
  bool use_nm_token = false;
  bool use_class_aux = false;

  bool operator==(const ListenerConfig&) const = default;
};

std::string listener_config_to_json(const ListenerConfig& cfg);
ListenerConfig listener_config_from_json(const std::string& text);

// One forward pass worth of listener activations. `attn` holds the
// pre-softmax cross-attention map; column 0 is the no-mention key when the
// model runs with use_nm_token.
struct ListenerOutputs {
  ad::Tensor f_o;                // [M×d] context-aware object features
  ad::Tensor obj_enc;            // [M×d] encoder features (pre cross-attention)
  ad::Tensor attn;               // [M×N'] pre-softmax scores
  ad::Tensor target_logits;      // [M]
  ad::Tensor anchor_logits;      // [M]
  ad::Tensor distractor_logits;  // [M]
  ad::Tensor class_logits;       // [M×n_classes]
};

// Cross-attention listener over box geometry and class embeddings. The same
// seed always produces the same initial parameters regardless of which
// auxiliary losses will be trained.
class ListenerModel {
 public:
  ListenerModel(const ListenerConfig& cfg, const Vocabulary& vocab,
                const ClassVocabulary& classes, uint64_t seed);

  ListenerOutputs forward(const Scene& scene, const std::vector<int64_t>& token_ids) const;
  ListenerOutputs forward(const Scene& scene, const std::vector<std::string>& tokens) const;

  const ListenerConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  const ClassVocabulary& classes() const { return classes_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

 private:
  ListenerConfig cfg_;
  Vocabulary vocab_;
  ClassVocabulary classes_;
  ad::ParamStore params_;
  ObjectEncoder encoder_;
};

// -- losses ---------------------------------------------------------------

ad::Tensor loss_anc(const ListenerOutputs& out, const SupervisionTargets& targets);
// Mean over object rows of BCE-with-logits between the raw attention row and
// its binary target row.
ad::Tensor loss_attn(const ListenerOutputs& out, const SupervisionTargets& targets);
ad::Tensor loss_dis(const ListenerOutputs& out, const SupervisionTargets& targets);
// Target cross entropy; the overload with class ids adds the per-object
// class-prediction auxiliary when the config enables it.
ad::Tensor loss_org(const ListenerOutputs& out, int target_index);
ad::Tensor loss_org(const ListenerOutputs& out, int target_index,
                    const std::vector<int64_t>& class_ids, const ListenerConfig& cfg);

// org + alpha*anc + beta*attn + gamma*dis, each term gated by its flag.
ad::Tensor combine_listener_losses(const ad::Tensor& org, const ad::Tensor& anc,
                                   const ad::Tensor& attn, const ad::Tensor& dis,
                                   const ListenerConfig& cfg, const AuxFlags& flags);
ad::Tensor loss_total(const ListenerOutputs& out, const SupervisionTargets& targets,
                      int target_index, const ListenerConfig& cfg, const AuxFlags& flags);

// Contrastive spatial loss: the sampled relation embedding must be closest
// (by cosine) to the (anchor, target) pair feature rather than to any
// (anchor, distractor) pair. Zero when no relation was sampled.
ad::Tensor loss_contrastive(const ListenerOutputs& out,
                            const std::optional<std::pair<RelationType, int>>& sample,
                            const GroundedUtterance& u, const Scene& s,
                            const ad::ParamStore& params);

// 13-way relation classification on concatenated context-aware pair
// features, averaged over the known ground-truth pairs. Zero when none.
ad::Tensor loss_spatial(const ListenerOutputs& out,
                        const std::vector<RelationInstance>& instances, const Scene& s,
                        const ad::ParamStore& params);

// Detection-regime anchor labels: for every ground-truth anchor box the
// proposal with the highest IoU gets a 1 (ties to the lowest index); boxes
// with zero IoU everywhere assign nothing. Throws EmptyProposals.
std::vector<int> assign_anchor_labels(const std::vector<Box3>& proposals,
                                      const std::vector<Box3>& gt_anchor_boxes);

// Pooled micro-averaged F1 over binary anchor decisions.
class MicroF1 {
 public:
  void add(const std::vector<double>& logits, const std::vector<int>& y_anc,
           double threshold = 0.5);
  double value() const;  // 0 when precision+recall is 0
  long tp() const { return tp_; }
  long fp() const { return fp_; }
  long fn() const { return fn_; }

 private:
  long tp_ = 0, fp_ = 0, fn_ = 0;
};

double anchor_f1(const std::vector<double>& pred_logits, const std::vector<int>& y_anc,
                 double threshold = 0.5);

}  // namespace scanents
