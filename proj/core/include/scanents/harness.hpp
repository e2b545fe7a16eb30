#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scanents/checkpoint.hpp"
#include "scanents/generator.hpp"
#include "scanents/listener.hpp"
#include "scanents/speaker.hpp"

namespace scanents {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double lr = 5e-4;
  uint64_t seed = 0;
  AuxFlags aux;
  ListenerConfig listener;
  SpeakerConfig speaker;
};

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
};

struct TrainReport {
  std::string model_kind;
  std::string aux;
  uint64_t seed = 0;
  std::vector<EpochStats> epochs;
  double final_loss = 0.0;
};

std::string train_report_to_json(const TrainReport& r);

// Accuracy per split plus the pooled anchor F1. `overall_acc` is always the
// example-weighted mean of the easy/hard (and view) splits.
struct EvalReport {
  double overall_acc = 0.0;
  double easy_acc = 0.0;
  double hard_acc = 0.0;
  double view_dep_acc = 0.0;
  double view_indep_acc = 0.0;
  double anchor_f1 = 0.0;
  long n_examples = 0;
  long n_easy = 0;
  long n_hard = 0;
  long n_view_dep = 0;
  long n_view_indep = 0;
  std::map<int, double> per_seed;
  std::map<std::string, double> knockout;
};

std::string eval_report_to_json(const EvalReport& r);
std::string eval_report_to_csv(const EvalReport& r);

// -- corpus plumbing -----------------------------------------------------------

Corpus load_corpus(const std::string& annotations_path, const std::string& scenes_path);
void save_corpus(const Corpus& corpus, const std::string& out_dir);

// Utterance indices split by scene order; the first ceil(fraction*n_scenes)
// scenes feed the first list.
std::pair<std::vector<int>, std::vector<int>> split_by_scene(const Corpus& corpus,
                                                             double train_fraction);
std::vector<int> all_indices(const Corpus& corpus);

// Vocabulary over the sorted unique corpus tokens; class vocabulary over the
// scene labels.
Vocabulary corpus_vocabulary(const Corpus& corpus);
ClassVocabulary corpus_classes(const Corpus& corpus);

// -- training -------------------------------------------------------------------

struct TrainedListener {
  std::unique_ptr<ListenerModel> model;
  TrainReport report;
};

struct TrainedSpeaker {
  std::unique_ptr<SpeakerModel> model;
  TrainReport report;
};

TrainedListener train_listener(const Corpus& corpus, const std::vector<int>& example_indices,
                               const TrainConfig& cfg);
// `init_encoder_from` optionally restores a pre-trained listener encoder.
TrainedSpeaker train_speaker(const Corpus& corpus, const std::vector<int>& example_indices,
                             const TrainConfig& cfg,
                             const CheckpointData* init_encoder_from = nullptr);

CheckpointData listener_to_checkpoint(const ListenerModel& model);
std::unique_ptr<ListenerModel> listener_from_checkpoint(const CheckpointData& ckpt);
CheckpointData speaker_to_checkpoint(const SpeakerModel& model);
std::unique_ptr<SpeakerModel> speaker_from_checkpoint(const CheckpointData& ckpt);

// -- evaluation -------------------------------------------------------------------

// A predictor sees the centered scene and the utterance and picks the target
// index; anchor logits are optional and feed the pooled F1.
struct Prediction {
  int target_index = 0;
  std::vector<double> anchor_logits;  // empty when the predictor has none
};
using PredictFn = std::function<Prediction(const Scene& centered_scene,
                                           const GroundedUtterance& u)>;

EvalReport evaluate(const PredictFn& predict, const Corpus& corpus,
                    const std::vector<int>& example_indices);
EvalReport evaluate(const ListenerModel& model, const Corpus& corpus,
                    const std::vector<int>& example_indices);

enum class KnockoutMode { kLesionAnchorObjects, kLesionAnchorWords, kAnchorsOnly };

const std::string& knockout_mode_name(KnockoutMode mode);
KnockoutMode knockout_mode_from_name(const std::string& name);

// Applies the lesioning transform to every example (remapping the target
// index after scene filtering) and reports plain accuracy.
double knockout(const ListenerModel& model, const Corpus& corpus,
                const std::vector<int>& example_indices, KnockoutMode mode);

// -- gradient checking ---------------------------------------------------------------

// Largest relative error between analytic and central-finite-difference
// gradients over every parameter of `params`, with loss re-evaluated through
// `loss_fn`. The error uses a small denominator floor so near-zero gradients
// are compared absolutely.
double max_fd_rel_error(ad::ParamStore& params, const std::function<ad::Tensor()>& loss_fn,
                        double h = 1e-4);

struct GradCheckResult {
  std::string loss_name;
  int instances = 0;
  double max_rel_err = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckResult> results;
  bool all_pass = false;
  double seconds = 0.0;
};

// Exercises every loss (anc, attn, dis, the full weighted composite, ent,
// men, contrastive, spatial) on randomly built small instances.
GradCheckReport gradcheck_all(uint64_t seed, int instances_per_loss = 3,
                              double tolerance = 1e-4);
std::string gradcheck_report_to_json(const GradCheckReport& r);

}  // namespace scanents
