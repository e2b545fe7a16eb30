#pragma once

#include <map>
#include <string>
#include <vector>

#include "scanents/autodiff.hpp"

namespace scanents {

// Serialized model state: a versioned header, free-form string metadata
// (model configs travel as embedded JSON text), the vocabularies and the
// parameter tensors in creation order. Serialization is deterministic.
struct CheckpointData {
  std::string model_kind;
  std::map<std::string, std::string> meta;
  std::vector<std::string> vocab_words;
  std::vector<std::string> class_labels;
  std::vector<std::tuple<std::string, ad::Shape, std::vector<double>>> params;
};

std::string checkpoint_to_string(const CheckpointData& ckpt);
CheckpointData checkpoint_from_string(const std::string& text);

void save_checkpoint(const CheckpointData& ckpt, const std::string& path);
CheckpointData load_checkpoint(const std::string& path);

// Copies checkpoint parameters into an existing store. With a `prefix`, only
// parameters whose name starts with it are copied and all of them must exist
// in the store. Throws CheckpointMismatch on missing names or shape drift.
void restore_params(const CheckpointData& ckpt, ad::ParamStore& store,
                    const std::string& prefix = "");

// Snapshot of a live parameter store.
std::vector<std::tuple<std::string, ad::Shape, std::vector<double>>> snapshot_params(
    const ad::ParamStore& store);

}  // namespace scanents
