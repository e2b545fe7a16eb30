#pragma once

#include "scanents/autodiff.hpp"
#include "scanents/geometry.hpp"
#include "scanents/vocab.hpp"

namespace scanents {

// Object encoder shared by the listener and the speaker: a class embedding
// concatenated with raw box geometry, a two-layer MLP, then self-attention
// over the objects. Every stage is permutation-equivariant in the object
// order. Parameters are created under "encoder." so a speaker can restore a
// listener's encoder verbatim.
struct EncoderConfig {
  int d = 64;
  int n_self_layers = 1;
  int n_classes = 0;
};

class ObjectEncoder {
 public:
  ObjectEncoder() = default;
  // Creates all parameters in `store`; `rng` drives initialization.
  ObjectEncoder(const EncoderConfig& cfg, const ClassVocabulary& classes, ad::ParamStore& store,
                Rng& rng);

  // [M×d] features; one row per scene object, in scene order.
  ad::Tensor forward(const Scene& scene, const ad::ParamStore& store) const;

  const EncoderConfig& config() const { return cfg_; }
  const ClassVocabulary& classes() const { return classes_; }

 private:
  EncoderConfig cfg_;
  ClassVocabulary classes_;
};

// Two fully connected layers with a tanh between; creates parameters
// "<prefix>.w1/.b1/.w2/.b2" on first use.
void create_mlp2(ad::ParamStore& store, const std::string& prefix, int64_t in, int64_t hidden,
                 int64_t out, Rng& rng);
ad::Tensor mlp2(const ad::ParamStore& store, const std::string& prefix, const ad::Tensor& x);

}  // namespace scanents
