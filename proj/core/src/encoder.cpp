#include "scanents/encoder.hpp"

namespace scanents {

namespace ad = scanents::ad;

void create_mlp2(ad::ParamStore& store, const std::string& prefix, int64_t in, int64_t hidden,
                 int64_t out, Rng& rng) {
  store.create(prefix + ".w1", {in, hidden}, ad::glorot_uniform({in, hidden}, rng));
  store.create(prefix + ".b1", {hidden}, std::vector<double>(hidden, 0.0));
  store.create(prefix + ".w2", {hidden, out}, ad::glorot_uniform({hidden, out}, rng));
  store.create(prefix + ".b2", {out}, std::vector<double>(out, 0.0));
}

ad::Tensor mlp2(const ad::ParamStore& store, const std::string& prefix, const ad::Tensor& x) {
  ad::Tensor h = ad::tanh(ad::add(ad::matmul(x, store.get(prefix + ".w1")),
                                  store.get(prefix + ".b1")));
  return ad::add(ad::matmul(h, store.get(prefix + ".w2")), store.get(prefix + ".b2"));
}

ObjectEncoder::ObjectEncoder(const EncoderConfig& cfg, const ClassVocabulary& classes,
                             ad::ParamStore& store, Rng& rng)
    : cfg_(cfg), classes_(classes) {
  const int64_t d = cfg.d;
  store.create("encoder.class_embedding", {classes.size(), d},
               ad::uniform_init(static_cast<int64_t>(classes.size()) * d,
                                -1.0 / std::sqrt(static_cast<double>(d)),
                                1.0 / std::sqrt(static_cast<double>(d)), rng));
  create_mlp2(store, "encoder.object_mlp", 6 + d, d, d, rng);
  for (int l = 0; l < cfg.n_self_layers; ++l) {
    const std::string p = "encoder.self_attn." + std::to_string(l);
    store.create(p + ".wq", {d, d}, ad::glorot_uniform({d, d}, rng));
    store.create(p + ".wk", {d, d}, ad::glorot_uniform({d, d}, rng));
    store.create(p + ".wv", {d, d}, ad::glorot_uniform({d, d}, rng));
    store.create(p + ".wo", {d, d}, ad::glorot_uniform({d, d}, rng));
  }
}

ad::Tensor ObjectEncoder::forward(const Scene& scene, const ad::ParamStore& store) const {
  const int64_t m = static_cast<int64_t>(scene.objects.size());
  std::vector<double> geom;
  geom.reserve(static_cast<size_t>(m) * 6);
  std::vector<int64_t> class_ids;
  class_ids.reserve(scene.objects.size());
  for (const auto& o : scene.objects) {
    geom.insert(geom.end(), {o.box.center.x, o.box.center.y, o.box.center.z, o.box.size.x,
                             o.box.size.y, o.box.size.z});
    class_ids.push_back(classes_.id(o.class_label));
  }
  ad::Tensor g = ad::Tensor::constant({m, 6}, std::move(geom));
  ad::Tensor cls = ad::embedding_lookup(store.get("encoder.class_embedding"), class_ids);
  ad::Tensor h = mlp2(store, "encoder.object_mlp", ad::concat({g, cls}, 1));
  for (int l = 0; l < cfg_.n_self_layers; ++l) {
    const std::string p = "encoder.self_attn." + std::to_string(l);
    ad::Tensor q = ad::matmul(h, store.get(p + ".wq"));
    ad::Tensor k = ad::matmul(h, store.get(p + ".wk"));
    ad::Tensor v = ad::matmul(h, store.get(p + ".wv"));
    auto [ctx, scores] = ad::scaled_dot_attention(q, k, v);
    h = ad::layer_norm(ad::add(h, ad::matmul(ctx, store.get(p + ".wo"))));
  }
  return h;
}

}  // namespace scanents
