#include "scanents/optim.hpp"

#include <cmath>

namespace scanents::ad {

void Adam::step(ParamStore& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& entry : params.entries()) {
    if (!entry.tensor.has_grad()) continue;
    const auto& g = entry.tensor.grad();
    auto& mom = state_[entry.name];
    if (mom.m.size() != g.size()) {
      mom.m.assign(g.size(), 0.0);
      mom.v.assign(g.size(), 0.0);
    }
    auto& val = entry.tensor.mutable_values();
    for (size_t i = 0; i < g.size(); ++i) {
      mom.m[i] = beta1_ * mom.m[i] + (1.0 - beta1_) * g[i];
      mom.v[i] = beta2_ * mom.v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double m_hat = mom.m[i] / bc1;
      const double v_hat = mom.v[i] / bc2;
      val[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

}  // namespace scanents::ad
