#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "scanents/autodiff.hpp"

namespace scanents::ad {

// Adam with bias correction. State (first/second moments and the step
// counter) lives in the optimizer; parameters without a materialized
// gradient are skipped for the step.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& params);
  void reset() {
    state_.clear();
    t_ = 0;
  }
  int64_t steps_taken() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace scanents::ad
