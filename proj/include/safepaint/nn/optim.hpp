#pragma once

#include <string>
#include <utility>
#include <vector>

#include "safepaint/nn/autograd.hpp"

namespace safepaint::nn {

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::vector<std::pair<std::string, Var>> params, AdamOptions opts);

  /// Applies one update from the accumulated gradients, then clears them.
  void step();
  void zero_grad();

  const AdamOptions& options() const { return opts_; }
  long long steps() const { return t_; }

  /// Moment buffers as named tensors ("<param>.adam_m", "<param>.adam_v").
  std::vector<std::pair<std::string, Tensor>> state() const;
  void load_state(const std::vector<std::pair<std::string, Tensor>>& tensors, long long t);

 private:
  std::vector<std::pair<std::string, Var>> params_;
  std::vector<Tensor> m_, v_;
  AdamOptions opts_;
  long long t_ = 0;
};

}  // namespace safepaint::nn
