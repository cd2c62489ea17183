#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "safepaint/nn/tensor.hpp"

namespace safepaint::nn {

struct Node;
using Var = std::shared_ptr<Node>;

/// One value in the computation graph. Interior nodes own a closure that
/// pushes their gradient into their parents.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  const Shape& shape() const { return value.shape; }
  /// Adds g into grad, allocating on first use.
  void accumulate(const Tensor& g);
  double* grad_data();
};

Var constant(Tensor t);
Var parameter(Tensor t);

/// True when graph recording is enabled on this thread.
bool grad_enabled();

/// Disables graph recording for its lifetime (inference, frozen paths).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an interior node. When recording is off or no parent needs a
/// gradient the closure is dropped and the result is a constant.
Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

/// Reverse sweep from a scalar root, seeding d(root)/d(root) = 1.
void backward(const Var& root);

/// Value copy without graph history.
Var detach(const Var& v);

}  // namespace safepaint::nn
