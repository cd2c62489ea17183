#include "safepaint/nn/optim.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace safepaint::nn {

Adam::Adam(std::vector<std::pair<std::string, Var>> params, AdamOptions opts)
    : params_(std::move(params)), opts_(opts) {
  if (!(opts_.lr >= 0)) throw std::invalid_argument("Adam: learning rate must be non-negative");
  for (const auto& [name, p] : params_) {
    m_.emplace_back(p->value.shape);
    v_.emplace_back(p->value.shape);
  }
}

void Adam::zero_grad() {
  for (auto& [name, p] : params_) p->grad = Tensor();
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (size_t k = 0; k < params_.size(); ++k) {
    Node& p = *params_[k].second;
    if (p.grad.empty()) continue;
    auto& m = m_[k].data;
    auto& v = v_[k].data;
    for (size_t i = 0; i < p.value.data.size(); ++i) {
      const double g = p.grad.data[i];
      m[i] = opts_.beta1 * m[i] + (1 - opts_.beta1) * g;
      v[i] = opts_.beta2 * v[i] + (1 - opts_.beta2) * g * g;
      p.value.data[i] -= opts_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opts_.eps);
    }
  }
  zero_grad();
}

std::vector<std::pair<std::string, Tensor>> Adam::state() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (size_t k = 0; k < params_.size(); ++k) {
    out.emplace_back(params_[k].first + ".adam_m", m_[k]);
    out.emplace_back(params_[k].first + ".adam_v", v_[k]);
  }
  return out;
}

void Adam::load_state(const std::vector<std::pair<std::string, Tensor>>& tensors, long long t) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, tensor] : tensors) by_name[name] = &tensor;
  for (size_t k = 0; k < params_.size(); ++k) {
    for (auto [suffix, dst] : {std::pair{".adam_m", &m_[k]}, std::pair{".adam_v", &v_[k]}}) {
      auto it = by_name.find(params_[k].first + suffix);
      if (it == by_name.end()) throw std::runtime_error("Adam: missing state " + params_[k].first + suffix);
      if (!(it->second->shape == dst->shape)) throw std::runtime_error("Adam: shape mismatch for " + it->first);
      *dst = *it->second;
    }
  }
  t_ = t;
}

}  // namespace safepaint::nn
