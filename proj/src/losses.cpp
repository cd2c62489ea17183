#include "safepaint/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace safepaint::losses {

using namespace safepaint::nn;

namespace {

void require_same(const Var& a, const Var& b, const char* what) {
  if (!(a->shape() == b->shape()))
    throw ShapeError(std::string(what) + ": shape " + a->shape().str() + " vs " + b->shape().str());
}

Var mean_abs_diff(const Var& a, const Var& b) { return mean_all(nn::abs(sub(a, b))); }

void require_stacks(const FeatureStack& a, const FeatureStack& b, const FeatureStack& c, const char* what) {
  if (a.size() != b.size() || a.size() != c.size() || a.empty())
    throw std::invalid_argument(std::string(what) + ": feature stacks differ in depth");
}

}  // namespace

Var l1_loss(const Var& coarse, const Var& refined, const Var& gt) {
  require_same(coarse, gt, "l1_loss");
  require_same(refined, gt, "l1_loss");
  return add(mean_abs_diff(coarse, gt), mean_abs_diff(refined, gt));
}

Var perceptual_loss(const FeatureStack& coarse, const FeatureStack& refined, const FeatureStack& gt) {
  require_stacks(coarse, refined, gt, "perceptual_loss");
  Var total;
  for (size_t i = 0; i < gt.size(); ++i) {
    Var term = add(mean_abs_diff(coarse[i], gt[i]), mean_abs_diff(refined[i], gt[i]));
    total = total ? add(total, term) : term;
  }
  return total;
}

Var perceptual_loss(const Var& coarse, const Var& refined, const Var& gt, const models::FeaturePyramid& extractor) {
  require_same(coarse, gt, "perceptual_loss");
  require_same(refined, gt, "perceptual_loss");
  return perceptual_loss(extractor.forward(coarse), extractor.forward(refined), extractor.forward(gt));
}

Var style_loss(const FeatureStack& coarse, const FeatureStack& refined, const FeatureStack& gt) {
  require_stacks(coarse, refined, gt, "style_loss");
  Var total;
  for (size_t i = 0; i < gt.size(); ++i) {
    Var g = gram(gt[i]);
    Var term = add(mean_abs_diff(gram(coarse[i]), g), mean_abs_diff(gram(refined[i]), g));
    total = total ? add(total, term) : term;
  }
  return total;
}

Var style_loss(const Var& coarse, const Var& refined, const Var& gt, const models::FeaturePyramid& extractor) {
  require_same(coarse, gt, "style_loss");
  require_same(refined, gt, "style_loss");
  return style_loss(extractor.forward(coarse), extractor.forward(refined), extractor.forward(gt));
}

AdversarialLosses adversarial_losses(const Var& real_logits, const Var& fake_logits) {
  return {add(bce_with_logits(real_logits, 1.0), bce_with_logits(fake_logits, 0.0)), bce_with_logits(fake_logits, 1.0)};
}

Var domain_distance_loss(const Var& z_out, const Var& z_b, const Var& z_gt) {
  require_same(z_out, z_b, "domain_distance_loss");
  require_same(z_out, z_gt, "domain_distance_loss");
  return mean_all(add(l2_norm_per_sample(sub(z_out, z_b)), l2_norm_per_sample(sub(z_out, z_gt))));
}

double domain_distance_loss(const models::DomainVector& z_out, const models::DomainVector& z_b,
                            const models::DomainVector& z_gt) {
  double a = 0, b = 0;
  for (int i = 0; i < models::kDomainDim; ++i) {
    a += (z_out[i] - z_b[i]) * (z_out[i] - z_b[i]);
    b += (z_out[i] - z_gt[i]) * (z_out[i] - z_gt[i]);
  }
  return std::sqrt(a) + std::sqrt(b);
}

Var total_loss(const GeneratorTerms& t, const LossWeights& w) {
  if (!t.l1 || !t.per || !t.sty || !t.adv_g || !t.dom) throw std::invalid_argument("total_loss: missing component");
  Var total = scale(t.l1, w.l1);
  total = add(total, scale(t.per, w.per));
  total = add(total, scale(t.sty, w.sty));
  total = add(total, scale(t.adv_g, w.adv));
  return add(total, scale(t.dom, w.dom));
}

double total_loss(const LossReport& c, const LossWeights& w) {
  auto get = [&](const char* key) {
    auto it = c.find(key);
    if (it == c.end()) throw std::invalid_argument(std::string("total_loss: missing component '") + key + "'");
    return it->second;
  };
  return w.l1 * get("l1") + w.per * get("per") + w.sty * get("sty") + w.adv * get("adv_g") + w.dom * get("dom");
}

}  // namespace safepaint::losses
