#pragma once

#include <map>
#include <string>
#include <vector>

#include "safepaint/models.hpp"
#include "safepaint/nn/ops.hpp"

namespace safepaint::losses {

using nn::Var;

struct LossWeights {
  double l1 = 1.0;
  double per = 0.1;
  double sty = 250.0;
  double adv = 0.1;
  double dom = 0.01;
};

/// Named scalars for one step: l1, per, sty, adv_d, adv_g, dom, total.
using LossReport = std::map<std::string, double>;

/// Feature maps of one image batch at every pyramid scale.
using FeatureStack = std::vector<Var>;

/// mean|I_c - I_gt| + mean|I_out - I_gt|
Var l1_loss(const Var& coarse, const Var& refined, const Var& gt);

Var perceptual_loss(const FeatureStack& coarse, const FeatureStack& refined, const FeatureStack& gt);
Var perceptual_loss(const Var& coarse, const Var& refined, const Var& gt, const models::FeaturePyramid& extractor);

/// Same as the perceptual loss, but on Grams normalized by C*H*W.
Var style_loss(const FeatureStack& coarse, const FeatureStack& refined, const FeatureStack& gt);
Var style_loss(const Var& coarse, const Var& refined, const Var& gt, const models::FeaturePyramid& extractor);

struct AdversarialLosses {
  Var d_loss;  // BCE(real -> 1) + BCE(fake -> 0)
  Var g_loss;  // non-saturating: -mean log sigmoid(fake)
};
AdversarialLosses adversarial_losses(const Var& real_logits, const Var& fake_logits);

/// Batch mean of ||Z_out - Z_b|| + ||Z_out - Z_gt||.
Var domain_distance_loss(const Var& z_out, const Var& z_b, const Var& z_gt);
double domain_distance_loss(const models::DomainVector& z_out, const models::DomainVector& z_b,
                            const models::DomainVector& z_gt);

struct GeneratorTerms {
  Var l1, per, sty, adv_g, dom;
};

Var total_loss(const GeneratorTerms& terms, const LossWeights& w);
/// Throws std::invalid_argument naming the first missing component.
double total_loss(const LossReport& components, const LossWeights& w);

}  // namespace safepaint::losses
