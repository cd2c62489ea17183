#include "safepaint/patch_detector.hpp"

#include <algorithm>
#include <stdexcept>

#include "safepaint/archive.hpp"
#include "safepaint/models.hpp"
#include "safepaint/nn/optim.hpp"

namespace safepaint::probes {

namespace {

constexpr const char* kHeader = "safepaint-detector-v1";
constexpr double kResidualGain = 8.0;

// RGB centred on zero, followed by the 3x3 high-pass residual x - box(x)
// with replicated borders.
nn::Tensor detector_input(const Image& rgb) {
  const int H = rgb.height, W = rgb.width;
  nn::Tensor t({1, 6, H, W});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double box = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            box += rgb.at(c, std::clamp(y + dy, 0, H - 1), std::clamp(x + dx, 0, W - 1));
        t.at(0, c, y, x) = rgb.at(c, y, x) - 0.5;
        t.at(0, 3 + c, y, x) = kResidualGain * (rgb.at(c, y, x) - box / 9);
      }
  return t;
}

}  // namespace

PatchDetector::PatchDetector(std::uint64_t seed, int w) : width(w) {
  if (w < 1) throw std::invalid_argument("PatchDetector: width must be positive");
  Rng rng(derive_seed(seed, 0xde7));
  layers.emplace_back(nn::Conv2dOptions{6, w, 3, 1, 1}, rng);
  layers.emplace_back(nn::Conv2dOptions{w, w, 3, 1, 1}, rng);
  layers.emplace_back(nn::Conv2dOptions{w, 1, 3, 1, 1}, rng);
  for (double& v : layers.back().weight->value.data) v = 0;
  for (double& v : layers.back().bias->value.data) v = 0;
}

nn::Var PatchDetector::logits(const Image& img) const {
  nn::Var x = nn::constant(detector_input(to_rgb(img)));
  auto ls = layers;  // Conv2d::forward is non-const; copies share parameters
  x = nn::relu(ls[0].forward(x, false));
  x = nn::relu(ls[1].forward(x, false));
  return ls[2].forward(x, false);
}

Heatmap PatchDetector::heatmap(const Image& img) const {
  nn::NoGradGuard guard;
  const nn::Var p = nn::sigmoid(logits(img));
  Heatmap h(img.height, img.width);
  h.data = p->value.data;
  return h;
}

nn::ParamRegistry PatchDetector::registry() {
  nn::ParamRegistry r;
  for (size_t i = 0; i < layers.size(); ++i) layers[i].collect("conv" + std::to_string(i), r);
  return r;
}

void PatchDetector::save(const std::string& path) {
  archive::Archive a;
  a.header = kHeader;
  a.meta["width"] = width;
  for (auto& [name, v] : registry().params) a.tensors.emplace_back(name, v->value);
  archive::write(path, a);
}

PatchDetector PatchDetector::load(const std::string& path) {
  const auto a = archive::read(path, kHeader);
  PatchDetector d(0, a.meta.at("width").get<int>());
  for (auto& [name, v] : d.registry().params) {
    const auto& t = a.get(name);
    if (!(t.shape == v->value.shape)) throw std::runtime_error("PatchDetector: shape mismatch for " + name);
    v->value = t;
  }
  return d;
}

PatchDetector train_patch_detector(const std::vector<LabeledSample>& corpus, std::uint64_t seed,
                                   const DetectorOptions& opts) {
  if (corpus.empty()) throw std::invalid_argument("train_patch_detector: empty corpus");
  size_t positives = 0, total = 0;
  for (const auto& s : corpus) {
    require_mask_fits(s.image, s.mask, "train_patch_detector");
    positives += s.mask.count();
    total += s.mask.size();
  }
  if (positives == 0 || positives == total)
    throw std::invalid_argument("train_patch_detector: corpus needs tampered and clean pixels");
  if (opts.batch < 1 || opts.steps < 0) throw std::invalid_argument("train_patch_detector: invalid options");

  PatchDetector det(seed, opts.width);
  nn::Adam adam(det.registry().params, {opts.lr, 0.9, 0.999, 1e-8});
  Rng rng(derive_seed(seed, 0xba7c));
  for (int step = 0; step < opts.steps; ++step) {
    for (int b = 0; b < opts.batch; ++b) {
      const auto& s = corpus[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(corpus.size()) - 1))];
      const nn::Var z = det.logits(s.image);
      const nn::Var target = nn::constant(models::mask_tensor(s.mask));
      nn::backward(nn::scale(nn::bce_with_logits(z, target), 1.0 / opts.batch));
    }
    adam.step();
  }
  return det;
}

Image copy_fill(const Image& img, const Mask& m) {
  require_mask_fits(img, m, "copy_fill");
  Image out = img;
  const int H = img.height, W = img.width;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (!m.at(y, x)) continue;
      int sy = -1, sx = -1;
      for (int d = 1; d < std::max(H, W) && sy < 0; ++d) {
        if (x - d >= 0 && !m.at(y, x - d)) sy = y, sx = x - d;
        else if (x + d < W && !m.at(y, x + d)) sy = y, sx = x + d;
      }
      for (int d = 1; d < H && sy < 0; ++d) {
        if (y - d >= 0 && !m.at(y - d, x)) sy = y - d, sx = x;
        else if (y + d < H && !m.at(y + d, x)) sy = y + d, sx = x;
      }
      if (sy < 0) throw std::invalid_argument("copy_fill: hole pixel has no known pixel on its row or column");
      for (int c = 0; c < img.channels; ++c) out.at(c, y, x) = img.at(c, sy, sx);
    }
  return out;
}

}  // namespace safepaint::probes
