#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "safepaint/forensic_probes.hpp"
#include "safepaint/nn/layers.hpp"

namespace safepaint::probes {

struct LabeledSample {
  Image image;
  Mask mask;  // 1 = tampered pixel
};

struct DetectorOptions {
  int width = 8;
  int steps = 300;
  int batch = 4;
  double lr = 1e-2;
};

/// Fully convolutional per-pixel tamper classifier over RGB plus a 3x3
/// high-pass residual, 9x9 receptive field. The output layer starts at zero,
/// so an untrained detector emits a flat 0.5 map.
class PatchDetector {
 public:
  PatchDetector() = default;
  PatchDetector(std::uint64_t seed, int width);

  nn::Var logits(const Image& img) const;
  Heatmap heatmap(const Image& img) const;

  nn::ParamRegistry registry();
  void save(const std::string& path);
  static PatchDetector load(const std::string& path);

  int width = 8;
  std::vector<nn::Conv2d> layers;
};

/// Seeded Adam training on per-pixel BCE. Needs both tampered and clean pixels.
PatchDetector train_patch_detector(const std::vector<LabeledSample>& corpus, std::uint64_t seed,
                                   const DetectorOptions& opts = {});

/// Naive tampering: each hole pixel copies the nearest known pixel on its
/// row, or on its column when the row is entirely masked.
Image copy_fill(const Image& img, const Mask& m);

}  // namespace safepaint::probes
