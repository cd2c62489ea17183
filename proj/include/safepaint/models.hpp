#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "safepaint/image.hpp"
#include "safepaint/nn/layers.hpp"

namespace safepaint::models {

using nn::Tensor;
using nn::Var;

inline constexpr int kDomainDim = 16;

using DomainVector = std::array<double, kDomainDim>;

struct GeneratorSpec {
  int in_channels = 4;  // G1: image + mask; G2: image + mask + 16 pattern channels
  int base_width = 16;
  int residual_blocks = 4;
  int stages = 2;  // stride-2 downsamples, mirrored by nearest-upsample stages
  bool rwsa = false;
  bool spectral = true;
  int rwsa_reduction = 16;
  bool instance_norm = false;  // affine instance norm after every hidden conv
};

/// Widths of every network. Defaults are desk scale.
struct ModelConfig {
  int base_width = 8;
  int residual_blocks = 4;
  int disc_width = 8;
  int extractor_width = 8;
  int rwsa_reduction = 16;
  bool rwsa = true;
  bool instance_norm = false;
  std::uint64_t seed = 1;

  GeneratorSpec coarse_spec() const { return {4, base_width, residual_blocks, 2, false, true, 16, instance_norm}; }
  GeneratorSpec refine_spec() const {
    return {4 + kDomainDim, base_width, residual_blocks, 2, rwsa, true, rwsa_reduction, instance_norm};
  }
};

// Image <-> tensor conversion. Batches must share one shape.
Tensor to_tensor(std::span<const Image> images);
Tensor to_tensor(const Image& image);
Tensor mask_tensor(std::span<const Mask> masks);
Tensor mask_tensor(const Mask& mask);
Image to_image(const Tensor& t, int index = 0);

/// Johnson-style encoder / residual trunk / decoder, output squashed to [0,1].
class Generator {
 public:
  Generator() = default;
  Generator(const GeneratorSpec& spec, Rng& rng);

  /// `mask` (N,1,H,W) feeds the RWSA modules; ignored when they are absent.
  Var forward(const Var& x, const Tensor& mask, bool training);
  void collect(const std::string& prefix, nn::ParamRegistry& r);

  GeneratorSpec spec;
  nn::Conv2d head;
  std::vector<nn::Conv2d> down;
  std::vector<std::pair<nn::Conv2d, nn::Conv2d>> trunk;
  std::vector<nn::Conv2d> up;
  std::vector<nn::Rwsa> attention;
  nn::Conv2d tail;
  // One per hidden conv, in forward order: head, down, residual pairs, up.
  std::vector<nn::InstanceNorm> norms;
};

/// PatchGAN: spectral-normalized 4x4 stride-2 convolutions, per-patch logits.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(int width, Rng& rng);

  Var forward(const Var& image, bool training);
  void collect(const std::string& prefix, nn::ParamRegistry& r);
  static constexpr int kDownsample = 8;

  std::vector<nn::Conv2d> layers;
};

/// Partial-convolution encoder: region pixels -> 16-dim domain pattern vector.
class DomainExtractor {
 public:
  DomainExtractor() = default;
  DomainExtractor(int width, Rng& rng);

  /// region (N,1,H,W), 1 = pixels to describe. Returns (N,16,1,1).
  Var forward(const Var& image, const Tensor& region) const;
  void collect(const std::string& prefix, nn::ParamRegistry& r);
  /// Same weights as constants: gradients reach the input but not the parameters.
  DomainExtractor detached() const;

  std::vector<nn::PartialConv2d> layers;
  Var head_weight, head_bias;
};

/// Frozen three-scale feature extractor standing in for a pretrained
/// backbone. Weights come from a fixed seed unless loaded from a file.
class FeaturePyramid {
 public:
  static constexpr std::uint64_t kDefaultSeed = 0x5afe9a1d;
  static constexpr int kScales = 3;

  explicit FeaturePyramid(std::uint64_t seed = kDefaultSeed);

  std::vector<Var> forward(const Var& image) const;
  /// Replaces the weights from a tensor archive with keys conv{0,1,2}.{weight,bias}.
  void load(const std::string& path);
  void save(const std::string& path) const;

  std::array<Tensor, kScales> weights;
  std::array<Tensor, kScales> biases;
};

/// Every intermediate of one two-stage pass.
struct PipelineOutputs {
  Var coarse_raw;   // G1 output
  Var coarse;       // I_c
  Var z_background; // Z_b (from I_c over the known region)
  Var refined_raw;  // G2 output
  Var refined;      // I_out
};

class SafePaintModel {
 public:
  SafePaintModel() = default;
  explicit SafePaintModel(const ModelConfig& cfg);

  /// gt (N,3,H,W), mask (N,1,H,W). When `refine` is false only stage one runs.
  PipelineOutputs forward(const Tensor& gt, const Tensor& mask, bool training, bool refine = true);

  nn::ParamRegistry generator_registry();  // G1, G2 and P
  nn::ParamRegistry discriminator_registry();
  nn::ParamRegistry full_registry();

  ModelConfig cfg;
  Generator coarse, refine;
  Discriminator disc;
  DomainExtractor extractor;
};

// Image-level entry points.
Image coarse_forward(SafePaintModel& model, const Image& input, const Mask& m);
DomainVector domain_extract(const SafePaintModel& model, const Image& image, const Mask& region);
Tensor pattern_map(const DomainVector& z, int height, int width);
Image refine_forward(SafePaintModel& model, const Image& coarse, const Mask& m, const Tensor& pattern);
Tensor discriminate(SafePaintModel& model, const Image& image);

/// Full inference: stage one, Z_b from the coarse result, stage two.
Image inpaint(SafePaintModel& model, const Image& image, const Mask& m, bool refine = true);

}  // namespace safepaint::models
