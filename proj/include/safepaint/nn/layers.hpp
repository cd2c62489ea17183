#pragma once

#include <string>
#include <utility>
#include <vector>

#include "safepaint/nn/ops.hpp"
#include "safepaint/rng.hpp"

namespace safepaint::nn {

/// Named view of a model's trainable parameters and persistent buffers.
struct ParamRegistry {
  std::vector<std::pair<std::string, Var>> params;
  std::vector<std::pair<std::string, Tensor*>> buffers;

  void add(std::string name, const Var& v) { params.emplace_back(std::move(name), v); }
  void add_buffer(std::string name, Tensor* t) { buffers.emplace_back(std::move(name), t); }
};

struct Conv2dOptions {
  int in = 1;
  int out = 1;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  bool bias = true;
  bool spectral = false;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const Conv2dOptions& opts, Rng& rng);

  /// In training mode spectral layers advance their power iteration.
  Var forward(const Var& x, bool training);
  Var effective_weight(bool training);
  void collect(const std::string& prefix, ParamRegistry& r);

  Conv2dOptions opts;
  Var weight;
  Var bias;
  SpectralState sn;
};

class InstanceNorm {
 public:
  InstanceNorm() = default;
  explicit InstanceNorm(int channels);

  Var forward(const Var& x) const { return instance_norm(x, gamma, beta); }
  void collect(const std::string& prefix, ParamRegistry& r);

  Var gamma, beta;
};

/// Output of a partial convolution: features plus the updated validity mask.
struct PartialOutput {
  Var features;
  Tensor mask;  // (N,1,H',W'), 1 where the window saw at least one valid input
};

/// Convolution over valid inputs only, renormalized by window coverage.
/// `valid` is (N,1,H,W) or (N,C,H,W) with entries in {0,1}.
PartialOutput partial_conv(const Var& x, const Tensor& valid, const Var& weight, const Var& bias, int stride, int pad);

class PartialConv2d {
 public:
  PartialConv2d() = default;
  PartialConv2d(const Conv2dOptions& opts, Rng& rng);

  PartialOutput forward(const Var& x, const Tensor& valid) const;
  void collect(const std::string& prefix, ParamRegistry& r);

  Conv2dOptions opts;
  Var weight;
  Var bias;
};

/// Squeeze-and-excitation gate whose descriptor is avg-pool + max-pool.
class ChannelAttention {
 public:
  ChannelAttention() = default;
  ChannelAttention(int channels, int hidden, Rng& rng);

  Var gate(const Var& x) const;  // (N,C,1,1) in (0,1)
  Var forward(const Var& x) const { return mul(x, gate(x)); }
  void collect(const std::string& prefix, ParamRegistry& r);

  int channels = 0;
  int hidden = 0;
  Var w1, b1, w2, b2;  // 1x1 weights: (hidden,C,1,1), (C,hidden,1,1)
};

/// Two (3x3 conv -> batch norm -> ELU) stages, shape preserving.
class LearnableBlock {
 public:
  LearnableBlock() = default;
  LearnableBlock(int channels, int hidden, bool spectral, Rng& rng);

  Var forward(const Var& x, bool training);
  void collect(const std::string& prefix, ParamRegistry& r);

  Conv2d conv1, conv2;
  Var gamma1, beta1, gamma2, beta2;
  BatchNormState bn1, bn2;
};

struct RwsaConfig {
  int channels = 16;
  int reduction = 16;
  int lb_channels = 16;
  bool spectral = false;

  /// Bottleneck width of each channel-attention MLP, never below 4.
  int attention_hidden() const;
};

/// Pre-fusion intermediates, exposed for inspection.
struct RwsaTrace {
  Var foreground;  // M * (LB(G_f1 x) + G_f2 x)
  Var background;  // (1-M) * G_b x
};

class Rwsa {
 public:
  Rwsa() = default;
  Rwsa(const RwsaConfig& cfg, Rng& rng);

  /// `mask` is (N,1,h,w) with 1 = hole; it is resampled nearest to x's grid.
  Var forward(const Var& x, const Tensor& mask, bool training, RwsaTrace* trace = nullptr);
  void collect(const std::string& prefix, ParamRegistry& r);

  RwsaConfig cfg;
  ChannelAttention gate_background, gate_foreground1, gate_foreground2;
  LearnableBlock learnable;
  Conv2d fusion;  // 1x1, 2C -> C
};

/// Nearest-neighbour resampling of an (N,1,H,W) mask tensor.
Tensor resize_mask_nearest(const Tensor& mask, int height, int width);

}  // namespace safepaint::nn
