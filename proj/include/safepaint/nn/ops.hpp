#pragma once

#include "safepaint/nn/autograd.hpp"

namespace safepaint::nn {

// Elementwise arithmetic. Binary ops broadcast any axis of extent 1.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// 1 - a
Var one_minus(const Var& a);

Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var elu(const Var& x, double alpha = 1.0);
Var sigmoid(const Var& x);
Var tanh(const Var& x);
Var abs(const Var& x);

/// Zero-padded 2-D cross-correlation. `bias` may be null; weight is (Cout,Cin,k,k).
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);

Var upsample_nearest2x(const Var& x);
Var avg_pool2x(const Var& x);

/// Per-channel reductions to (N,C,1,1).
Var global_avg_pool(const Var& x);
Var global_max_pool(const Var& x);
Var sum_spatial(const Var& x);

Var concat_channels(const std::vector<Var>& xs);

/// Tiles an (N,C,1,1) vector over an h x w grid.
Var tile_spatial(const Var& v, int h, int w);

Var sum_all(const Var& x);
Var mean_all(const Var& x);

/// Per-sample Euclidean norm, (N,1,1,1). The subgradient at 0 is taken as 0.
Var l2_norm_per_sample(const Var& x);

/// Per-sample Gram matrix F F^T / (C*H*W), shaped (N,1,C,C).
Var gram(const Var& x);

/// Mean binary cross-entropy of logits against a constant target in {0,1}.
Var bce_with_logits(const Var& logits, double target);
/// Elementwise targets of the same shape as the logits.
Var bce_with_logits(const Var& logits, const Var& target);

struct BatchNormState {
  Tensor running_mean;  // (1,C,1,1)
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Training mode normalizes with batch statistics and updates the running
/// buffers; eval mode uses the running buffers.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, bool training);

/// Per-sample, per-channel normalization over the spatial plane, then affine.
Var instance_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

struct SpectralState {
  Tensor u;  // (Cout)
  Tensor v;  // (Cin*k*k)
};

/// weight / sigma(weight), with sigma estimated by `iterations` power-iteration
/// steps that update the persistent vectors. u and v are treated as constants
/// when differentiating, sigma = u^T W v is differentiated through W.
Var spectral_normalize(const Var& weight, SpectralState& state, int iterations);

/// Non-differentiable helper used by the op and by tests.
double spectral_sigma(const Tensor& weight, SpectralState& state, int iterations);

}  // namespace safepaint::nn
