#include "safepaint/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace safepaint::nn {

namespace {

Tensor uniform_tensor(Shape s, double bound, Rng& rng) {
  Tensor t(s);
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

Conv2d::Conv2d(const Conv2dOptions& o, Rng& rng) : opts(o) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(o.in * o.kernel * o.kernel));
  weight = parameter(uniform_tensor({o.out, o.in, o.kernel, o.kernel}, bound, rng));
  if (o.bias) bias = parameter(uniform_tensor({1, o.out, 1, 1}, bound, rng));
  if (o.spectral) spectral_sigma(weight->value, sn, 1);
}

Var Conv2d::effective_weight(bool training) {
  if (!opts.spectral) return weight;
  return spectral_normalize(weight, sn, training ? 1 : 0);
}

Var Conv2d::forward(const Var& x, bool training) {
  return conv2d(x, effective_weight(training), bias, opts.stride, opts.pad);
}

InstanceNorm::InstanceNorm(int channels)
    : gamma(parameter(Tensor({1, channels, 1, 1}, 1.0))), beta(parameter(Tensor({1, channels, 1, 1}, 0.0))) {}

void InstanceNorm::collect(const std::string& prefix, ParamRegistry& r) {
  r.add(prefix + ".gamma", gamma);
  r.add(prefix + ".beta", beta);
}

void Conv2d::collect(const std::string& prefix, ParamRegistry& r) {
  r.add(prefix + ".weight", weight);
  if (bias) r.add(prefix + ".bias", bias);
  if (opts.spectral) {
    r.add_buffer(prefix + ".sn_u", &sn.u);
    r.add_buffer(prefix + ".sn_v", &sn.v);
  }
}

PartialOutput partial_conv(const Var& x, const Tensor& valid, const Var& weight, const Var& bias, int stride, int pad) {
  const Shape& xs = x->shape();
  const Shape& ms = valid.shape;
  if (ms.n != xs.n || ms.h != xs.h || ms.w != xs.w || (ms.c != 1 && ms.c != xs.c))
    throw std::invalid_argument("partial_conv: mask " + ms.str() + " is not broadcastable to " + xs.str());
  const int k = weight->shape().h;
  const int ho = (xs.h + 2 * pad - k) / stride + 1;
  const int wo = (xs.w + 2 * pad - k) / stride + 1;

  Var masked = mul(x, constant(valid));
  Var raw = conv2d(masked, weight, nullptr, stride, pad);

  // Window coverage: number of valid mask entries under each kernel placement.
  const double window = static_cast<double>(ms.c) * k * k;
  Tensor ratio({xs.n, 1, ho, wo}), updated({xs.n, 1, ho, wo});
  for (int n = 0; n < xs.n; ++n)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double count = 0;
        for (int c = 0; c < ms.c; ++c)
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= xs.h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < xs.w) count += valid.at(n, c, iy, ix);
            }
          }
        ratio.at(n, 0, oy, ox) = count > 0 ? window / count : 0.0;
        updated.at(n, 0, oy, ox) = count > 0 ? 1.0 : 0.0;
      }
  Var out = mul(raw, constant(std::move(ratio)));
  if (bias) out = add(out, bias);
  out = mul(out, constant(updated));
  return {out, std::move(updated)};
}

PartialConv2d::PartialConv2d(const Conv2dOptions& o, Rng& rng) : opts(o) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(o.in * o.kernel * o.kernel));
  weight = parameter(uniform_tensor({o.out, o.in, o.kernel, o.kernel}, bound, rng));
  if (o.bias) bias = parameter(uniform_tensor({1, o.out, 1, 1}, bound, rng));
}

PartialOutput PartialConv2d::forward(const Var& x, const Tensor& valid) const {
  return partial_conv(x, valid, weight, bias, opts.stride, opts.pad);
}

void PartialConv2d::collect(const std::string& prefix, ParamRegistry& r) {
  r.add(prefix + ".weight", weight);
  if (bias) r.add(prefix + ".bias", bias);
}

ChannelAttention::ChannelAttention(int c, int h, Rng& rng) : channels(c), hidden(h) {
  const double b1_bound = 1.0 / std::sqrt(static_cast<double>(c));
  const double b2_bound = 1.0 / std::sqrt(static_cast<double>(h));
  w1 = parameter(uniform_tensor({h, c, 1, 1}, b1_bound, rng));
  b1 = parameter(uniform_tensor({1, h, 1, 1}, b1_bound, rng));
  w2 = parameter(uniform_tensor({c, h, 1, 1}, b2_bound, rng));
  b2 = parameter(uniform_tensor({1, c, 1, 1}, b2_bound, rng));
}

Var ChannelAttention::gate(const Var& x) const {
  if (x->shape().c != channels)
    throw std::invalid_argument("channel_attention: expected " + std::to_string(channels) + " channels, got " +
                                std::to_string(x->shape().c));
  Var descriptor = add(global_avg_pool(x), global_max_pool(x));
  Var h = relu(conv2d(descriptor, w1, b1, 1, 0));
  return sigmoid(conv2d(h, w2, b2, 1, 0));
}

void ChannelAttention::collect(const std::string& prefix, ParamRegistry& r) {
  r.add(prefix + ".w1", w1);
  r.add(prefix + ".b1", b1);
  r.add(prefix + ".w2", w2);
  r.add(prefix + ".b2", b2);
}

LearnableBlock::LearnableBlock(int channels, int hidden, bool spectral, Rng& rng)
    : conv1({channels, hidden, 3, 1, 1, true, spectral}, rng),
      conv2({hidden, channels, 3, 1, 1, true, spectral}, rng),
      gamma1(parameter(Tensor({1, hidden, 1, 1}, 1.0))),
      beta1(parameter(Tensor({1, hidden, 1, 1}, 0.0))),
      gamma2(parameter(Tensor({1, channels, 1, 1}, 1.0))),
      beta2(parameter(Tensor({1, channels, 1, 1}, 0.0))) {
  bn1.running_mean = Tensor({1, hidden, 1, 1}, 0.0);
  bn1.running_var = Tensor({1, hidden, 1, 1}, 1.0);
  bn2.running_mean = Tensor({1, channels, 1, 1}, 0.0);
  bn2.running_var = Tensor({1, channels, 1, 1}, 1.0);
}

Var LearnableBlock::forward(const Var& x, bool training) {
  Var h = elu(batch_norm(conv1.forward(x, training), gamma1, beta1, bn1, training));
  return elu(batch_norm(conv2.forward(h, training), gamma2, beta2, bn2, training));
}

void LearnableBlock::collect(const std::string& prefix, ParamRegistry& r) {
  conv1.collect(prefix + ".conv1", r);
  conv2.collect(prefix + ".conv2", r);
  r.add(prefix + ".bn1.gamma", gamma1);
  r.add(prefix + ".bn1.beta", beta1);
  r.add(prefix + ".bn2.gamma", gamma2);
  r.add(prefix + ".bn2.beta", beta2);
  r.add_buffer(prefix + ".bn1.running_mean", &bn1.running_mean);
  r.add_buffer(prefix + ".bn1.running_var", &bn1.running_var);
  r.add_buffer(prefix + ".bn2.running_mean", &bn2.running_mean);
  r.add_buffer(prefix + ".bn2.running_var", &bn2.running_var);
}

int RwsaConfig::attention_hidden() const { return std::max(4, channels / std::max(1, reduction)); }

Rwsa::Rwsa(const RwsaConfig& c, Rng& rng)
    : cfg(c),
      gate_background(c.channels, c.attention_hidden(), rng),
      gate_foreground1(c.channels, c.attention_hidden(), rng),
      gate_foreground2(c.channels, c.attention_hidden(), rng),
      learnable(c.channels, c.lb_channels, c.spectral, rng),
      fusion({2 * c.channels, c.channels, 1, 1, 0, true, c.spectral}, rng) {
  if (c.channels < 4) throw std::invalid_argument("rwsa: channels must be at least 4");
}

Var Rwsa::forward(const Var& x, const Tensor& mask, bool training, RwsaTrace* trace) {
  const Shape& xs = x->shape();
  if (mask.shape.n != xs.n || mask.shape.c != 1)
    throw std::invalid_argument("rwsa: mask " + mask.shape.str() + " incompatible with features " + xs.str());
  Var m = constant(resize_mask_nearest(mask, xs.h, xs.w));
  Var fg = mul(m, add(learnable.forward(gate_foreground1.forward(x), training), gate_foreground2.forward(x)));
  Var bg = mul(one_minus(m), gate_background.forward(x));
  if (trace) *trace = {fg, bg};
  return fusion.forward(concat_channels({add(fg, bg), x}), training);
}

void Rwsa::collect(const std::string& prefix, ParamRegistry& r) {
  gate_background.collect(prefix + ".g_b", r);
  gate_foreground1.collect(prefix + ".g_f1", r);
  gate_foreground2.collect(prefix + ".g_f2", r);
  learnable.collect(prefix + ".lb", r);
  fusion.collect(prefix + ".ffb", r);
}

Tensor resize_mask_nearest(const Tensor& mask, int height, int width) {
  const Shape& s = mask.shape;
  if (s.h == height && s.w == width) return mask;
  Tensor out({s.n, s.c, height, width});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < height; ++y) {
        const int sy = std::min(s.h - 1, static_cast<int>((static_cast<long>(y) * s.h) / height));
        for (int x = 0; x < width; ++x) {
          const int sx = std::min(s.w - 1, static_cast<int>((static_cast<long>(x) * s.w) / width));
          out.at(n, c, y, x) = mask.at(n, c, sy, sx);
        }
      }
  return out;
}

}  // namespace safepaint::nn
