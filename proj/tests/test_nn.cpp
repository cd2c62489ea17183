#include <doctest.h>

#include <Eigen/SVD>

#include "grad_check.hpp"
#include "oracles.hpp"
#include "safepaint/nn/layers.hpp"

using namespace safepaint;
using namespace safepaint::nn;
using oracle::grad_check;
using oracle::random_tensor;

namespace {

// Values kept away from the kinks of relu/abs/max so finite differences are smooth.
Tensor away_from_zero(Shape s, Rng& rng) {
  Tensor t(s);
  for (double& v : t.data) v = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.1, 1.0);
  return t;
}

}  // namespace

TEST_CASE("elementwise and activation gradients") {
  Rng rng(1);
  const Tensor x = away_from_zero({2, 3, 4, 5}, rng);
  const Var other = constant(random_tensor({2, 3, 4, 5}, rng));
  const Var row = constant(random_tensor({1, 3, 1, 1}, rng));
  CHECK(grad_check([&](const Var& v) { return add(v, other); }, x) < 1e-6);
  CHECK(grad_check([&](const Var& v) { return sub(other, v); }, x) < 1e-6);
  CHECK(grad_check([&](const Var& v) { return mul(v, other); }, x) < 1e-6);
  CHECK(grad_check([&](const Var& v) { return mul(v, row); }, x) < 1e-6);
  CHECK(grad_check([&](const Var& v) { return mul(v, v); }, x) < 1e-6);
  CHECK(grad_check([&](const Var& v) { return scale(one_minus(v), 3.0); }, x) < 1e-6);
  CHECK(grad_check([](const Var& v) { return relu(v); }, x) < 1e-6);
  CHECK(grad_check([](const Var& v) { return leaky_relu(v, 0.2); }, x) < 1e-6);
  CHECK(grad_check([](const Var& v) { return elu(v); }, x) < 1e-6);
  CHECK(grad_check([](const Var& v) { return sigmoid(v); }, x) < 1e-6);
  CHECK(grad_check([](const Var& v) { return nn::tanh(v); }, x) < 1e-6);
  CHECK(grad_check([](const Var& v) { return nn::abs(v); }, x) < 1e-6);
}

TEST_CASE("broadcast gradient flows into the small operand") {
  Rng rng(2);
  const Var big = constant(random_tensor({2, 3, 4, 4}, rng));
  CHECK(grad_check([&](const Var& v) { return mul(big, v); }, random_tensor({1, 3, 1, 1}, rng)) < 1e-6);
  CHECK(grad_check([&](const Var& v) { return add(big, v); }, random_tensor({2, 1, 4, 4}, rng)) < 1e-6);
}

TEST_CASE("conv2d matches direct loops and has correct gradients") {
  Rng rng(3);
  for (auto [k, stride, pad] : {std::tuple{3, 1, 1}, std::tuple{4, 2, 1}, std::tuple{1, 1, 0}, std::tuple{5, 1, 2}}) {
    const Tensor x = random_tensor({2, 3, 9, 8}, rng);
    const Tensor w = random_tensor({4, 3, k, k}, rng);
    const Tensor b = random_tensor({1, 4, 1, 1}, rng);
    NoGradGuard guard;
    const Var y = conv2d(constant(x), constant(w), constant(b), stride, pad);
    const int Ho = (9 + 2 * pad - k) / stride + 1, Wo = (8 + 2 * pad - k) / stride + 1;
    REQUIRE(y->shape() == Shape{2, 4, Ho, Wo});
    double worst = 0;
    for (int n = 0; n < 2; ++n)
      for (int o = 0; o < 4; ++o)
        for (int oy = 0; oy < Ho; ++oy)
          for (int ox = 0; ox < Wo; ++ox) {
            double acc = b.data[o];
            for (int c = 0; c < 3; ++c)
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                  const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                  if (iy >= 0 && iy < 9 && ix >= 0 && ix < 8) acc += w.at(o, c, ky, kx) * x.at(n, c, iy, ix);
                }
            worst = std::max(worst, std::fabs(acc - y->value.at(n, o, oy, ox)));
          }
    CHECK(worst < 1e-12);
  }
  const Tensor x = random_tensor({1, 2, 6, 6}, rng);
  const Var w = constant(random_tensor({3, 2, 3, 3}, rng));
  const Var b = constant(random_tensor({1, 3, 1, 1}, rng));
  CHECK(grad_check([&](const Var& v) { return conv2d(v, w, b, 2, 1); }, x) < 1e-6);
  const Var xc = constant(x);
  CHECK(grad_check([&](const Var& v) { return conv2d(xc, v, b, 1, 1); }, random_tensor({3, 2, 3, 3}, rng)) < 1e-6);
  CHECK(grad_check([&](const Var& v) { return conv2d(xc, w, v, 1, 1); }, random_tensor({1, 3, 1, 1}, rng)) < 1e-6);
}

TEST_CASE("resampling, pooling and reduction gradients") {
  Rng rng(4);
  const Tensor x = random_tensor({2, 3, 4, 6}, rng);
  CHECK(grad_check([](const Var& v) { return upsample_nearest2x(v); }, x) < 1e-6);
  CHECK(grad_check([](const Var& v) { return avg_pool2x(v); }, x) < 1e-6);
  CHECK(grad_check([](const Var& v) { return global_avg_pool(v); }, x) < 1e-6);
  CHECK(grad_check([](const Var& v) { return global_max_pool(v); }, x) < 1e-6);
  CHECK(grad_check([](const Var& v) { return sum_spatial(v); }, x) < 1e-6);
  CHECK(grad_check([](const Var& v) { return mean_all(v); }, x) < 1e-6);
  CHECK(grad_check([](const Var& v) { return l2_norm_per_sample(v); }, x) < 1e-6);
  CHECK(grad_check([](const Var& v) { return gram(v); }, x) < 1e-6);
  CHECK(grad_check([](const Var& v) { return tile_spatial(v, 3, 2); }, random_tensor({2, 4, 1, 1}, rng)) < 1e-6);
  const Var other = constant(random_tensor({2, 2, 4, 6}, rng));
  CHECK(grad_check([&](const Var& v) { return concat_channels({other, v}); }, x) < 1e-6);
  CHECK(grad_check([](const Var& v) { return bce_with_logits(v, 1.0); }, x) < 1e-6);
  const Var target = constant(random_tensor(x.shape, rng, 0, 1));
  CHECK(grad_check([&](const Var& v) { return bce_with_logits(v, target); }, x) < 1e-6);
}

TEST_CASE("gram normalization") {
  Tensor x({1, 2, 1, 2});
  x.data = {1, 2, 3, 4};
  NoGradGuard guard;
  const Var g = gram(constant(x));
  REQUIRE(g->shape() == Shape{1, 1, 2, 2});
  CHECK(g->value.data[0] == doctest::Approx(5.0 / 4));
  CHECK(g->value.data[1] == doctest::Approx(11.0 / 4));
  CHECK(g->value.data[2] == doctest::Approx(11.0 / 4));
  CHECK(g->value.data[3] == doctest::Approx(25.0 / 4));
}

TEST_CASE("bce_with_logits values") {
  Tensor z({1, 1, 1, 2});
  z.data = {0.0, 2.0};
  NoGradGuard guard;
  CHECK(bce_with_logits(constant(z), 1.0)->value.item() ==
        doctest::Approx((std::log(2.0) + std::log1p(std::exp(-2.0))) / 2));
  CHECK(bce_with_logits(constant(z), 0.0)->value.item() == doctest::Approx((std::log(2.0) + 2 + std::log1p(std::exp(-2.0))) / 2));
}

TEST_CASE("batch norm: batch statistics in training, running statistics in eval") {
  Rng rng(5);
  const Tensor x = random_tensor({3, 2, 4, 4}, rng);
  const Var gamma = constant(random_tensor({1, 2, 1, 1}, rng, 0.5, 1.5));
  const Var beta = constant(random_tensor({1, 2, 1, 1}, rng));
  BatchNormState st;
  Var y;
  {
    NoGradGuard guard;
    y = batch_norm(constant(x), gamma, beta, st, true);
  }
  for (int c = 0; c < 2; ++c) {
    double mean = 0, var = 0;
    for (int n = 0; n < 3; ++n)
      for (int p = 0; p < 16; ++p) mean += x.data[(n * 2 + c) * 16 + p];
    mean /= 48;
    for (int n = 0; n < 3; ++n)
      for (int p = 0; p < 16; ++p) var += std::pow(x.data[(n * 2 + c) * 16 + p] - mean, 2);
    const double biased = var / 48;
    const double expect0 = gamma->value.data[c] * (x.data[c * 16] - mean) / std::sqrt(biased + 1e-5) + beta->value.data[c];
    CHECK(y->value.data[c * 16] == doctest::Approx(expect0).epsilon(1e-12));
    CHECK(st.running_mean.data[c] == doctest::Approx(0.1 * mean));
    CHECK(st.running_var.data[c] == doctest::Approx(0.9 + 0.1 * var / 47));
  }
  BatchNormState frozen;
  frozen.running_mean = Tensor({1, 2, 1, 1}, 0.5);
  frozen.running_var = Tensor({1, 2, 1, 1}, 4.0);
  {
    NoGradGuard guard;
    const Var e = batch_norm(constant(x), gamma, beta, frozen, false);
    CHECK(e->value.data[0] == doctest::Approx(gamma->value.data[0] * (x.data[0] - 0.5) / std::sqrt(4 + 1e-5) + beta->value.data[0]));
  }
  CHECK(frozen.running_mean.data[0] == 0.5);

  BatchNormState s2;
  CHECK(grad_check([&](const Var& v) { return batch_norm(v, gamma, beta, s2, true); }, x) < 1e-6);
  CHECK(grad_check([&](const Var& v) { return batch_norm(constant(x), v, beta, s2, true); }, gamma->value) < 1e-6);
}

TEST_CASE("spectral norm against an exact SVD") {
  Tensor d({2, 2, 1, 1});
  d.data = {3, 0, 0, 1};
  SpectralState st;
  {
    NoGradGuard guard;
    const Var w = spectral_normalize(constant(d), st, 50);
    CHECK(w->value.data[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(w->value.data[3] == doctest::Approx(1.0 / 3).epsilon(1e-9));
    CHECK(std::fabs(w->value.data[1]) < 1e-12);
  }

  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor w = random_tensor({6, 3, 3, 3}, rng);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(w.data.data(), 6, 27);
    const double sigma = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
    SpectralState s;
    CHECK(spectral_sigma(w, s, 2000) == doctest::Approx(sigma).epsilon(1e-6));
    NoGradGuard guard;
    const Var wn = spectral_normalize(constant(w), s, 0);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> mn(wn->value.data.data(), 6, 27);
    CHECK(Eigen::JacobiSVD<Eigen::MatrixXd>(mn).singularValues()(0) <= 1 + 1e-3);

    Tensor scaled = w;
    for (double& v : scaled.data) v *= 7.5;
    SpectralState s2;
    spectral_sigma(scaled, s2, 2000);
    const Var wn2 = spectral_normalize(constant(scaled), s2, 0);
    for (size_t i = 0; i < w.numel(); ++i) CHECK(wn2->value.data[i] == doctest::Approx(wn->value.data[i]).epsilon(1e-9));
  }

  // A rotation is already normalized.
  Tensor rot({2, 2, 1, 1});
  rot.data = {std::cos(0.3), -std::sin(0.3), std::sin(0.3), std::cos(0.3)};
  SpectralState sr;
  {
    NoGradGuard guard;
    const Var r = spectral_normalize(constant(rot), sr, 1);
    for (size_t i = 0; i < 4; ++i) CHECK(std::fabs(r->value.data[i] - rot.data[i]) < 1e-5);
  }

  // Zero weights pass through.
  SpectralState sz;
  {
    NoGradGuard guard;
    const Var z = spectral_normalize(constant(Tensor({3, 2, 1, 1})), sz, 1);
    for (double v : z->value.data) CHECK(v == 0.0);
  }

  // Gradient through sigma with u, v frozen.
  const Tensor w = random_tensor({4, 2, 3, 3}, rng);
  SpectralState sg;
  spectral_sigma(w, sg, 30);
  CHECK(grad_check([&](const Var& v) { return spectral_normalize(v, sg, 0); }, w) < 1e-6);
}

TEST_CASE("partial convolution against the window oracle") {
  Rng rng(8);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int stride = trial % 2 ? 2 : 1;
    const Tensor x = random_tensor({1, 3, 8, 8}, rng);
    Tensor valid({1, 1, 8, 8});
    const double p = rng.uniform(0.1, 0.9);
    for (double& v : valid.data) v = rng.uniform() < p ? 1 : 0;
    const Tensor w = random_tensor({4, 3, 3, 3}, rng);
    const Tensor b = random_tensor({1, 4, 1, 1}, rng);
    NoGradGuard guard;
    const auto got = partial_conv(constant(x), valid, constant(w), constant(b), stride, 1);
    const auto ref = oracle::partial_conv_ref(x, valid, w, b.data, stride, 1);
    REQUIRE(got.features->shape() == ref.out.shape);
    for (size_t i = 0; i < ref.out.numel(); ++i) worst = std::max(worst, std::fabs(got.features->value.data[i] - ref.out.data[i]));
    CHECK(got.mask.data == ref.mask.data);
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("partial convolution special cases") {
  Rng rng(9);
  const Tensor x = random_tensor({1, 2, 6, 6}, rng);
  const Tensor w = random_tensor({3, 2, 3, 3}, rng);
  const Tensor b = random_tensor({1, 3, 1, 1}, rng);
  NoGradGuard guard;

  // All valid, no padding: identical to a plain convolution.
  const auto full = partial_conv(constant(x), Tensor({1, 1, 6, 6}, 1.0), constant(w), constant(b), 1, 0);
  const Var plain = conv2d(constant(x), constant(w), constant(b), 1, 0);
  for (size_t i = 0; i < plain->value.numel(); ++i) CHECK(full.features->value.data[i] == doctest::Approx(plain->value.data[i]));

  // Nothing valid: zero features, zero mask.
  const auto none = partial_conv(constant(x), Tensor({1, 1, 6, 6}, 0.0), constant(w), constant(b), 1, 1);
  for (double v : none.features->value.data) CHECK(v == 0.0);
  for (double v : none.mask.data) CHECK(v == 0.0);

  // Ones kernel, one valid pixel v in the window: 9 v + b.
  Tensor one({1, 1, 5, 5});
  one.at(0, 0, 2, 2) = 0.7;
  Tensor valid({1, 1, 5, 5});
  valid.at(0, 0, 2, 2) = 1;
  const auto single = partial_conv(constant(one), valid, constant(Tensor({1, 1, 3, 3}, 1.0)),
                                   constant(Tensor({1, 1, 1, 1}, 0.25)), 1, 1);
  CHECK(single.features->value.at(0, 0, 2, 2) == doctest::Approx(9 * 0.7 + 0.25));
  CHECK(single.features->value.at(0, 0, 1, 1) == doctest::Approx(9 * 0.7 + 0.25));
  CHECK(single.features->value.at(0, 0, 0, 0) == 0.0);
  CHECK(single.mask.at(0, 0, 0, 0) == 0.0);
}

TEST_CASE("partial convolution gradients") {
  Rng rng(10);
  const Tensor x = random_tensor({1, 2, 6, 6}, rng);
  Tensor valid({1, 1, 6, 6});
  for (double& v : valid.data) v = rng.uniform() < 0.5 ? 1 : 0;
  const Var w = constant(random_tensor({3, 2, 3, 3}, rng));
  const Var b = constant(random_tensor({1, 3, 1, 1}, rng));
  CHECK(grad_check([&](const Var& v) { return partial_conv(v, valid, w, b, 2, 1).features; }, x) < 1e-6);
  CHECK(grad_check([&](const Var& v) { return partial_conv(constant(x), valid, v, b, 1, 1).features; }, w->value) < 1e-6);
}

TEST_CASE("channel attention") {
  Rng rng(11);
  ChannelAttention ca(1, 1, rng);
  ca.w1->value.data = {0.5};
  ca.b1->value.data = {-1.0};
  ca.w2->value.data = {2.0};
  ca.b2->value.data = {0.1};
  NoGradGuard guard;
  const Var x = constant(Tensor({1, 1, 3, 3}, 2.0));
  // descriptor = avg + max = 4; hidden = relu(0.5*4 - 1) = 1; gate = sigmoid(2*1 + 0.1)
  const double gate = 1 / (1 + std::exp(-2.1));
  CHECK(ca.gate(x)->value.item() == doctest::Approx(gate));
  const Var y0 = ca.forward(x);
  for (double v : y0->value.data) CHECK(v == doctest::Approx(2 * gate));

  ChannelAttention wide(8, 4, rng);
  const Var y = constant(random_tensor({2, 8, 5, 5}, rng));
  CHECK(wide.forward(y)->shape() == y->shape());
  for (double& v : wide.b2->value.data) v = 60;
  const Var same = wide.forward(y);
  for (size_t i = 0; i < y->value.numel(); ++i) CHECK(same->value.data[i] == y->value.data[i]);
  CHECK_THROWS(wide.forward(constant(Tensor({1, 4, 2, 2}))));
}

TEST_CASE("channel attention and learnable block gradients") {
  Rng rng(12);
  ChannelAttention ca(6, 4, rng);
  const Tensor x = random_tensor({2, 6, 4, 4}, rng);
  CHECK(grad_check([&](const Var& v) { return ca.forward(v); }, x) < 1e-5);
  LearnableBlock lb(4, 4, false, rng);
  CHECK(grad_check([&](const Var& v) { return lb.forward(v, true); }, random_tensor({2, 4, 5, 5}, rng)) < 1e-5);
}

TEST_CASE("learnable block") {
  Rng rng(13);
  LearnableBlock lb(4, 4, false, rng);
  const Var x = constant(random_tensor({2, 4, 6, 6}, rng));
  NoGradGuard guard;
  CHECK(lb.forward(x, false)->shape() == x->shape());
  CHECK(lb.forward(x, false)->value.data == lb.forward(x, false)->value.data);

  // Zero convolutions and identity statistics leave ELU(beta).
  for (Conv2d* c : {&lb.conv1, &lb.conv2}) {
    for (double& v : c->weight->value.data) v = 0;
    for (double& v : c->bias->value.data) v = 0;
  }
  for (double& v : lb.beta2->value.data) v = -0.4;
  const Var y = lb.forward(x, false);
  for (double v : y->value.data) CHECK(v == doctest::Approx(std::expm1(-0.4)));
}

TEST_CASE("RWSA masking identities") {
  Rng rng(14);
  Rwsa rwsa({8, 16, 8, false}, rng);
  const Var x = constant(random_tensor({2, 8, 6, 6}, rng));
  RwsaTrace trace;
  Tensor mask({2, 1, 12, 12});
  for (double& v : mask.data) v = rng.uniform() < 0.4 ? 1 : 0;
  NoGradGuard guard;
  const Var out = rwsa.forward(x, mask, false, &trace);
  CHECK(out->shape() == x->shape());
  const Tensor small = resize_mask_nearest(mask, 6, 6);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 8; ++c)
      for (int y = 0; y < 6; ++y)
        for (int xx = 0; xx < 6; ++xx) {
          const bool hole = small.at(n, 0, y, xx) != 0;
          if (hole) CHECK(trace.background->value.at(n, c, y, xx) == 0.0);
          else CHECK(trace.foreground->value.at(n, c, y, xx) == 0.0);
        }

  rwsa.forward(x, Tensor({2, 1, 6, 6}, 0.0), false, &trace);
  for (double v : trace.foreground->value.data) CHECK(v == 0.0);
  rwsa.forward(x, Tensor({2, 1, 6, 6}, 1.0), false, &trace);
  for (double v : trace.background->value.data) CHECK(v == 0.0);
}

TEST_CASE("RWSA configured identity partition") {
  Rng rng(15);
  Rwsa rwsa({8, 16, 8, false}, rng);
  for (ChannelAttention* g : {&rwsa.gate_background, &rwsa.gate_foreground2})
    for (double& v : g->b2->value.data) v = 60;  // sigmoid(60) rounds to 1
  for (Conv2d* c : {&rwsa.learnable.conv1, &rwsa.learnable.conv2}) {
    for (double& v : c->weight->value.data) v = 0;
    for (double& v : c->bias->value.data) v = 0;
  }
  const Var x = constant(random_tensor({1, 8, 6, 6}, rng));
  Tensor mask({1, 1, 6, 6});
  for (double& v : mask.data) v = rng.uniform() < 0.5 ? 1 : 0;
  RwsaTrace trace;
  NoGradGuard guard;
  rwsa.forward(x, mask, false, &trace);
  double worst = 0;
  for (size_t i = 0; i < x->value.numel(); ++i)
    worst = std::max(worst, std::fabs(trace.foreground->value.data[i] + trace.background->value.data[i] - x->value.data[i]));
  CHECK(worst < 1e-6);
}

TEST_CASE("RWSA gradients and validation") {
  Rng rng(16);
  Rwsa rwsa({4, 16, 4, false}, rng);
  Tensor mask({2, 1, 4, 4});
  for (double& v : mask.data) v = rng.uniform() < 0.5 ? 1 : 0;
  CHECK(grad_check([&](const Var& v) { return rwsa.forward(v, mask, true); }, random_tensor({2, 4, 4, 4}, rng)) < 1e-5);
  CHECK(RwsaConfig{64, 16, 8, false}.attention_hidden() == 4);
  CHECK(RwsaConfig{128, 16, 8, false}.attention_hidden() == 8);
  CHECK_THROWS(Rwsa({2, 16, 4, false}, rng));
  CHECK_THROWS(rwsa.forward(constant(Tensor({2, 4, 4, 4})), Tensor({1, 1, 4, 4}), false));
}
