#include "safepaint/nn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "safepaint/rng.hpp"

namespace safepaint::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

int broadcast_dim(int a, int b, const char* op) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw std::invalid_argument(std::string(op) + ": shapes are not broadcast-compatible");
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  return {broadcast_dim(a.n, b.n, op), broadcast_dim(a.c, b.c, op), broadcast_dim(a.h, b.h, op),
          broadcast_dim(a.w, b.w, op)};
}

struct Strides {
  size_t n, c, h, w;
};

Strides broadcast_strides(const Shape& s) {
  return {s.n == 1 ? 0 : static_cast<size_t>(s.c) * s.h * s.w, s.c == 1 ? 0 : static_cast<size_t>(s.h) * s.w,
          s.h == 1 ? 0 : static_cast<size_t>(s.w), s.w == 1 ? size_t{0} : size_t{1}};
}

// Calls f(out_index, a_index, b_index) over the broadcast output.
template <class F>
void broadcast_loop(const Shape& o, const Shape& a, const Shape& b, F&& f) {
  if (a == o && b == o) {
    for (size_t i = 0; i < o.numel(); ++i) f(i, i, i);
    return;
  }
  const Strides sa = broadcast_strides(a), sb = broadcast_strides(b);
  size_t io = 0;
  for (int n = 0; n < o.n; ++n)
    for (int c = 0; c < o.c; ++c)
      for (int y = 0; y < o.h; ++y) {
        const size_t ra = n * sa.n + c * sa.c + y * sa.h;
        const size_t rb = n * sb.n + c * sb.c + y * sb.h;
        for (int x = 0; x < o.w; ++x, ++io) f(io, ra + x * sa.w, rb + x * sb.w);
      }
}

template <class Fwd, class Dfdx>
Var unary(const Var& x, Fwd fwd, Dfdx dfdx) {
  Tensor out(x->shape());
  for (size_t i = 0; i < out.numel(); ++i) out.data[i] = fwd(x->value.data[i]);
  return make_node(std::move(out), {x}, [x, dfdx](Node& self) {
    if (!x->requires_grad) return;
    Tensor g(x->shape());
    for (size_t i = 0; i < g.numel(); ++i)
      g.data[i] = self.grad.data[i] * dfdx(x->value.data[i], self.value.data[i]);
    x->accumulate(g);
  });
}

void im2col(const double* x, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, double* col) {
  const size_t P = static_cast<size_t>(Ho) * Wo;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + ((static_cast<size_t>(c) * k + ky) * k + kx) * P;
        const double* plane = x + static_cast<size_t>(c) * H * W;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          double* dst = row + static_cast<size_t>(oy) * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + Wo, 0.0);
            continue;
          }
          const double* src = plane + static_cast<size_t>(iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0;
          }
        }
      }
}

void col2im(const double* col, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, double* x) {
  const size_t P = static_cast<size_t>(Ho) * Wo;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col + ((static_cast<size_t>(c) * k + ky) * k + kx) * P;
        double* plane = x + static_cast<size_t>(c) * H * W;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          const double* src = row + static_cast<size_t>(oy) * Wo;
          double* dst = plane + static_cast<size_t>(iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  const Shape o = broadcast_shape(a->shape(), b->shape(), "add");
  Tensor out(o);
  broadcast_loop(o, a->shape(), b->shape(),
                 [&](size_t io, size_t ia, size_t ib) { out.data[io] = a->value.data[ia] + b->value.data[ib]; });
  return make_node(std::move(out), {a, b}, [a, b](Node& self) {
    const Shape& o = self.shape();
    if (a->requires_grad) {
      double* ga = a->grad_data();
      broadcast_loop(o, a->shape(), b->shape(), [&](size_t io, size_t ia, size_t) { ga[ia] += self.grad.data[io]; });
    }
    if (b->requires_grad) {
      double* gb = b->grad_data();
      broadcast_loop(o, a->shape(), b->shape(), [&](size_t io, size_t, size_t ib) { gb[ib] += self.grad.data[io]; });
    }
  });
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var mul(const Var& a, const Var& b) {
  const Shape o = broadcast_shape(a->shape(), b->shape(), "mul");
  Tensor out(o);
  broadcast_loop(o, a->shape(), b->shape(),
                 [&](size_t io, size_t ia, size_t ib) { out.data[io] = a->value.data[ia] * b->value.data[ib]; });
  return make_node(std::move(out), {a, b}, [a, b](Node& self) {
    const Shape& o = self.shape();
    if (a->requires_grad) {
      double* ga = a->grad_data();
      broadcast_loop(o, a->shape(), b->shape(),
                     [&](size_t io, size_t ia, size_t ib) { ga[ia] += self.grad.data[io] * b->value.data[ib]; });
    }
    if (b->requires_grad) {
      double* gb = b->grad_data();
      broadcast_loop(o, a->shape(), b->shape(),
                     [&](size_t io, size_t ia, size_t ib) { gb[ib] += self.grad.data[io] * a->value.data[ia]; });
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var one_minus(const Var& a) {
  return unary(a, [](double v) { return 1.0 - v; }, [](double, double) { return -1.0; });
}

Var relu(const Var& x) {
  return unary(x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0 ? v : slope * v; },
      [slope](double v, double) { return v > 0 ? 1.0 : slope; });
}

Var elu(const Var& x, double alpha) {
  return unary(
      x, [alpha](double v) { return v > 0 ? v : alpha * std::expm1(v); },
      [alpha](double v, double y) { return v > 0 ? 1.0 : y + alpha; });
}

Var sigmoid(const Var& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var abs(const Var& x) {
  return unary(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Shape& xs = x->shape();
  const Shape& ws = weight->shape();
  if (ws.c != xs.c || ws.h != ws.w)
    throw std::invalid_argument("conv2d: weight " + ws.str() + " does not match input " + xs.str());
  const int k = ws.h, cout = ws.n;
  const int ho = (xs.h + 2 * pad - k) / stride + 1;
  const int wo = (xs.w + 2 * pad - k) / stride + 1;
  if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: kernel larger than padded input");
  const int K = xs.c * k * k;
  const size_t P = static_cast<size_t>(ho) * wo;
  const bool direct = (k == 1 && stride == 1 && pad == 0);

  Tensor out({xs.n, cout, ho, wo});
  std::vector<double> col(direct ? 0 : static_cast<size_t>(K) * P);
  MapConstMat wm(weight->value.data.data(), cout, K);
  for (int n = 0; n < xs.n; ++n) {
    const double* xn = x->value.data.data() + static_cast<size_t>(n) * xs.c * xs.plane();
    if (!direct) im2col(xn, xs.c, xs.h, xs.w, k, stride, pad, ho, wo, col.data());
    MapConstMat cm(direct ? xn : col.data(), K, P);
    MapMat ym(out.data.data() + static_cast<size_t>(n) * cout * P, cout, P);
    ym.noalias() = wm * cm;
    if (bias)
      for (int o = 0; o < cout; ++o) ym.row(o).array() += bias->value.data[o];
  }

  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_node(std::move(out), std::move(parents), [x, weight, bias, stride, pad, k, ho, wo, K, P, direct](Node& self) {
    const Shape& xs = x->shape();
    const int cout = weight->shape().n;
    MapConstMat wm(weight->value.data.data(), cout, K);
    std::vector<double> col(direct ? 0 : static_cast<size_t>(K) * P);
    std::vector<double> gcol(direct ? 0 : static_cast<size_t>(K) * P);
    double* gw = weight->requires_grad ? weight->grad_data() : nullptr;
    double* gx = x->requires_grad ? x->grad_data() : nullptr;
    for (int n = 0; n < xs.n; ++n) {
      const size_t xoff = static_cast<size_t>(n) * xs.c * xs.plane();
      MapConstMat gy(self.grad.data.data() + static_cast<size_t>(n) * cout * P, cout, P);
      if (gw) {
        const double* xn = x->value.data.data() + xoff;
        if (!direct) im2col(xn, xs.c, xs.h, xs.w, k, stride, pad, ho, wo, col.data());
        MapConstMat cm(direct ? xn : col.data(), K, P);
        MapMat(gw, cout, K).noalias() += gy * cm.transpose();
      }
      if (gx) {
        if (direct) {
          MapMat(gx + xoff, K, P).noalias() += wm.transpose() * gy;
        } else {
          MapMat(gcol.data(), K, P).noalias() = wm.transpose() * gy;
          col2im(gcol.data(), xs.c, xs.h, xs.w, k, stride, pad, ho, wo, gx + xoff);
        }
      }
    }
    if (bias && bias->requires_grad) {
      double* gb = bias->grad_data();
      for (int n = 0; n < xs.n; ++n)
        for (int o = 0; o < cout; ++o) {
          const double* g = self.grad.data.data() + (static_cast<size_t>(n) * cout + o) * P;
          double s = 0;
          for (size_t p = 0; p < P; ++p) s += g[p];
          gb[o] += s;
        }
    }
  });
}

Var upsample_nearest2x(const Var& x) {
  const Shape& s = x->shape();
  Tensor out({s.n, s.c, s.h * 2, s.w * 2});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h * 2; ++y)
        for (int xx = 0; xx < s.w * 2; ++xx) out.at(n, c, y, xx) = x->value.at(n, c, y / 2, xx / 2);
  return make_node(std::move(out), {x}, [x](Node& self) {
    const Shape& s = x->shape();
    double* g = x->grad_data();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h * 2; ++y)
          for (int xx = 0; xx < s.w * 2; ++xx) g[x->value.index(n, c, y / 2, xx / 2)] += self.grad.at(n, c, y, xx);
  });
}

Var avg_pool2x(const Var& x) {
  const Shape& s = x->shape();
  if (s.h % 2 || s.w % 2) throw std::invalid_argument("avg_pool2x: spatial extent must be even");
  Tensor out({s.n, s.c, s.h / 2, s.w / 2});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h / 2; ++y)
        for (int xx = 0; xx < s.w / 2; ++xx)
          out.at(n, c, y, xx) = 0.25 * (x->value.at(n, c, 2 * y, 2 * xx) + x->value.at(n, c, 2 * y, 2 * xx + 1) +
                                        x->value.at(n, c, 2 * y + 1, 2 * xx) + x->value.at(n, c, 2 * y + 1, 2 * xx + 1));
  return make_node(std::move(out), {x}, [x](Node& self) {
    const Shape& s = x->shape();
    double* g = x->grad_data();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y)
          for (int xx = 0; xx < s.w; ++xx) g[x->value.index(n, c, y, xx)] += 0.25 * self.grad.at(n, c, y / 2, xx / 2);
  });
}

Var sum_spatial(const Var& x) {
  const Shape& s = x->shape();
  Tensor out({s.n, s.c, 1, 1});
  const size_t plane = s.plane();
  for (size_t i = 0; i < out.numel(); ++i) {
    double acc = 0;
    for (size_t p = 0; p < plane; ++p) acc += x->value.data[i * plane + p];
    out.data[i] = acc;
  }
  return make_node(std::move(out), {x}, [x](Node& self) {
    const size_t plane = x->shape().plane();
    double* g = x->grad_data();
    for (size_t i = 0; i < self.value.numel(); ++i)
      for (size_t p = 0; p < plane; ++p) g[i * plane + p] += self.grad.data[i];
  });
}

Var global_avg_pool(const Var& x) { return scale(sum_spatial(x), 1.0 / static_cast<double>(x->shape().plane())); }

Var global_max_pool(const Var& x) {
  const Shape& s = x->shape();
  Tensor out({s.n, s.c, 1, 1});
  const size_t plane = s.plane();
  std::vector<size_t> arg(out.numel());
  for (size_t i = 0; i < out.numel(); ++i) {
    const double* p = x->value.data.data() + i * plane;
    const size_t best = static_cast<size_t>(std::max_element(p, p + plane) - p);
    arg[i] = i * plane + best;
    out.data[i] = p[best];
  }
  return make_node(std::move(out), {x}, [x, arg = std::move(arg)](Node& self) {
    double* g = x->grad_data();
    for (size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad.data[i];
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: no inputs");
  Shape o = xs.front()->shape();
  o.c = 0;
  for (const auto& v : xs) {
    const Shape& s = v->shape();
    if (s.n != o.n || s.h != o.h || s.w != o.w)
      throw std::invalid_argument("concat_channels: incompatible shape " + s.str());
    o.c += s.c;
  }
  Tensor out(o);
  const size_t plane = o.plane();
  for (int n = 0; n < o.n; ++n) {
    int c0 = 0;
    for (const auto& v : xs) {
      const size_t len = static_cast<size_t>(v->shape().c) * plane;
      std::copy_n(v->value.data.begin() + n * len, len, out.data.begin() + (static_cast<size_t>(n) * o.c + c0) * plane);
      c0 += v->shape().c;
    }
  }
  return make_node(std::move(out), xs, [xs](Node& self) {
    const Shape& o = self.shape();
    const size_t plane = o.plane();
    for (int n = 0; n < o.n; ++n) {
      int c0 = 0;
      for (const auto& v : xs) {
        const size_t len = static_cast<size_t>(v->shape().c) * plane;
        if (v->requires_grad) {
          double* g = v->grad_data() + n * len;
          const double* src = self.grad.data.data() + (static_cast<size_t>(n) * o.c + c0) * plane;
          for (size_t i = 0; i < len; ++i) g[i] += src[i];
        }
        c0 += v->shape().c;
      }
    }
  });
}

Var tile_spatial(const Var& v, int h, int w) {
  const Shape& s = v->shape();
  if (s.h != 1 || s.w != 1) throw std::invalid_argument("tile_spatial: expects an (N,C,1,1) input");
  return mul(v, constant(Tensor({s.n, 1, h, w}, 1.0)));
}

Var sum_all(const Var& x) {
  double acc = 0;
  for (double v : x->value.data) acc += v;
  return make_node(Tensor({1, 1, 1, 1}, acc), {x}, [x](Node& self) {
    double* g = x->grad_data();
    const double s = self.grad.data[0];
    for (size_t i = 0; i < x->value.numel(); ++i) g[i] += s;
  });
}

Var mean_all(const Var& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x->value.numel())); }

Var l2_norm_per_sample(const Var& x) {
  const Shape& s = x->shape();
  const size_t len = static_cast<size_t>(s.c) * s.plane();
  Tensor out({s.n, 1, 1, 1});
  for (int n = 0; n < s.n; ++n) {
    double acc = 0;
    for (size_t i = 0; i < len; ++i) acc += x->value.data[n * len + i] * x->value.data[n * len + i];
    out.data[n] = std::sqrt(acc);
  }
  return make_node(std::move(out), {x}, [x, len](Node& self) {
    double* g = x->grad_data();
    for (int n = 0; n < x->shape().n; ++n) {
      const double norm = self.value.data[n];
      if (norm <= 0) continue;
      const double k = self.grad.data[n] / norm;
      for (size_t i = 0; i < len; ++i) g[n * len + i] += k * x->value.data[n * len + i];
    }
  });
}

Var gram(const Var& x) {
  const Shape& s = x->shape();
  const size_t P = s.plane();
  const double norm = 1.0 / (static_cast<double>(s.c) * static_cast<double>(P));
  Tensor out({s.n, 1, s.c, s.c});
  for (int n = 0; n < s.n; ++n) {
    MapConstMat f(x->value.data.data() + static_cast<size_t>(n) * s.c * P, s.c, P);
    MapMat(out.data.data() + static_cast<size_t>(n) * s.c * s.c, s.c, s.c).noalias() = norm * (f * f.transpose());
  }
  return make_node(std::move(out), {x}, [x, norm](Node& self) {
    const Shape& s = x->shape();
    const size_t P = s.plane();
    double* g = x->grad_data();
    for (int n = 0; n < s.n; ++n) {
      MapConstMat f(x->value.data.data() + static_cast<size_t>(n) * s.c * P, s.c, P);
      MapConstMat gg(self.grad.data.data() + static_cast<size_t>(n) * s.c * s.c, s.c, s.c);
      RowMat sym = gg + gg.transpose();
      MapMat(g + static_cast<size_t>(n) * s.c * P, s.c, P).noalias() += norm * (sym * f);
    }
  });
}

Var bce_with_logits(const Var& logits, double target) {
  const size_t count = logits->value.numel();
  double acc = 0;
  for (double z : logits->value.data) acc += std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::fabs(z)));
  return make_node(Tensor({1, 1, 1, 1}, acc / count), {logits}, [logits, target, count](Node& self) {
    double* g = logits->grad_data();
    const double k = self.grad.data[0] / static_cast<double>(count);
    for (size_t i = 0; i < count; ++i) {
      const double z = logits->value.data[i];
      const double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      g[i] += k * (sig - target);
    }
  });
}

Var bce_with_logits(const Var& logits, const Var& target) {
  if (!(logits->shape() == target->shape())) throw std::invalid_argument("bce_with_logits: target shape differs");
  const size_t count = logits->value.numel();
  double acc = 0;
  for (size_t i = 0; i < count; ++i) {
    const double z = logits->value.data[i];
    acc += std::max(z, 0.0) - z * target->value.data[i] + std::log1p(std::exp(-std::fabs(z)));
  }
  return make_node(Tensor({1, 1, 1, 1}, acc / count), {logits}, [logits, target, count](Node& self) {
    double* g = logits->grad_data();
    const double k = self.grad.data[0] / static_cast<double>(count);
    for (size_t i = 0; i < count; ++i) {
      const double z = logits->value.data[i];
      const double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      g[i] += k * (sig - target->value.data[i]);
    }
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, bool training) {
  const Shape& s = x->shape();
  const size_t plane = s.plane();
  const double m = static_cast<double>(s.n) * plane;
  if (state.running_mean.empty()) {
    state.running_mean = Tensor({1, s.c, 1, 1}, 0.0);
    state.running_var = Tensor({1, s.c, 1, 1}, 1.0);
  }
  std::vector<double> mean(s.c), invstd(s.c);
  for (int c = 0; c < s.c; ++c) {
    if (training) {
      double mu = 0;
      for (int n = 0; n < s.n; ++n)
        for (size_t p = 0; p < plane; ++p) mu += x->value.data[(static_cast<size_t>(n) * s.c + c) * plane + p];
      mu /= m;
      double var = 0;
      for (int n = 0; n < s.n; ++n)
        for (size_t p = 0; p < plane; ++p) {
          const double d = x->value.data[(static_cast<size_t>(n) * s.c + c) * plane + p] - mu;
          var += d * d;
        }
      var /= m;
      mean[c] = mu;
      invstd[c] = 1.0 / std::sqrt(var + state.eps);
      const double unbiased = m > 1 ? var * m / (m - 1) : var;
      state.running_mean.data[c] = (1 - state.momentum) * state.running_mean.data[c] + state.momentum * mu;
      state.running_var.data[c] = (1 - state.momentum) * state.running_var.data[c] + state.momentum * unbiased;
    } else {
      mean[c] = state.running_mean.data[c];
      invstd[c] = 1.0 / std::sqrt(state.running_var.data[c] + state.eps);
    }
  }
  Tensor xhat(s), out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (size_t p = 0; p < plane; ++p) {
        const size_t i = (static_cast<size_t>(n) * s.c + c) * plane + p;
        xhat.data[i] = (x->value.data[i] - mean[c]) * invstd[c];
        out.data[i] = gamma->value.data[c] * xhat.data[i] + beta->value.data[c];
      }
  return make_node(std::move(out), {x, gamma, beta},
                   [x, gamma, beta, xhat = std::move(xhat), invstd = std::move(invstd), training, m](Node& self) {
                     const Shape& s = x->shape();
                     const size_t plane = s.plane();
                     std::vector<double> sum_g(s.c, 0.0), sum_gx(s.c, 0.0);
                     for (int n = 0; n < s.n; ++n)
                       for (int c = 0; c < s.c; ++c)
                         for (size_t p = 0; p < plane; ++p) {
                           const size_t i = (static_cast<size_t>(n) * s.c + c) * plane + p;
                           sum_g[c] += self.grad.data[i];
                           sum_gx[c] += self.grad.data[i] * xhat.data[i];
                         }
                     if (gamma->requires_grad) {
                       double* gg = gamma->grad_data();
                       for (int c = 0; c < s.c; ++c) gg[c] += sum_gx[c];
                     }
                     if (beta->requires_grad) {
                       double* gb = beta->grad_data();
                       for (int c = 0; c < s.c; ++c) gb[c] += sum_g[c];
                     }
                     if (!x->requires_grad) return;
                     double* gx = x->grad_data();
                     for (int n = 0; n < s.n; ++n)
                       for (int c = 0; c < s.c; ++c) {
                         const double gam = gamma->value.data[c];
                         for (size_t p = 0; p < plane; ++p) {
                           const size_t i = (static_cast<size_t>(n) * s.c + c) * plane + p;
                           if (training) {
                             gx[i] += gam * invstd[c] / m *
                                      (m * self.grad.data[i] - sum_g[c] - xhat.data[i] * sum_gx[c]);
                           } else {
                             gx[i] += gam * invstd[c] * self.grad.data[i];
                           }
                         }
                       }
                   });
}

Var instance_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Shape& s = x->shape();
  const size_t plane = s.plane();
  const double m = static_cast<double>(plane);
  Tensor xhat(s), out(s);
  std::vector<double> invstd(static_cast<size_t>(s.n) * s.c);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const size_t base = (static_cast<size_t>(n) * s.c + c) * plane;
      double mu = 0;
      for (size_t p = 0; p < plane; ++p) mu += x->value.data[base + p];
      mu /= m;
      double var = 0;
      for (size_t p = 0; p < plane; ++p) {
        const double d = x->value.data[base + p] - mu;
        var += d * d;
      }
      const double is = 1.0 / std::sqrt(var / m + eps);
      invstd[static_cast<size_t>(n) * s.c + c] = is;
      for (size_t p = 0; p < plane; ++p) {
        xhat.data[base + p] = (x->value.data[base + p] - mu) * is;
        out.data[base + p] = gamma->value.data[c] * xhat.data[base + p] + beta->value.data[c];
      }
    }
  return make_node(std::move(out), {x, gamma, beta},
                   [x, gamma, beta, xhat = std::move(xhat), invstd = std::move(invstd), m](Node& self) {
                     const Shape& s = x->shape();
                     const size_t plane = s.plane();
                     double* gg = gamma->requires_grad ? gamma->grad_data() : nullptr;
                     double* gb = beta->requires_grad ? beta->grad_data() : nullptr;
                     double* gx = x->requires_grad ? x->grad_data() : nullptr;
                     for (int n = 0; n < s.n; ++n)
                       for (int c = 0; c < s.c; ++c) {
                         const size_t base = (static_cast<size_t>(n) * s.c + c) * plane;
                         double sum_g = 0, sum_gx = 0;
                         for (size_t p = 0; p < plane; ++p) {
                           sum_g += self.grad.data[base + p];
                           sum_gx += self.grad.data[base + p] * xhat.data[base + p];
                         }
                         if (gg) gg[c] += sum_gx;
                         if (gb) gb[c] += sum_g;
                         if (!gx) continue;
                         const double k = gamma->value.data[c] * invstd[static_cast<size_t>(n) * s.c + c] / m;
                         for (size_t p = 0; p < plane; ++p)
                           gx[base + p] += k * (m * self.grad.data[base + p] - sum_g - xhat.data[base + p] * sum_gx);
                       }
                   });
}

double spectral_sigma(const Tensor& weight, SpectralState& state, int iterations) {
  const int rows = weight.shape.n;
  const int cols = static_cast<int>(weight.numel() / rows);
  MapConstMat w(weight.data.data(), rows, cols);
  if (state.u.empty()) {
    // Fixed pseudo-random start; a uniform vector can be orthogonal to the
    // leading singular direction.
    state.u = Tensor({rows, 1, 1, 1});
    Rng rng(derive_seed(static_cast<std::uint64_t>(rows), static_cast<std::uint64_t>(cols)));
    double norm = 0;
    for (double& e : state.u.data) {
      e = rng.normal();
      norm += e * e;
    }
    for (double& e : state.u.data) e /= std::sqrt(norm);
  }
  if (state.v.empty()) state.v = Tensor({cols, 1, 1, 1}, 0.0);
  Eigen::Map<Eigen::VectorXd> u(state.u.data.data(), rows);
  Eigen::Map<Eigen::VectorXd> v(state.v.data.data(), cols);
  constexpr double kTiny = 1e-12;
  for (int it = 0; it < iterations; ++it) {
    v = w.transpose() * u;
    v /= std::max(v.norm(), kTiny);
    u = w * v;
    u /= std::max(u.norm(), kTiny);
  }
  return std::max(u.dot(w * v), kTiny);
}

Var spectral_normalize(const Var& weight, SpectralState& state, int iterations) {
  const double sigma = spectral_sigma(weight->value, state, iterations);
  Tensor out = weight->value;
  for (double& v : out.data) v /= sigma;
  Tensor u = state.u, v = state.v;
  return make_node(std::move(out), {weight}, [weight, sigma, u = std::move(u), v = std::move(v)](Node& self) {
    const size_t rows = u.numel(), cols = v.numel();
    double dot = 0;
    for (size_t i = 0; i < self.grad.numel(); ++i) dot += self.grad.data[i] * weight->value.data[i];
    double* g = weight->grad_data();
    const double k = dot / (sigma * sigma);
    for (size_t r = 0; r < rows; ++r)
      for (size_t c = 0; c < cols; ++c) {
        const size_t i = r * cols + c;
        g[i] += self.grad.data[i] / sigma - k * u.data[r] * v.data[c];
      }
  });
}

}  // namespace safepaint::nn
