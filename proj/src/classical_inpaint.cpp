#include "safepaint/classical_inpaint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace safepaint::classical {

namespace {

// Replicate-padded read of one channel plane.
struct Plane {
  const double* data;
  int h, w;
  double operator()(int y, int x) const {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return data[static_cast<size_t>(y) * w + x];
  }
};

}  // namespace

Image diffuse_inpaint(const Image& img, const Mask& m, const DiffusionConfig& cfg, DiffusionTrace* trace) {
  require_mask_fits(img, m, "diffuse_inpaint");
  if (cfg.delta_v <= 0 || cfg.max_iters < 1 || cfg.eps < 0) throw std::invalid_argument("diffuse_inpaint: invalid config");
  const size_t holes = m.count();
  if (trace) *trace = {};
  if (holes == 0) return img;
  if (holes == m.size()) throw std::invalid_argument("diffuse_inpaint: mask leaves no known pixels");

  const int H = img.height, W = img.width;
  const size_t plane = img.plane_size();
  Image cur = img;
  for (int c = 0; c < img.channels; ++c) {
    double sum = 0;
    for (size_t i = 0; i < plane; ++i)
      if (!m.data[i]) sum += img.data[c * plane + i];
    const double mean = sum / static_cast<double>(plane - holes);
    for (size_t i = 0; i < plane; ++i)
      if (m.data[i]) cur.data[c * plane + i] = mean;
  }

  std::vector<double> lap(plane), update(cur.data.size());
  double previous = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    double residual = 0;
    for (int c = 0; c < img.channels; ++c) {
      const Plane I{cur.data.data() + c * plane, H, W};
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          lap[static_cast<size_t>(y) * W + x] = I(y - 1, x) + I(y + 1, x) + I(y, x - 1) + I(y, x + 1) - 4 * I(y, x);
      const Plane L{lap.data(), H, W};
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const size_t i = static_cast<size_t>(y) * W + x;
          if (!m.data[i]) continue;
          const double lx = 0.5 * (L(y, x + 1) - L(y, x - 1));
          const double ly = 0.5 * (L(y + 1, x) - L(y - 1, x));
          const double ix = 0.5 * (I(y, x + 1) - I(y, x - 1));
          const double iy = 0.5 * (I(y + 1, x) - I(y - 1, x));
          const double g = std::sqrt(ix * ix + iy * iy);
          // Isophote direction: the gradient rotated by 90 degrees.
          double transport = 0;
          if (g > 1e-12) transport = (lx * -iy + ly * ix) / g;
          const double it = transport + lap[i];
          update[c * plane + i] = it;
          residual += std::fabs(it);
        }
    }
    for (int c = 0; c < img.channels; ++c)
      for (size_t i = 0; i < plane; ++i)
        if (m.data[i]) {
          double& v = cur.data[c * plane + i];
          v = std::clamp(v + cfg.delta_v * update[c * plane + i], 0.0, 1.0);
        }
    residual /= static_cast<double>(holes * img.channels);
    if (trace) {
      trace->iterations = iter + 1;
      trace->residuals.push_back(residual);
      if (residual > previous * (1 + 1e-9) + 1e-15) ++trace->residual_increases;
    }
    previous = residual;
    if (residual < cfg.eps) break;
  }
  return cur;
}

Patch extract_patch(const Image& img, int row, int col, int size) {
  if (size < 1 || size % 2 == 0) throw std::invalid_argument("extract_patch: size must be odd and positive");
  const int h = size / 2;
  if (row - h < 0 || col - h < 0 || row + h >= img.height || col + h >= img.width)
    throw std::out_of_range("extract_patch: patch leaves the image");
  Patch p{row, col, size, Image(size, size, img.channels)};
  for (int c = 0; c < img.channels; ++c)
    for (int dy = 0; dy < size; ++dy)
      for (int dx = 0; dx < size; ++dx) p.pixels.at(c, dy, dx) = img.at(c, row - h + dy, col - h + dx);
  return p;
}

double patch_distance(const Patch& a, const Patch& b, const Mask& valid) {
  require_same_shape(a.pixels, b.pixels, "patch_distance");
  require_mask_fits(a.pixels, valid, "patch_distance");
  if (valid.count() == 0) throw std::invalid_argument("patch_distance: no valid pixels");
  double ssd = 0;
  const size_t plane = a.pixels.plane_size();
  for (int c = 0; c < a.pixels.channels; ++c)
    for (size_t i = 0; i < plane; ++i)
      if (valid.data[i]) {
        const double d = a.pixels.data[c * plane + i] - b.pixels.data[c * plane + i];
        ssd += d * d;
      }
  return std::sqrt(ssd);
}

Image exemplar_inpaint(const Image& img, const Mask& m, int patch_size, std::vector<FillStep>* steps) {
  require_mask_fits(img, m, "exemplar_inpaint");
  if (patch_size < 3 || patch_size % 2 == 0) throw std::invalid_argument("exemplar_inpaint: patch size must be odd and >= 3");
  if (patch_size > img.height || patch_size > img.width)
    throw std::invalid_argument("exemplar_inpaint: patch larger than image");
  if (steps) steps->clear();
  if (m.count() == 0) return img;

  const int H = img.height, W = img.width, half = patch_size / 2;
  const size_t plane = img.plane_size();

  // Sources: every placement lying entirely in the original known region.
  std::vector<std::pair<int, int>> sources;
  for (int r = half; r + half < H; ++r)
    for (int c = half; c + half < W; ++c) {
      bool ok = true;
      for (int dy = -half; dy <= half && ok; ++dy)
        for (int dx = -half; dx <= half && ok; ++dx) ok = !m.at(r + dy, c + dx);
      if (ok) sources.emplace_back(r, c);
    }
  if (sources.empty()) throw std::invalid_argument("exemplar_inpaint: known region holds no complete patch");

  Image out = img;
  std::vector<std::uint8_t> filled(plane);
  for (size_t i = 0; i < plane; ++i) filled[i] = m.data[i] ? 0 : 1;
  size_t remaining = m.count();
  const Image gray_init = to_gray(img);
  std::vector<double> gray(gray_init.data);

  auto is_filled = [&](int y, int x) { return filled[static_cast<size_t>(y) * W + x] != 0; };

  while (remaining > 0) {
    // Pick the highest-priority pixel on the fill front.
    double best_priority = -1;
    int py = -1, px = -1;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        if (is_filled(y, x)) continue;
        const bool front = (y > 0 && is_filled(y - 1, x)) || (y + 1 < H && is_filled(y + 1, x)) ||
                           (x > 0 && is_filled(y, x - 1)) || (x + 1 < W && is_filled(y, x + 1));
        if (!front) continue;
        int known = 0, total = 0;
        for (int dy = -half; dy <= half; ++dy)
          for (int dx = -half; dx <= half; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
            ++total;
            known += is_filled(yy, xx);
          }
        const double confidence = static_cast<double>(known) / total;
        // Front normal from the filled-indicator gradient, isophote from the
        // gray image using filled neighbours only.
        auto ind = [&](int yy, int xx) {
          yy = std::clamp(yy, 0, H - 1);
          xx = std::clamp(xx, 0, W - 1);
          return is_filled(yy, xx) ? 1.0 : 0.0;
        };
        double nx = ind(y, x + 1) - ind(y, x - 1), ny = ind(y + 1, x) - ind(y - 1, x);
        const double nn = std::hypot(nx, ny);
        if (nn > 0) nx /= nn, ny /= nn;
        auto g = [&](int yy, int xx) {
          yy = std::clamp(yy, 0, H - 1);
          xx = std::clamp(xx, 0, W - 1);
          return is_filled(yy, xx) ? gray[static_cast<size_t>(yy) * W + xx] : std::numeric_limits<double>::quiet_NaN();
        };
        auto diff = [](double a, double b) { return (std::isnan(a) || std::isnan(b)) ? 0.0 : 0.5 * (a - b); };
        const double gx = diff(g(y, x + 1), g(y, x - 1));
        const double gy = diff(g(y + 1, x), g(y - 1, x));
        const double data = std::fabs(-gy * nx + gx * ny) + 1e-3;
        const double priority = confidence * data;
        if (priority > best_priority) best_priority = priority, py = y, px = x;
      }

    const int ty = std::clamp(py, half, H - 1 - half);
    const int tx = std::clamp(px, half, W - 1 - half);

    double best = std::numeric_limits<double>::infinity();
    std::pair<int, int> choice = sources.front();
    for (const auto& [sy, sx] : sources) {
      double ssd = 0;
      for (int c = 0; c < img.channels && ssd < best; ++c)
        for (int dy = -half; dy <= half && ssd < best; ++dy)
          for (int dx = -half; dx <= half; ++dx) {
            if (!is_filled(ty + dy, tx + dx)) continue;
            const double d = out.at(c, ty + dy, tx + dx) - out.at(c, sy + dy, sx + dx);
            ssd += d * d;
          }
      if (ssd < best) best = ssd, choice = {sy, sx};
    }

    for (int dy = -half; dy <= half; ++dy)
      for (int dx = -half; dx <= half; ++dx) {
        const int yy = ty + dy, xx = tx + dx;
        if (is_filled(yy, xx)) continue;
        for (int c = 0; c < img.channels; ++c) out.at(c, yy, xx) = out.at(c, choice.first + dy, choice.second + dx);
        const size_t i = static_cast<size_t>(yy) * W + xx;
        gray[i] = img.channels == 1 ? out.data[i]
                                    : 0.299 * out.data[i] + 0.587 * out.data[plane + i] + 0.114 * out.data[2 * plane + i];
        filled[i] = 1;
        --remaining;
      }
    if (steps) steps->push_back({ty, tx, choice.first, choice.second, std::sqrt(best)});
  }
  return out;
}

}  // namespace safepaint::classical
