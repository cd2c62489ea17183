#include "safepaint/masks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <regex>
#include <stdexcept>

#include "safepaint/rng.hpp"

namespace safepaint::masks {

bool MaskBucket::contains(double ratio) const {
  const double lo = lower / 100.0, hi = upper / 100.0;
  if (upper == 100) return ratio >= lo && ratio <= 1.0;
  return ratio >= lo && ratio < hi;
}

std::string MaskBucket::label() const { return std::to_string(lower) + "-" + std::to_string(upper); }

MaskBucket parse_bucket(const std::string& text) {
  static const std::regex pattern(R"(^\s*(\d{1,3})%?\s*(?:-\s*(\d{1,3})%?)?\s*$)");
  std::smatch match;
  if (!std::regex_match(text, match, pattern)) throw std::invalid_argument("invalid mask bucket '" + text + "'");
  const int lower = std::stoi(match[1].str());
  const int upper = match[2].matched ? std::stoi(match[2].str()) : lower + 10;
  if (lower % 10 != 0 || upper != lower + 10 || upper > 100)
    throw std::invalid_argument("mask bucket '" + text + "' is not an aligned 10% range inside 0-100");
  return {lower, upper};
}

Image make_input(const Image& gt, const Mask& m) {
  require_mask_fits(gt, m, "make_input");
  Image out = gt;
  const size_t plane = gt.plane_size();
  for (int c = 0; c < gt.channels; ++c)
    for (size_t i = 0; i < plane; ++i)
      if (m.data[i]) out.data[c * plane + i] = 1.0;
  return out;
}

Image composite(const Image& gt, const Mask& m, const Image& generated) {
  require_same_shape(gt, generated, "composite");
  require_mask_fits(gt, m, "composite");
  Image out = gt;
  const size_t plane = gt.plane_size();
  for (int c = 0; c < gt.channels; ++c)
    for (size_t i = 0; i < plane; ++i)
      if (m.data[i]) out.data[c * plane + i] = generated.data[c * plane + i];
  return out;
}

MaskBucket ratio_bucket(const Mask& m) {
  // Integer arithmetic on the pixel count avoids landing one bucket low
  // when count/size is an exact multiple of 10%.
  const size_t n = m.size();
  if (n == 0) return {0, 10};
  const size_t ones = m.count();
  int lower = static_cast<int>((ones * 10) / n) * 10;
  lower = std::min(lower, 90);
  return {lower, lower + 10};
}

namespace {

void stamp_disc(Mask& m, double cy, double cx, int radius) {
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int y1 = std::min(m.height - 1, static_cast<int>(std::ceil(cy + radius)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int x1 = std::min(m.width - 1, static_cast<int>(std::ceil(cx + radius)));
  const double r2 = static_cast<double>(radius) * radius;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dy = y - cy, dx = x - cx;
      if (dy * dy + dx * dx <= r2) m.at(y, x) = 1;
    }
}

void draw_stroke(Mask& m, Rng& rng) {
  const int radius = rng.uniform_int(2, 8);
  const int vertices = rng.uniform_int(2, 8);
  const double max_step = std::max(4.0, std::min(m.height, m.width) / 4.0);
  double y = rng.uniform(0, m.height), x = rng.uniform(0, m.width);
  double angle = rng.uniform(0, 2 * std::numbers::pi);
  stamp_disc(m, y, x, radius);
  for (int v = 0; v < vertices; ++v) {
    angle += rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2);
    const double len = rng.uniform(2.0, max_step);
    const double ny = std::clamp(y + len * std::sin(angle), 0.0, m.height - 1.0);
    const double nx = std::clamp(x + len * std::cos(angle), 0.0, m.width - 1.0);
    const int steps = std::max(1, static_cast<int>(std::ceil(len)));
    for (int s = 1; s <= steps; ++s) {
      const double t = static_cast<double>(s) / steps;
      stamp_disc(m, y + t * (ny - y), x + t * (nx - x), radius);
    }
    y = ny;
    x = nx;
  }
}

}  // namespace

Mask generate_irregular(std::uint64_t seed, const MaskBucket& target, int height, int width) {
  if (height < 16 || width < 16) throw std::invalid_argument("generate_irregular: height and width must be >= 16");
  if (target.lower < 0 || target.upper > 100 || target.upper != target.lower + 10 || target.lower % 10)
    throw std::invalid_argument("generate_irregular: invalid target bucket");
  Rng rng(seed);
  constexpr int kRestarts = 64;
  constexpr int kStrokeAttempts = 400;
  const double hi = target.upper == 100 ? 1.0 : target.upper / 100.0;
  for (int restart = 0; restart < kRestarts; ++restart) {
    Mask m(height, width);
    const double goal = rng.uniform(target.lower / 100.0, hi);
    for (int attempt = 0; attempt < kStrokeAttempts; ++attempt) {
      if (m.ratio() >= goal && m.count() > 0) break;
      Mask candidate = m;
      draw_stroke(candidate, rng);
      if (target.upper == 100 || candidate.ratio() < hi) m = std::move(candidate);
    }
    if (m.count() > 0 && target.contains(m.ratio())) return m;
  }
  throw std::runtime_error("generate_irregular: could not reach bucket " + target.label() + " for " +
                           std::to_string(height) + "x" + std::to_string(width));
}

Mask resize_nearest(const Mask& m, int height, int width) {
  if (m.height == height && m.width == width) return m;
  Mask out(height, width);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(m.height - 1, static_cast<int>((static_cast<long>(y) * m.height) / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(m.width - 1, static_cast<int>((static_cast<long>(x) * m.width) / width));
      out.at(y, x) = m.at(sy, sx);
    }
  }
  return out;
}

}  // namespace safepaint::masks
