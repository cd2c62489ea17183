#include "safepaint/image.hpp"

#include <algorithm>
#include <numeric>

namespace safepaint {

Image::Image(int h, int w, int c, double fill)
    : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, fill) {
  if (h < 0 || w < 0 || (c != 1 && c != 3))
    throw ShapeError("image must have non-negative extent and 1 or 3 channels");
}

Mask::Mask(int h, int w, std::uint8_t fill) : height(h), width(w), data(static_cast<size_t>(h) * w, fill ? 1 : 0) {
  if (h < 0 || w < 0) throw ShapeError("mask extent must be non-negative");
}

size_t Mask::count() const {
  return static_cast<size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

double Mask::ratio() const {
  if (data.empty()) return 0.0;
  return static_cast<double>(count()) / static_cast<double>(data.size());
}

Mask Mask::complement() const {
  Mask out = *this;
  for (auto& v : out.data) v = v ? 0 : 1;
  return out;
}

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": image shapes differ (" + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + "x" + std::to_string(a.channels) + " vs " +
                     std::to_string(b.height) + "x" + std::to_string(b.width) + "x" +
                     std::to_string(b.channels) + ")");
}

void require_mask_fits(const Image& img, const Mask& m, const char* what) {
  if (!m.matches(img))
    throw ShapeError(std::string(what) + ": mask " + std::to_string(m.height) + "x" + std::to_string(m.width) +
                     " does not match image " + std::to_string(img.height) + "x" + std::to_string(img.width));
}

void clamp01(Image& img) {
  for (auto& v : img.data) v = std::clamp(v, 0.0, 1.0);
}

Image to_rgb(const Image& img) {
  if (img.channels == 3) return img;
  Image out(img.height, img.width, 3);
  for (int c = 0; c < 3; ++c) std::copy(img.data.begin(), img.data.end(), out.data.begin() + c * img.plane_size());
  return out;
}

Image to_gray(const Image& img) {
  if (img.channels == 1) return img;
  Image g(img.height, img.width, 1);
  const size_t n = img.plane_size();
  for (size_t i = 0; i < n; ++i)
    g.data[i] = 0.299 * img.data[i] + 0.587 * img.data[n + i] + 0.114 * img.data[2 * n + i];
  return g;
}

}  // namespace safepaint
