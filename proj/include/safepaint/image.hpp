#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace safepaint {

/// Raised when two operands disagree on height, width or channel count.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Planar (channel-major) image with samples in [0,1]. Channels are 1 or 3.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0);

  double& at(int c, int y, int x) { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const { return data[(static_cast<size_t>(c) * height + y) * width + x]; }

  size_t plane_size() const { return static_cast<size_t>(height) * width; }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool empty() const { return data.empty(); }
};

/// Binary hole mask: 1 marks the region to inpaint, 0 the known region.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0);

  std::uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }

  size_t size() const { return data.size(); }
  size_t count() const;
  double ratio() const;
  Mask complement() const;
  bool matches(const Image& img) const { return height == img.height && width == img.width; }
  bool operator==(const Mask&) const = default;
};

void require_same_shape(const Image& a, const Image& b, const char* what);
void require_mask_fits(const Image& img, const Mask& m, const char* what);

/// Clamp every sample into [0,1].
void clamp01(Image& img);

/// Replicates a 1-channel image into 3 channels; 3-channel input is returned as is.
Image to_rgb(const Image& img);

/// Luma (Rec. 601) for 3-channel images, identity for 1-channel.
Image to_gray(const Image& img);

}  // namespace safepaint
