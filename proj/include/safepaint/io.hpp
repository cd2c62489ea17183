#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "safepaint/image.hpp"

namespace safepaint::io {

/// 8-bit quantization used by every writer: round(v * 255) after clamping.
std::uint8_t quantize(double v);

Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

/// Masks are 1-channel PNGs, 0 = known, 255 = hole. Loading thresholds at 128.
Mask read_mask_png(const std::string& path);
void write_mask_png(const std::string& path, const Mask& m);

/// Baseline JPEG encode of an 8-bit quantized image, in memory.
std::vector<std::uint8_t> encode_jpeg(const Image& img, int quality);
Image decode_jpeg(const std::vector<std::uint8_t>& bytes);

}  // namespace safepaint::io
