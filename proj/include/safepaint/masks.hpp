#pragma once

#include <cstdint>
#include <string>

#include "safepaint/image.hpp"

namespace safepaint::masks {

/// Ten-percent hole-ratio bucket [lower, upper). The top bucket also admits
/// a ratio of exactly 100%.
struct MaskBucket {
  int lower = 0;
  int upper = 10;

  bool contains(double ratio) const;
  std::string label() const;  // "30-40"
  bool operator==(const MaskBucket&) const = default;
};

/// Accepts "30-40", "30%-40%" or "30". Throws std::invalid_argument for
/// anything that is not an aligned width-10 bucket inside [0,100].
MaskBucket parse_bucket(const std::string& text);

/// I_gt outside the hole, exactly 1.0 inside it.
Image make_input(const Image& gt, const Mask& m);

/// gt * (1 - M) + generated * M, evaluated with selects so that known pixels
/// are bit-identical to gt.
Image composite(const Image& gt, const Mask& m, const Image& generated);

MaskBucket ratio_bucket(const Mask& m);

/// Seeded free-form mask: union of disc-dilated random-walk strokes, with
/// stroke-level rejection until the hole ratio lands inside `target`.
Mask generate_irregular(std::uint64_t seed, const MaskBucket& target, int height, int width);

/// Nearest-neighbour resampling, keeps the mask binary.
Mask resize_nearest(const Mask& m, int height, int width);

}  // namespace safepaint::masks
