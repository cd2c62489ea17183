#pragma once

#include <vector>

#include "safepaint/image.hpp"

namespace safepaint::classical {

struct DiffusionConfig {
  double delta_v = 0.1;  // update rate
  int max_iters = 5000;
  double eps = 1e-6;  // stop once mean |I_t| over the hole drops below this
};

/// Per-run diagnostics of the diffusion solver.
struct DiffusionTrace {
  int iterations = 0;
  std::vector<double> residuals;  // mean |I_t| over the hole, one per sweep
  /// Sweeps where the residual rose by more than float noise.
  int residual_increases = 0;
};

/// Transport inpainting: synchronous sweeps of I += dv * I_t on hole pixels,
/// with I_t = grad(Laplacian) . isophote_direction + Laplacian. Holes start at
/// the mean known value per channel; replicate padding at the borders.
Image diffuse_inpaint(const Image& img, const Mask& m, const DiffusionConfig& cfg = {}, DiffusionTrace* trace = nullptr);

struct Patch {
  int row = 0;  // centre
  int col = 0;
  int size = 9;
  Image pixels;  // size x size x C
};

/// Extracts the odd-sized patch centred at (row, col). Throws when it would
/// leave the image.
Patch extract_patch(const Image& img, int row, int col, int size);

/// sqrt of the SSD over positions where `valid` (size x size) is 1.
double patch_distance(const Patch& a, const Patch& b, const Mask& valid);

struct FillStep {
  int target_row, target_col;
  int source_row, source_col;
  double distance;  // Euclidean distance over the target's filled pixels
};

/// Criminisi-style exemplar inpainting: repeatedly pick the fill-front patch
/// with the highest confidence x data priority, copy the best-matching fully
/// known source patch into its unfilled pixels. Source ties resolve to the
/// first (row, col) in scan order.
Image exemplar_inpaint(const Image& img, const Mask& m, int patch_size = 9, std::vector<FillStep>* steps = nullptr);

}  // namespace safepaint::classical
