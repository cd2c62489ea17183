#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "safepaint/image.hpp"

namespace safepaint::probes {

/// Per-pixel tamper evidence in [0,1].
struct Heatmap {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Heatmap() = default;
  Heatmap(int h, int w, double fill = 0.0) : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

  double& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  double at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
  Image to_image() const;
};

/// Smoothed intensity histogram of the pixels where `region` is 1, pooled
/// over channels. Frequencies are normalized, `smoothing` is added to every
/// bin, and the result is renormalized.
std::vector<double> region_histogram(const Image& img, const Mask& region, int bins = 64, double smoothing = 1e-8);

/// D_KL(P(known) || P(hole)) of the two region histograms.
double kl_domain_gap(const Image& img, const Mask& m, int bins = 64, double smoothing = 1e-8);

/// Raw windowed population variance of the luma image (replicate padding).
std::vector<double> local_variance(const Image& img, int window);

/// local_variance, min-max normalized; a flat result maps to zeros.
Heatmap local_variance_map(const Image& img, int window = 5);

struct SimilarityOptions {
  int patch = 7;
  int stride = 2;
  double tau = 0.05;
};

/// Copy-move cue: each patch on the stride grid takes heat 1 when its
/// nearest non-overlapping grid neighbour has SSD < tau, exp(-SSD/tau)
/// otherwise. Pixels take the max heat of the patches covering them.
Heatmap patch_similarity_map(const Image& img, const SimilarityOptions& opts = {});

struct DetectionReport {
  double auc = 0.5;
  double f1 = 0.0;
  bool flagged = false;
};

/// Probability that a hole pixel outranks a known pixel (ties count half).
double pixel_auc(const Heatmap& h, const Mask& gt);

DetectionReport detection_metrics(const Heatmap& h, const Mask& gt, double threshold = 0.5, double coverage_rule = 0.25);

struct CorpusReport {
  std::vector<DetectionReport> per_image;
  double auc_mean = 0;
  double f1_mean = 0;
  double acc = 0;  // fraction of samples flagged
};

CorpusReport aggregate(const std::vector<DetectionReport>& reports);

nlohmann::json to_json(const DetectionReport& r);
nlohmann::json to_json(const CorpusReport& r);

}  // namespace safepaint::probes
