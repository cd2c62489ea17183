#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "safepaint/classical_inpaint.hpp"
#include "safepaint/corpus.hpp"
#include "safepaint/forensic_probes.hpp"
#include "safepaint/masks.hpp"
#include "safepaint/models.hpp"
#include "safepaint/patch_detector.hpp"

namespace safepaint::eval {

/// 10*log10(1/MSE), capped at 100 dB for identical images.
double psnr(const Image& a, const Image& b);

/// Baseline JPEG encode/decode at quality qf in [1,100].
Image jpeg_roundtrip(const Image& img, int qf = 95);

/// Perceptual distance over the frozen pyramid: per scale, features are
/// unit-normalized across channels, squared differences are summed over
/// channels and averaged over positions; scales are averaged.
double proxy_lpips(const Image& a, const Image& b, const models::FeaturePyramid& pyramid);

struct EvalRecord {
  double psnr = 0;
  double proxy_lpips = 0;
  double kl_gap = 0;
  probes::DetectionReport detection;
};

enum class Method { Stage1, SafePaint, Diffusion, Exemplar };

const char* method_name(Method m);
Method parse_method(const std::string& name);  // throws std::invalid_argument

struct MethodSettings {
  classical::DiffusionConfig diffusion;
  int exemplar_patch = 9;
};

/// Runs one inpainting method. `model` may be null for the classical ones.
Image run_method(Method method, models::SafePaintModel* model, const Image& img, const Mask& m,
                 const MethodSettings& settings = {});

/// Mask used for image `name` in `bucket`; a pure function of its arguments.
Mask eval_mask(const std::string& name, const masks::MaskBucket& bucket, std::uint64_t seed, int height, int width);

struct EvalOptions {
  std::vector<masks::MaskBucket> buckets{{30, 40}};
  int jpeg_qf = 0;  // 0 disables the JPEG pass
  std::uint64_t seed = 1;
  std::vector<Method> methods{Method::Stage1, Method::SafePaint, Method::Diffusion, Method::Exemplar};
  MethodSettings settings;
  int variance_window = 5;
  probes::SimilarityOptions similarity;
  probes::DetectorOptions detector;
  double coverage_rule = 0.25;
  double threshold = 0.5;
};

/// Stage-one versus full-pipeline KL gap per image, for one bucket.
struct KlComparison {
  std::vector<double> stage1;
  std::vector<double> full;
  double win_rate() const;  // fraction of images where full < stage1
};
KlComparison compare_kl(models::SafePaintModel& model, const std::vector<corpus::Item>& items,
                        const masks::MaskBucket& bucket, std::uint64_t seed);

/// Inpaints every held-out image with every method and bucket, scores the
/// results with every probe (the learned detector is trained on copy-fill
/// tampering of `detector_items`), and aggregates per method and bucket.
/// Throws std::logic_error if any method alters a known pixel.
nlohmann::json antiforensic_eval(models::SafePaintModel* model, const std::vector<corpus::Item>& held_out,
                                 const std::vector<corpus::Item>& detector_items, const EvalOptions& opts);

}  // namespace safepaint::eval
