#include "safepaint/evaluate.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "safepaint/io.hpp"

namespace safepaint::eval {

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  if (a.data.empty()) throw ShapeError("psnr: empty images");
  double mse = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse <= 0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

Image jpeg_roundtrip(const Image& img, int qf) {
  if (qf < 1 || qf > 100) throw std::invalid_argument("jpeg_roundtrip: quality must be in [1,100]");
  return io::decode_jpeg(io::encode_jpeg(img, qf));
}

double proxy_lpips(const Image& a, const Image& b, const models::FeaturePyramid& pyramid) {
  require_same_shape(a, b, "proxy_lpips");
  nn::NoGradGuard guard;
  const auto fa = pyramid.forward(nn::constant(models::to_tensor(to_rgb(a))));
  const auto fb = pyramid.forward(nn::constant(models::to_tensor(to_rgb(b))));
  double total = 0;
  for (size_t s = 0; s < fa.size(); ++s) {
    const nn::Tensor& x = fa[s]->value;
    const nn::Tensor& y = fb[s]->value;
    const int C = x.shape.c;
    const size_t plane = x.shape.plane();
    double acc = 0;
    for (size_t p = 0; p < plane; ++p) {
      double nx = 0, ny = 0;
      for (int c = 0; c < C; ++c) {
        nx += x.data[c * plane + p] * x.data[c * plane + p];
        ny += y.data[c * plane + p] * y.data[c * plane + p];
      }
      nx = std::sqrt(nx) + 1e-10;
      ny = std::sqrt(ny) + 1e-10;
      for (int c = 0; c < C; ++c) {
        const double d = x.data[c * plane + p] / nx - y.data[c * plane + p] / ny;
        acc += d * d;
      }
    }
    total += acc / static_cast<double>(plane);
  }
  return total / static_cast<double>(fa.size());
}

const char* method_name(Method m) {
  switch (m) {
    case Method::Stage1: return "stage1";
    case Method::SafePaint: return "safepaint";
    case Method::Diffusion: return "diffusion";
    case Method::Exemplar: return "exemplar";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::Stage1, Method::SafePaint, Method::Diffusion, Method::Exemplar})
    if (name == method_name(m)) return m;
  throw std::invalid_argument("unknown method '" + name + "' (expected safepaint, stage1, diffusion or exemplar)");
}

Image run_method(Method method, models::SafePaintModel* model, const Image& img, const Mask& m,
                 const MethodSettings& settings) {
  switch (method) {
    case Method::Stage1:
    case Method::SafePaint:
      if (!model) throw std::invalid_argument(std::string(method_name(method)) + " needs a trained checkpoint");
      return models::inpaint(*model, to_rgb(img), m, method == Method::SafePaint);
    case Method::Diffusion: return classical::diffuse_inpaint(img, m, settings.diffusion);
    case Method::Exemplar: return classical::exemplar_inpaint(img, m, settings.exemplar_patch);
  }
  throw std::invalid_argument("run_method: unknown method");
}

Mask eval_mask(const std::string& name, const masks::MaskBucket& bucket, std::uint64_t seed, int height, int width) {
  std::uint64_t h = derive_seed(seed, static_cast<std::uint64_t>(bucket.lower));
  for (unsigned char ch : name) h = mix_seed(h ^ ch);
  return masks::generate_irregular(h, bucket, height, width);
}

double KlComparison::win_rate() const {
  if (stage1.empty()) return 0;
  size_t wins = 0;
  for (size_t i = 0; i < stage1.size(); ++i) wins += full[i] < stage1[i];
  return static_cast<double>(wins) / static_cast<double>(stage1.size());
}

KlComparison compare_kl(models::SafePaintModel& model, const std::vector<corpus::Item>& items,
                        const masks::MaskBucket& bucket, std::uint64_t seed) {
  KlComparison out;
  for (const auto& it : items) {
    const Image img = to_rgb(it.image);
    const Mask m = eval_mask(it.name, bucket, seed, img.height, img.width);
    out.stage1.push_back(probes::kl_domain_gap(models::inpaint(model, img, m, false), m));
    out.full.push_back(probes::kl_domain_gap(models::inpaint(model, img, m, true), m));
  }
  return out;
}

namespace {

void require_background(const Image& original, const Image& out, const Mask& m, const char* method) {
  require_same_shape(original, out, method);
  const size_t plane = original.plane_size();
  for (int c = 0; c < original.channels; ++c)
    for (size_t i = 0; i < plane; ++i)
      if (!m.data[i] && original.data[c * plane + i] != out.data[c * plane + i])
        throw std::logic_error(std::string(method) + " modified a known pixel");
}

// The learned detector's sample verdict follows the score-threshold
// convention: forged when its strongest pixel response reaches the threshold.
probes::DetectionReport score_learned(const probes::Heatmap& h, const Mask& gt, double threshold) {
  probes::DetectionReport r = probes::detection_metrics(h, gt, threshold);
  double peak = 0;
  for (double v : h.data) peak = std::max(peak, v);
  r.flagged = peak >= threshold;
  return r;
}

struct Accumulator {
  double psnr = 0, lpips = 0, kl = 0;
  std::map<std::string, std::vector<probes::DetectionReport>> reports;
  int count = 0;
};

}  // namespace

nlohmann::json antiforensic_eval(models::SafePaintModel* model, const std::vector<corpus::Item>& held_out,
                                 const std::vector<corpus::Item>& detector_items, const EvalOptions& opts) {
  if (held_out.empty()) throw std::invalid_argument("antiforensic_eval: no held-out images");
  if (opts.buckets.empty()) throw std::invalid_argument("antiforensic_eval: no buckets");
  if (opts.jpeg_qf != 0 && (opts.jpeg_qf < 1 || opts.jpeg_qf > 100))
    throw std::invalid_argument("antiforensic_eval: jpeg quality must be in [1,100] or 0");
  for (Method m : opts.methods)
    if (!model && (m == Method::Stage1 || m == Method::SafePaint))
      throw std::invalid_argument("antiforensic_eval: a checkpoint is required for the learned methods");

  // Learned probe: trained on naive copy-fill tampering of separate images.
  std::vector<probes::LabeledSample> det_corpus;
  for (const auto& it : detector_items) {
    const Image img = to_rgb(it.image);
    const auto& bucket = opts.buckets[det_corpus.size() % opts.buckets.size()];
    const Mask m = eval_mask(it.name, bucket, derive_seed(opts.seed, 0xde7), img.height, img.width);
    det_corpus.push_back({probes::copy_fill(img, m), m});
  }
  const bool learned = !det_corpus.empty();
  probes::PatchDetector detector;
  if (learned) detector = probes::train_patch_detector(det_corpus, opts.seed, opts.detector);

  const models::FeaturePyramid pyramid;
  std::map<std::string, std::map<std::string, Accumulator>> acc;  // method -> bucket -> stats
  KlComparison kl_pairs;

  for (const auto& bucket : opts.buckets) {
    for (const auto& it : held_out) {
      const Image img = to_rgb(it.image);
      const Mask m = eval_mask(it.name, bucket, opts.seed, img.height, img.width);
      std::map<Method, double> kl_by_method;
      for (Method method : opts.methods) {
        Image out = run_method(method, model, img, m, opts.settings);
        require_background(img, out, m, method_name(method));
        if (opts.jpeg_qf) out = jpeg_roundtrip(out, opts.jpeg_qf);
        Accumulator& a = acc[method_name(method)][bucket.label()];
        a.psnr += psnr(img, out);
        a.lpips += proxy_lpips(img, out, pyramid);
        const double kl = probes::kl_domain_gap(out, m);
        kl_by_method[method] = kl;
        a.kl += kl;
        a.reports["variance"].push_back(probes::detection_metrics(probes::local_variance_map(out, opts.variance_window), m,
                                                                  opts.threshold, opts.coverage_rule));
        a.reports["similarity"].push_back(probes::detection_metrics(probes::patch_similarity_map(out, opts.similarity), m,
                                                                    opts.threshold, opts.coverage_rule));
        if (learned) a.reports["learned"].push_back(score_learned(detector.heatmap(out), m, opts.threshold));
        ++a.count;
      }
      if (kl_by_method.count(Method::Stage1) && kl_by_method.count(Method::SafePaint)) {
        kl_pairs.stage1.push_back(kl_by_method[Method::Stage1]);
        kl_pairs.full.push_back(kl_by_method[Method::SafePaint]);
      }
    }
  }

  nlohmann::json methods = nlohmann::json::object();
  for (auto& [method, buckets] : acc)
    for (auto& [label, a] : buckets) {
      nlohmann::json probe_json = nlohmann::json::object();
      for (auto& [probe, reports] : a.reports) probe_json[probe] = probes::to_json(probes::aggregate(reports));
      methods[method][label] = {{"images", a.count},
                                {"psnr", a.psnr / a.count},
                                {"proxy_lpips", a.lpips / a.count},
                                {"kl_gap", a.kl / a.count},
                                {"probes", probe_json}};
    }

  nlohmann::json bucket_labels = nlohmann::json::array();
  for (const auto& b : opts.buckets) bucket_labels.push_back(b.label());
  nlohmann::json report = {{"images", held_out.size()},
                           {"buckets", bucket_labels},
                           {"jpeg_qf", opts.jpeg_qf},
                           {"seed", opts.seed},
                           {"detector_train_images", det_corpus.size()},
                           {"methods", methods}};
  if (!kl_pairs.stage1.empty())
    report["kl_comparison"] = {{"pairs", kl_pairs.stage1.size()}, {"safepaint_below_stage1", kl_pairs.win_rate()}};
  return report;
}

}  // namespace safepaint::eval
