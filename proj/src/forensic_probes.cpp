#include "safepaint/forensic_probes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace safepaint::probes {

Image Heatmap::to_image() const {
  Image img(height, width, 1);
  img.data = data;
  return img;
}

std::vector<double> region_histogram(const Image& img, const Mask& region, int bins, double smoothing) {
  require_mask_fits(img, region, "region_histogram");
  if (bins < 1) throw std::invalid_argument("region_histogram: bins must be positive");
  if (smoothing < 0) throw std::invalid_argument("region_histogram: smoothing must be non-negative");
  std::vector<double> hist(bins, 0.0);
  const size_t plane = img.plane_size();
  size_t total = 0;
  for (int c = 0; c < img.channels; ++c)
    for (size_t i = 0; i < plane; ++i) {
      if (!region.data[i]) continue;
      const double v = std::clamp(img.data[c * plane + i], 0.0, 1.0);
      const int b = std::min(static_cast<int>(v * bins), bins - 1);
      hist[b] += 1;
      ++total;
    }
  if (total == 0) throw std::invalid_argument("region_histogram: empty region");
  double sum = 0;
  for (double& h : hist) {
    h = h / static_cast<double>(total) + smoothing;
    sum += h;
  }
  for (double& h : hist) h /= sum;
  return hist;
}

double kl_domain_gap(const Image& img, const Mask& m, int bins, double smoothing) {
  require_mask_fits(img, m, "kl_domain_gap");
  const size_t holes = m.count();
  if (holes == 0 || holes == m.size()) throw std::invalid_argument("kl_domain_gap: both regions must be non-empty");
  if (smoothing <= 0) throw std::invalid_argument("kl_domain_gap: smoothing must be positive");
  const auto p = region_histogram(img, m.complement(), bins, smoothing);
  const auto q = region_histogram(img, m, bins, smoothing);
  double kl = 0;
  for (int b = 0; b < bins; ++b) kl += p[b] * std::log(p[b] / q[b]);
  return std::max(kl, 0.0);
}

std::vector<double> local_variance(const Image& img, int window) {
  if (window < 1 || window % 2 == 0) throw std::invalid_argument("local_variance: window must be odd and positive");
  const Image gray = to_gray(img);
  const int H = gray.height, W = gray.width, r = window / 2;
  const double n = static_cast<double>(window) * window;
  std::vector<double> out(gray.plane_size());
  auto px = [&](int y, int x) { return gray.at(0, std::clamp(y, 0, H - 1), std::clamp(x, 0, W - 1)); };
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double mean = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) mean += px(y + dy, x + dx);
      mean /= n;
      double var = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const double d = px(y + dy, x + dx) - mean;
          var += d * d;
        }
      out[static_cast<size_t>(y) * W + x] = var / n;
    }
  return out;
}

Heatmap local_variance_map(const Image& img, int window) {
  const auto raw = local_variance(img, window);
  Heatmap h(img.height, img.width);
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double span = *hi - *lo;
  if (span <= 0) return h;
  for (size_t i = 0; i < raw.size(); ++i) h.data[i] = (raw[i] - *lo) / span;
  return h;
}

namespace {

std::vector<int> grid_positions(int extent, int patch, int stride) {
  std::vector<int> pos;
  for (int p = 0; p + patch <= extent; p += stride) pos.push_back(p);
  if (pos.back() != extent - patch) pos.push_back(extent - patch);
  return pos;
}

}  // namespace

Heatmap patch_similarity_map(const Image& img, const SimilarityOptions& opts) {
  if (opts.patch < 1 || opts.patch % 2 == 0) throw std::invalid_argument("patch_similarity_map: patch must be odd");
  if (opts.stride < 1) throw std::invalid_argument("patch_similarity_map: stride must be >= 1");
  if (opts.tau <= 0) throw std::invalid_argument("patch_similarity_map: tau must be positive");
  if (opts.patch > img.height || opts.patch > img.width)
    throw std::invalid_argument("patch_similarity_map: patch larger than image");

  const int P = opts.patch;
  const auto ys = grid_positions(img.height, P, opts.stride);
  const auto xs = grid_positions(img.width, P, opts.stride);
  struct Cell {
    int y, x;
  };
  std::vector<Cell> cells;
  for (int y : ys)
    for (int x : xs) cells.push_back({y, x});

  // Patches flattened once so the pair search streams contiguous memory.
  const size_t len = static_cast<size_t>(P) * P * img.channels;
  std::vector<double> flat(cells.size() * len);
  for (size_t k = 0; k < cells.size(); ++k) {
    double* dst = flat.data() + k * len;
    for (int c = 0; c < img.channels; ++c)
      for (int dy = 0; dy < P; ++dy)
        for (int dx = 0; dx < P; ++dx) *dst++ = img.at(c, cells[k].y + dy, cells[k].x + dx);
  }

  std::vector<double> best(cells.size(), std::numeric_limits<double>::infinity());
  for (size_t a = 0; a < cells.size(); ++a)
    for (size_t b = a + 1; b < cells.size(); ++b) {
      if (std::abs(cells[a].y - cells[b].y) < P && std::abs(cells[a].x - cells[b].x) < P) continue;
      const double bound = std::max(best[a], best[b]);
      const double* pa = flat.data() + a * len;
      const double* pb = flat.data() + b * len;
      double ssd = 0;
      for (size_t i = 0; i < len && ssd < bound; ++i) {
        const double d = pa[i] - pb[i];
        ssd += d * d;
      }
      if (ssd < best[a]) best[a] = ssd;
      if (ssd < best[b]) best[b] = ssd;
    }

  Heatmap h(img.height, img.width);
  for (size_t k = 0; k < cells.size(); ++k) {
    const double heat = best[k] < opts.tau ? 1.0 : std::exp(-best[k] / opts.tau);
    for (int dy = 0; dy < P; ++dy)
      for (int dx = 0; dx < P; ++dx) {
        double& v = h.at(cells[k].y + dy, cells[k].x + dx);
        v = std::max(v, heat);
      }
  }
  return h;
}

namespace {

void require_heatmap_fits(const Heatmap& h, const Mask& gt, const char* what) {
  if (h.height != gt.height || h.width != gt.width)
    throw ShapeError(std::string(what) + ": heatmap and mask shapes differ");
}

}  // namespace

double pixel_auc(const Heatmap& h, const Mask& gt) {
  require_heatmap_fits(h, gt, "pixel_auc");
  const size_t pos = gt.count(), n = gt.size(), neg = n - pos;
  if (pos == 0) throw std::invalid_argument("pixel_auc: ground truth has no positives");
  if (neg == 0) throw std::invalid_argument("pixel_auc: ground truth has no negatives");
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return h.data[a] < h.data[b]; });
  // Mann-Whitney U with mid-ranks for ties.
  double rank_sum = 0;
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j < n && h.data[order[j]] == h.data[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (size_t k = i; k < j; ++k)
      if (gt.data[order[k]]) rank_sum += mid;
    i = j;
  }
  const double u = rank_sum - static_cast<double>(pos) * (pos + 1) / 2.0;
  return u / (static_cast<double>(pos) * neg);
}

DetectionReport detection_metrics(const Heatmap& h, const Mask& gt, double threshold, double coverage_rule) {
  require_heatmap_fits(h, gt, "detection_metrics");
  const size_t pos = gt.count();
  if (pos == 0) throw std::invalid_argument("detection_metrics: ground truth has no positives");
  DetectionReport r;
  r.auc = pos == gt.size() ? 0.5 : pixel_auc(h, gt);
  size_t tp = 0, fp = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (h.data[i] < threshold) continue;
    if (gt.data[i]) ++tp;
    else ++fp;
  }
  const size_t fn = pos - tp;
  r.f1 = tp == 0 ? 0.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
  r.flagged = static_cast<double>(tp) / static_cast<double>(pos) > coverage_rule;
  return r;
}

CorpusReport aggregate(const std::vector<DetectionReport>& reports) {
  CorpusReport c;
  c.per_image = reports;
  if (reports.empty()) return c;
  for (const auto& r : reports) {
    c.auc_mean += r.auc;
    c.f1_mean += r.f1;
    c.acc += r.flagged ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(reports.size());
  c.auc_mean /= n;
  c.f1_mean /= n;
  c.acc /= n;
  return c;
}

nlohmann::json to_json(const DetectionReport& r) {
  return {{"auc", r.auc}, {"f1", r.f1}, {"flagged", r.flagged}};
}

nlohmann::json to_json(const CorpusReport& r) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& d : r.per_image) per.push_back(to_json(d));
  return {{"per_image", per}, {"auc_mean", r.auc_mean}, {"f1_mean", r.f1_mean}, {"acc", r.acc}};
}

}  // namespace safepaint::probes
