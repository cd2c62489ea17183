#include <doctest.h>

#include "oracles.hpp"
#include "safepaint/classical_inpaint.hpp"
#include "safepaint/forensic_probes.hpp"
#include "safepaint/patch_detector.hpp"

using namespace safepaint;
using namespace safepaint::probes;

namespace {

Mask left_half(int h, int w) {
  Mask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w / 2; ++x) m.at(y, x) = 1;
  return m;
}

}  // namespace

TEST_CASE("region histogram is a smoothed distribution") {
  Rng rng(1);
  const Image img = oracle::random_image(16, 16, 3, rng);
  const auto h = region_histogram(img, left_half(16, 16));
  double sum = 0;
  for (double v : h) {
    CHECK(v > 0);
    sum += v;
  }
  CHECK(std::fabs(sum - 1) < 1e-12);
  CHECK(h.size() == 64);
  CHECK_THROWS(region_histogram(img, Mask(16, 16)));
}

TEST_CASE("kl_domain_gap") {
  // Identical regions.
  Image stripes(8, 8, 1);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) stripes.at(0, y, x) = (y % 2) ? 0.9 : 0.1;
  CHECK(kl_domain_gap(stripes, left_half(8, 8)) == 0.0);

  // Closed form on two bins.
  Image split(4, 4, 1);
  const Mask m = left_half(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) split.at(0, y, x) = m.at(y, x) ? 0.0 : 1.0;
  const double eps = 1e-8, e = eps / (1 + 2 * eps);
  const double expect = (1 - e) * std::log((1 - e) / e) + e * std::log(e / (1 - e));
  CHECK(kl_domain_gap(split, m, 2, eps) == doctest::Approx(expect).epsilon(1e-12));

  // Same-distribution noise regions.
  Rng rng(2);
  const Image noise = oracle::random_image(64, 128, 1, rng);
  Mask half(64, 128);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) half.at(y, x) = 1;
  const double gap = kl_domain_gap(noise, half);
  CHECK(gap >= 0);
  CHECK(gap < 0.05);

  CHECK_THROWS(kl_domain_gap(noise, Mask(64, 128, 0)));
  CHECK_THROWS(kl_domain_gap(noise, Mask(64, 128, 1)));
  for (int t = 0; t < 20; ++t) {
    const Image img = oracle::random_image(10, 10, 3, rng);
    CHECK(kl_domain_gap(img, oracle::random_mask(10, 10, rng, 0.3)) >= 0);
  }
}

TEST_CASE("local variance against the brute-force oracle") {
  Rng rng(3);
  for (int window : {1, 3, 5, 7}) {
    const Image img = oracle::random_image(13, 17, 1, rng);
    const auto got = local_variance(img, window);
    const auto ref = oracle::windowed_variance(img.data, 13, 17, window);
    for (size_t i = 0; i < ref.size(); ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-14));
  }
  Image checker(8, 8, 1);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) checker.at(0, y, x) = (y + x) % 2;
  const auto got = local_variance(checker, 3);
  const auto ref = oracle::windowed_variance(checker.data, 8, 8, 3);
  for (size_t i = 0; i < ref.size(); ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-14));
  CHECK(got[3 * 8 + 3] == doctest::Approx(20.0 / 81));  // 4 or 5 ones among 9

  const Heatmap flat = local_variance_map(Image(8, 8, 3, 0.4), 5);
  for (double v : flat.data) CHECK(v == 0.0);
  for (double v : local_variance_map(checker, 1).data) CHECK(v == 0.0);
  const Heatmap hm = local_variance_map(oracle::random_image(10, 10, 3, rng), 3);
  double lo = 1, hi = 0;
  for (double v : hm.data) lo = std::min(lo, v), hi = std::max(hi, v);
  CHECK(lo == 0.0);
  CHECK(hi == 1.0);
  CHECK_THROWS(local_variance_map(checker, 4));
}

TEST_CASE("patch similarity") {
  const Heatmap flat = patch_similarity_map(Image(24, 24, 3, 0.5));
  for (double v : flat.data) CHECK(v == 1.0);

  Rng rng(4);
  Image noise = oracle::random_image(48, 48, 3, rng);
  const Heatmap base = patch_similarity_map(noise, {7, 1, 0.05});
  double peak = 0;
  for (double v : base.data) peak = std::max(peak, v);
  CHECK(peak < 0.5);

  // Copy a 16x16 block: both copies light up.
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) noise.at(c, 28 + y, 26 + x) = noise.at(c, 4 + y, 6 + x);
  const Heatmap copy = patch_similarity_map(noise, {7, 1, 0.05});
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      CHECK(copy.at(4 + y, 6 + x) == 1.0);
      CHECK(copy.at(28 + y, 26 + x) == 1.0);
    }
  int outside_hot = 0;
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x) {
      const bool a = y >= 4 && y < 20 && x >= 6 && x < 22, b = y >= 28 && y < 44 && x >= 26 && x < 42;
      if (!a && !b) outside_hot += copy.at(y, x) >= 1.0;
    }
  CHECK(outside_hot == 0);

  CHECK_THROWS(patch_similarity_map(noise, {6, 1, 0.05}));
  CHECK_THROWS(patch_similarity_map(noise, {7, 0, 0.05}));
  CHECK_THROWS(patch_similarity_map(Image(5, 5, 1), {7, 1, 0.05}));
}

TEST_CASE("pixel AUC matches the pairwise oracle") {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    Heatmap h(10, 10);
    Mask gt(10, 10);
    for (auto& v : h.data) v = std::round(rng.uniform() * 8) / 8;  // forces ties
    for (auto& v : gt.data) v = rng.uniform() < 0.3;
    gt.data[0] = 1;
    gt.data[1] = 0;
    std::vector<int> labels(gt.data.begin(), gt.data.end());
    CHECK(std::fabs(pixel_auc(h, gt) - oracle::pairwise_auc(h.data, labels)) < 1e-9);
  }
}

TEST_CASE("AUC invariance under monotone transforms") {
  Rng rng(6);
  Heatmap h(12, 12);
  for (auto& v : h.data) v = rng.uniform();
  const Mask gt = oracle::random_mask(12, 12, rng, 0.4);
  Heatmap t = h;
  for (auto& v : t.data) v = std::exp(3 * v) / 50;
  CHECK(pixel_auc(h, gt) == doctest::Approx(pixel_auc(t, gt)).epsilon(1e-15));
}

TEST_CASE("detection metrics") {
  Rng rng(7);
  const Mask gt = oracle::random_mask(10, 10, rng, 0.3);
  Heatmap perfect(10, 10);
  for (size_t i = 0; i < gt.size(); ++i) perfect.data[i] = gt.data[i];
  auto r = detection_metrics(perfect, gt);
  CHECK(r.auc == 1.0);
  CHECK(r.f1 == 1.0);
  CHECK(r.flagged);

  r = detection_metrics(Heatmap(10, 10), gt);
  CHECK(r.auc == 0.5);
  CHECK(r.f1 == 0.0);
  CHECK(!r.flagged);

  // Coverage rule: 3 of 10 hole pixels detected is 30% > 25%; 2 of 10 is not.
  Mask ten(10, 10);
  for (int i = 0; i < 10; ++i) ten.data[i] = 1;
  Heatmap partial(10, 10);
  for (int i = 0; i < 3; ++i) partial.data[i] = 0.9;
  r = detection_metrics(partial, ten);
  CHECK(r.flagged);
  CHECK(r.f1 == doctest::Approx(2.0 * 3 / (2 * 3 + 0 + 7)));
  partial.data[2] = 0.1;
  CHECK(!detection_metrics(partial, ten).flagged);
  // False positives lower F1 but not coverage.
  for (int i = 50; i < 60; ++i) partial.data[i] = 1.0;
  r = detection_metrics(partial, ten);
  CHECK(r.f1 == doctest::Approx(2.0 * 2 / (2 * 2 + 10 + 8)));
  CHECK_THROWS(detection_metrics(partial, Mask(10, 10)));
  CHECK_THROWS(detection_metrics(partial, Mask(9, 10, 1)));

  const CorpusReport c = aggregate({{1.0, 1.0, true}, {0.5, 0.0, false}});
  CHECK(c.auc_mean == 0.75);
  CHECK(c.f1_mean == 0.5);
  CHECK(c.acc == 0.5);
  const auto j = to_json(c);
  CHECK(j.at("per_image").size() == 2);
  CHECK(j.at("acc") == 0.5);
  CHECK(j.at("per_image")[0].at("flagged") == true);
}

TEST_CASE("copy_fill smears known pixels into the hole") {
  Rng rng(8);
  const Image img = oracle::random_image(8, 8, 3, rng);
  Mask m(8, 8);
  m.at(3, 3) = m.at(3, 4) = 1;
  const Image out = copy_fill(img, m);
  CHECK(out.at(1, 3, 3) == img.at(1, 3, 2));
  CHECK(out.at(1, 3, 4) == img.at(1, 3, 5));
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      if (!m.at(y, x)) CHECK(out.at(0, y, x) == img.at(0, y, x));
}

TEST_CASE("patch detector") {
  Rng rng(9);
  std::vector<LabeledSample> train, test;
  for (int i = 0; i < 16; ++i) {
    Image img(32, 32, 3);
    // Smooth random gradients plus mild noise stand in for natural texture.
    const double a = rng.uniform(), b = rng.uniform(-0.02, 0.02), c = rng.uniform(-0.02, 0.02);
    for (int ch = 0; ch < 3; ++ch)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) img.at(ch, y, x) = std::clamp(a + b * y + c * x + rng.uniform(-0.1, 0.1), 0.0, 1.0);
    Mask m(32, 32);
    const int oy = rng.uniform_int(4, 16), ox = rng.uniform_int(4, 16);
    for (int y = oy; y < oy + 10; ++y)
      for (int x = ox; x < ox + 10; ++x) m.at(y, x) = 1;
    (i < 12 ? train : test).push_back({copy_fill(img, m), m});
  }
  CHECK_THROWS(train_patch_detector({}, 1));
  CHECK_THROWS(train_patch_detector({{train[0].image, Mask(32, 32)}}, 1));

  const PatchDetector untrained(3, 8);
  for (const auto& s : test) CHECK(detection_metrics(untrained.heatmap(s.image), s.mask).auc == 0.5);

  DetectorOptions opts;
  opts.steps = 400;
  const PatchDetector det = train_patch_detector(train, 3, opts);
  double auc = 0;
  for (const auto& s : test) auc += detection_metrics(det.heatmap(s.image), s.mask).auc;
  CHECK(auc / test.size() > 0.8);

  const PatchDetector again = train_patch_detector(train, 3, opts);
  CHECK(again.heatmap(test[0].image).data == det.heatmap(test[0].image).data);
}
