#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "grad_check.hpp"
#include "oracles.hpp"
#include "safepaint/losses.hpp"
#include "safepaint/masks.hpp"
#include "safepaint/models.hpp"

using namespace safepaint;
using namespace safepaint::nn;
using namespace safepaint::models;
using oracle::random_tensor;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.base_width = 4;
  c.residual_blocks = 1;
  c.disc_width = 4;
  c.extractor_width = 4;
  c.seed = 5;
  return c;
}

bool background_equal(const Image& a, const Image& b, const Mask& m) {
  for (int c = 0; c < a.channels; ++c)
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x)
        if (!m.at(y, x) && a.at(c, y, x) != b.at(c, y, x)) return false;
  return true;
}

}  // namespace

TEST_CASE("pipeline keeps the background exactly") {
  SafePaintModel model(small_config());
  Rng rng(1);
  for (int t = 0; t < 5; ++t) {
    const Image img = oracle::random_image(16, 16, 3, rng);
    const Mask m = oracle::random_mask(16, 16, rng, 0.3);
    const Image coarse = coarse_forward(model, img, m);
    CHECK(coarse.same_shape(img));
    CHECK(background_equal(coarse, img, m));
    const Image out = inpaint(model, img, m);
    CHECK(background_equal(out, img, m));
    for (double v : out.data) CHECK((v >= 0 && v <= 1));
  }
  // Batched training-mode forward too.
  const Tensor gt = random_tensor({2, 3, 16, 16}, rng, 0, 1);
  Tensor mask({2, 1, 16, 16});
  for (double& v : mask.data) v = rng.uniform() < 0.3;
  NoGradGuard guard;
  const auto o = model.forward(gt, mask, true);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int p = 0; p < 256; ++p)
        if (!mask.data[n * 256 + p]) {
          CHECK(o.refined->value.data[(n * 3 + c) * 256 + p] == gt.data[(n * 3 + c) * 256 + p]);
          CHECK(o.coarse->value.data[(n * 3 + c) * 256 + p] == gt.data[(n * 3 + c) * 256 + p]);
        }
}

TEST_CASE("generator shape contract") {
  SafePaintModel model(small_config());
  Rng rng(2);
  CHECK_THROWS_AS(coarse_forward(model, oracle::random_image(18, 16, 3, rng), Mask(18, 16, 1)), ShapeError);
  CHECK_THROWS_AS(coarse_forward(model, oracle::random_image(16, 16, 3, rng), Mask(16, 12)), ShapeError);
  NoGradGuard guard;
  const Var y = model.coarse.forward(constant(random_tensor({1, 4, 16, 24}, rng)), Tensor({1, 1, 16, 24}), false);
  CHECK(y->shape() == Shape{1, 3, 16, 24});
}

TEST_CASE("pattern map only influences the hole") {
  SafePaintModel model(small_config());
  Rng rng(3);
  const Image img = oracle::random_image(16, 16, 3, rng);
  const Mask m = oracle::random_mask(16, 16, rng, 0.4);
  DomainVector a{}, b{};
  for (int i = 0; i < kDomainDim; ++i) a[i] = rng.normal(), b[i] = rng.normal();
  const Image oa = refine_forward(model, img, m, pattern_map(a, 16, 16));
  const Image ob = refine_forward(model, img, m, pattern_map(b, 16, 16));
  CHECK(background_equal(oa, img, m));
  CHECK(background_equal(ob, img, m));
  CHECK(oa.data != ob.data);
  const Tensor pm = pattern_map(a, 4, 5);
  for (int c = 0; c < kDomainDim; ++c) CHECK(pm.at(0, c, 3, 4) == a[c]);
}

TEST_CASE("domain extractor looks only inside its region") {
  SafePaintModel model(small_config());
  Rng rng(4);
  for (int t = 0; t < 5; ++t) {
    Image img = oracle::random_image(32, 32, 3, rng);
    const Mask region = masks::generate_irregular(t + 1, {30, 40}, 32, 32);
    const DomainVector z = domain_extract(model, img, region);
    CHECK(z.size() == 16);
    CHECK(domain_extract(model, img, region) == z);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
          if (!region.at(y, x)) img.at(c, y, x) = rng.uniform();
    const DomainVector z2 = domain_extract(model, img, region);
    for (int i = 0; i < kDomainDim; ++i) CHECK(std::fabs(z[i] - z2[i]) < 1e-6);
  }
  CHECK_THROWS(domain_extract(model, Image(16, 16, 3), Mask(16, 16)));
}

TEST_CASE("discriminator shape and translation equivariance") {
  SafePaintModel model(small_config());
  Rng rng(5);
  const Image img = oracle::random_image(128, 128, 3, rng);
  const Tensor s = discriminate(model, img);
  CHECK(s.shape == Shape{1, 1, 16, 16});
  CHECK(discriminate(model, img).data == s.data);
  // Shift by one output cell (8 pixels) and compare cells whose receptive fields stay inside.
  Image shifted(128, 128, 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 128; ++y)
      for (int x = 0; x < 128; ++x) shifted.at(c, y, x) = img.at(c, y, (x + 120) % 128);
  const Tensor t = discriminate(model, shifted);
  for (int y = 3; y < 13; ++y)
    for (int x = 3; x < 12; ++x) CHECK(t.at(0, 0, y, x + 1) == doctest::Approx(s.at(0, 0, y, x)).epsilon(1e-12));
}

TEST_CASE("generator parameters receive gradients through both stages") {
  SafePaintModel model(small_config());
  Rng rng(6);
  const Tensor gt = random_tensor({2, 3, 16, 16}, rng, 0, 1);
  Tensor mask({2, 1, 16, 16});
  for (double& v : mask.data) v = rng.uniform() < 0.4;
  const auto o = model.forward(gt, mask, true);
  backward(losses::l1_loss(o.coarse, o.refined, constant(gt)));
  auto reg = model.generator_registry();
  for (const std::string prefix : {"g1.head.weight", "g1.tail.weight", "g2.head.weight", "g2.tail.weight", "p.head.weight"}) {
    bool found = false;
    for (auto& [name, v] : reg.params)
      if (name == prefix) {
        found = true;
        double norm = 0;
        for (double g : v->grad.data) norm += g * g;
        CHECK_MESSAGE(norm > 0, name);
      }
    CHECK_MESSAGE(found, prefix);
  }
}

TEST_CASE("feature pyramid") {
  const FeaturePyramid a, b;
  CHECK(a.weights[1].data == b.weights[1].data);
  const FeaturePyramid other(7);
  CHECK(other.weights[0].data != a.weights[0].data);
  Rng rng(7);
  NoGradGuard guard;
  const auto f = a.forward(constant(random_tensor({1, 3, 16, 16}, rng, 0, 1)));
  REQUIRE(f.size() == 3);
  CHECK(f[0]->shape() == Shape{1, 8, 16, 16});
  CHECK(f[1]->shape() == Shape{1, 16, 8, 8});
  CHECK(f[2]->shape() == Shape{1, 32, 4, 4});

  namespace fs = std::filesystem;
  const auto path = (fs::temp_directory_path() / "safepaint_pyramid.bin").string();
  other.save(path);
  FeaturePyramid loaded;
  loaded.load(path);
  CHECK(loaded.weights[2].data == other.weights[2].data);
  std::ofstream(path) << "not an archive\n";
  CHECK_THROWS(loaded.load(path));
}
