#include <doctest.h>

#include <filesystem>

#include "oracles.hpp"
#include "safepaint/io.hpp"
#include "safepaint/masks.hpp"

using namespace safepaint;

TEST_CASE("make_input fills the hole with ones and keeps the rest") {
  Image gt(2, 2, 1, 0.25);
  Mask m(2, 2);
  m.at(0, 0) = 1;
  const Image in = masks::make_input(gt, m);
  CHECK(in.at(0, 0, 0) == 1.0);
  CHECK(in.at(0, 0, 1) == 0.25);
  CHECK(in.at(0, 1, 0) == 0.25);
  CHECK(in.at(0, 1, 1) == 0.25);

  CHECK(masks::make_input(gt, Mask(2, 2, 0)).data == gt.data);
  for (double v : masks::make_input(gt, Mask(2, 2, 1)).data) CHECK(v == 1.0);
  CHECK_THROWS_AS(masks::make_input(gt, Mask(3, 2)), ShapeError);
}

TEST_CASE("composite keeps known pixels bit-exact") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Image gt = oracle::random_image(16, 16, 3, rng);
    const Image gen = oracle::random_image(16, 16, 3, rng);
    const Mask m = oracle::random_mask(16, 16, rng);
    const Image out = masks::composite(gt, m, gen);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) CHECK(out.at(c, y, x) == (m.at(y, x) ? gen.at(c, y, x) : gt.at(c, y, x)));
  }
}

TEST_CASE("mask complement and ratio") {
  Rng rng(3);
  const Mask m = oracle::random_mask(9, 11, rng);
  CHECK(m.complement().complement() == m);
  CHECK(m.ratio() + m.complement().ratio() == doctest::Approx(1.0));
  CHECK(Mask(4, 4, 1).ratio() == 1.0);
  CHECK(Mask(4, 4, 0).ratio() == 0.0);
}

TEST_CASE("bucket parsing") {
  CHECK(masks::parse_bucket("30-40") == masks::MaskBucket{30, 40});
  CHECK(masks::parse_bucket("30%-40%") == masks::MaskBucket{30, 40});
  CHECK(masks::parse_bucket("90") == masks::MaskBucket{90, 100});
  CHECK(masks::parse_bucket("30-40").label() == "30-40");
  for (const char* bad : {"", "30-50", "35-45", "100-110", "-10-0", "abc", "30-", "0,1"})
    CHECK_THROWS_AS(masks::parse_bucket(bad), std::invalid_argument);
}

TEST_CASE("buckets tile the unit interval") {
  for (int i = 0; i <= 1000; ++i) {
    const double r = i / 1000.0;
    int hits = 0;
    for (int lo = 0; lo < 100; lo += 10) hits += masks::MaskBucket{lo, lo + 10}.contains(r);
    CHECK(hits == 1);
  }
}

TEST_CASE("ratio_bucket") {
  Mask m(10, 10);
  for (int i = 0; i < 35; ++i) m.data[i] = 1;
  CHECK(masks::ratio_bucket(m) == masks::MaskBucket{30, 40});
  CHECK(masks::ratio_bucket(Mask(10, 10, 1)) == masks::MaskBucket{90, 100});
  CHECK(masks::ratio_bucket(Mask(10, 10, 0)) == masks::MaskBucket{0, 10});
}

TEST_CASE("irregular masks land in their bucket and are reproducible") {
  for (int lo = 0; lo < 70; lo += 10) {
    const masks::MaskBucket b{lo, lo + 10};
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const Mask m = masks::generate_irregular(seed, b, 64, 64);
      CHECK(b.contains(m.ratio()));
      CHECK(masks::generate_irregular(seed, b, 64, 64) == m);
    }
  }
  CHECK(masks::generate_irregular(1, {30, 40}, 64, 64) != masks::generate_irregular(2, {30, 40}, 64, 64));
  CHECK_THROWS(masks::generate_irregular(1, {30, 40}, 8, 8));
}

TEST_CASE("nearest resize keeps masks binary") {
  Rng rng(5);
  const Mask m = oracle::random_mask(16, 16, rng);
  const Mask r = masks::resize_nearest(m, 8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) CHECK(r.at(y, x) == m.at(2 * y, 2 * x));
  CHECK(masks::resize_nearest(m, 16, 16) == m);
}

TEST_CASE("png round trips") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "safepaint_test_io";
  fs::create_directories(dir);
  Rng rng(11);
  Image img = oracle::random_image(12, 9, 3, rng);
  for (double& v : img.data) v = io::quantize(v) / 255.0;
  io::write_png((dir / "a.png").string(), img);
  const Image back = io::read_png((dir / "a.png").string());
  REQUIRE(back.same_shape(img));
  for (size_t i = 0; i < img.data.size(); ++i) CHECK(back.data[i] == doctest::Approx(img.data[i]).epsilon(1e-12));

  const Mask m = oracle::random_mask(12, 9, rng);
  io::write_mask_png((dir / "m.png").string(), m);
  CHECK(io::read_mask_png((dir / "m.png").string()) == m);
  CHECK_THROWS(io::read_png((dir / "missing.png").string()));
}

TEST_CASE("composite corner cases") {
  Image gt(8, 8, 3, 0.2), gen(8, 8, 3, 0.8);
  CHECK(masks::composite(gt, Mask(8, 8, 0), gen).data == gt.data);
  CHECK(masks::composite(gt, Mask(8, 8, 1), gen).data == gen.data);
  Mask half(8, 8);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 8; ++x) half.at(y, x) = 1;
  const Image out = masks::composite(gt, half, gen);
  double mean = 0;
  for (double v : out.data) mean += v;
  CHECK(mean / out.data.size() == doctest::Approx(0.5));
  Rng rng(2);
  const Image img = oracle::random_image(8, 8, 3, rng);
  CHECK(masks::composite(img, oracle::random_mask(8, 8, rng), img).data == img.data);
  CHECK_THROWS_AS(masks::composite(gt, half, Image(8, 8, 1)), ShapeError);
}

TEST_CASE("ratio_bucket examples") {
  Mask m(64, 64);
  for (int i = 0; i < 1434; ++i) m.data[i] = 1;
  CHECK(masks::ratio_bucket(m) == masks::MaskBucket{30, 40});
  Mask f(20, 20);
  for (int i = 0; i < 60; ++i) f.data[i] = 1;
  CHECK(masks::ratio_bucket(f) == masks::MaskBucket{10, 20});
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    const Mask r = oracle::random_mask(17, 13, rng, rng.uniform());
    size_t ones = 0;
    for (auto v : r.data) ones += v;
    const int expect = std::min(static_cast<int>(ones * 10 / r.data.size()) * 10, 90);
    CHECK(masks::ratio_bucket(r).lower == expect);
  }
  CHECK(masks::generate_irregular(1, {0, 10}, 64, 64).ratio() < 0.10);
}
