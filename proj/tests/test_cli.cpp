#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "safepaint/cli.hpp"
#include "safepaint/corpus.hpp"
#include "safepaint/io.hpp"
#include "safepaint/masks.hpp"

using namespace safepaint;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch() {
  const auto dir = fs::temp_directory_path() / "safepaint_cli_tests";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}).code == 2);
  CHECK(run({"paint"}).code == 2);
  CHECK(run({"make-masks", "--seed", "1", "--bucket", "30-45", "--out", (scratch() / "m.png").string()}).code == 2);
  CHECK(run({"make-masks", "--seed", "1"}).code == 2);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("make-masks writes masks in the requested bucket") {
  const auto path = (scratch() / "mask.png").string();
  REQUIRE(run({"make-masks", "--seed", "3", "--bucket", "30-40", "--size", "64", "--out", path}).code == 0);
  const Mask m = io::read_mask_png(path);
  CHECK(masks::ratio_bucket(m).lower == 30);

  const auto dir = scratch() / "masks";
  fs::remove_all(dir);
  REQUIRE(run({"make-masks", "--seed", "3", "--bucket", "10-20", "--size", "32", "--count", "3", "--out", dir.string()}).code == 0);
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ".png";
  CHECK(n == 3);
}

TEST_CASE("inpaint and detect") {
  const auto dir = scratch();
  const auto img_path = (dir / "img.png").string();
  const auto mask_path = (dir / "hole.png").string();
  const auto out_path = (dir / "filled.png").string();
  const Image img = corpus::synth_texture(8, 32);
  io::write_png(img_path, img);
  REQUIRE(run({"make-masks", "--seed", "4", "--bucket", "20-30", "--size", "32", "--out", mask_path}).code == 0);

  REQUIRE(run({"inpaint", "--image", img_path, "--mask", mask_path, "--method", "diffusion", "--out", out_path}).code == 0);
  const Image stored = io::read_png(img_path), filled = io::read_png(out_path);
  const Mask m = io::read_mask_png(mask_path);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (!m.at(y, x)) CHECK(filled.at(c, y, x) == stored.at(c, y, x));

  // The learned methods need a checkpoint.
  CHECK(run({"inpaint", "--image", img_path, "--mask", mask_path, "--method", "safepaint", "--out", out_path}).code == 2);

  const auto kl = run({"detect", "--image", out_path, "--mask", mask_path, "--probe", "kl"});
  REQUIRE(kl.code == 0);
  const auto j = nlohmann::json::parse(kl.out);
  CHECK(j["kl_gap"].get<double>() >= 0);
  CHECK(run({"detect", "--image", out_path, "--mask", mask_path, "--probe", "kl", "--out-heatmap", (dir / "h.png").string()}).code == 2);

  const auto heat = (dir / "heat.png").string();
  const auto rep = (dir / "rep.json").string();
  REQUIRE(run({"detect", "--image", out_path, "--mask", mask_path, "--probe", "variance", "--out-heatmap", heat, "--out-report", rep}).code == 0);
  CHECK(io::read_png(heat).width == 32);
  std::ifstream in(rep);
  const auto r = nlohmann::json::parse(in);
  CHECK(r["detection"].contains("auc"));
  CHECK(run({"detect", "--image", out_path, "--mask", mask_path, "--probe", "learned"}).code == 2);
  CHECK(run({"detect", "--image", (dir / "missing.png").string(), "--mask", mask_path, "--probe", "kl"}).code == 2);
}

TEST_CASE("train, inpaint with the checkpoint, and evaluate") {
  const auto dir = scratch() / "run";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto cfg = (dir / "tiny.cfg").string();
  std::ofstream(cfg) << "image_size = 32\nbatch = 2\nbase_width = 4\nresidual_blocks = 1\ndisc_width = 4\n"
                        "extractor_width = 4\nmask_pool = 4\nsteps = 2\n";
  REQUIRE(run({"train", "--config", cfg, "--synthetic", "4", "--out", dir.string()}).code == 0);
  CHECK(fs::exists(dir / "checkpoint.ckpt"));
  CHECK(fs::exists(dir / "train_log.jsonl"));
  REQUIRE(run({"train", "--config", cfg, "--synthetic", "4", "--out", dir.string(), "--steps", "3", "--resume"}).code == 0);
  std::ifstream log(dir / "train_log.jsonl");
  int lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  CHECK(lines == 3);

  const auto img_path = (dir / "img.png").string();
  const auto mask_path = (dir / "hole.png").string();
  io::write_png(img_path, corpus::synth_texture(8, 32));
  REQUIRE(run({"make-masks", "--seed", "4", "--bucket", "20-30", "--size", "32", "--out", mask_path}).code == 0);
  CHECK(run({"inpaint", "--ckpt", (dir / "checkpoint.ckpt").string(), "--image", img_path, "--mask", mask_path,
             "--method", "safepaint", "--out", (dir / "sp.png").string()})
            .code == 0);

  const auto report = (dir / "eval.json").string();
  REQUIRE(run({"evaluate", "--ckpt", (dir / "checkpoint.ckpt").string(), "--synthetic", "2", "--buckets", "10-20",
               "--methods", "safepaint,diffusion", "--detector-images", "2", "--out-report", report})
              .code == 0);
  std::ifstream in(report);
  const auto j = nlohmann::json::parse(in);
  CHECK(j["methods"].contains("safepaint"));
  CHECK_FALSE(j["methods"].contains("exemplar"));
}
