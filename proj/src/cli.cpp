#include "safepaint/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "safepaint/corpus.hpp"
#include "safepaint/evaluate.hpp"
#include "safepaint/io.hpp"
#include "safepaint/masks.hpp"
#include "safepaint/patch_detector.hpp"
#include "safepaint/train.hpp"

namespace safepaint::cli {

namespace fs = std::filesystem;

namespace {

// Raised for semantically invalid arguments that CLI11 cannot validate.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::vector<masks::MaskBucket> parse_buckets(const std::string& text) {
  std::vector<masks::MaskBucket> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      out.push_back(masks::parse_bucket(part));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (out.empty()) throw UsageError("no mask buckets given");
  return out;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << '\n';
}

std::vector<corpus::Item> load_corpus(const std::string& data, int synthetic, std::uint64_t seed, int size,
                                      bool held_out, double fraction) {
  if (data.empty() == (synthetic <= 0)) throw UsageError("give exactly one of --data or --synthetic");
  if (synthetic > 0) {
    const auto split = held_out ? corpus::synthetic_split(seed, 0, synthetic, size, fraction)
                                : corpus::synthetic_split(seed, synthetic, 0, size, fraction);
    return held_out ? split.held_out : split.train;
  }
  auto split = corpus::split_items(corpus::load_directory(data, size), seed, fraction);
  return held_out ? split.held_out : split.train;
}

struct MakeMasksArgs {
  std::uint64_t seed = 1;
  std::string bucket;
  int size = 64;
  int count = 1;
  std::string out;
};

int make_masks(const MakeMasksArgs& a, std::ostream& out) {
  const auto bucket = parse_buckets(a.bucket);
  if (bucket.size() != 1) throw UsageError("make-masks takes a single bucket");
  if (a.count == 1 && fs::path(a.out).extension() == ".png") {
    if (auto parent = fs::path(a.out).parent_path(); !parent.empty()) fs::create_directories(parent);
    io::write_mask_png(a.out, masks::generate_irregular(a.seed, bucket[0], a.size, a.size));
    out << a.out << '\n';
    return kExitOk;
  }
  fs::create_directories(a.out);
  for (int i = 0; i < a.count; ++i) {
    const Mask m = masks::generate_irregular(derive_seed(a.seed, static_cast<std::uint64_t>(i)), bucket[0], a.size, a.size);
    char name[64];
    std::snprintf(name, sizeof name, "mask_%s_%04d.png", bucket[0].label().c_str(), i);
    io::write_mask_png((fs::path(a.out) / name).string(), m);
  }
  out << "wrote " << a.count << " masks to " << a.out << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string config, data, out;
  int synthetic = 0;
  int steps = -1;
  bool resume = false;
};

int train_cmd(const TrainArgs& a, std::ostream& out) {
  train::TrainConfig cfg = a.config.empty() ? train::TrainConfig{} : train::load_config(a.config);
  train::apply_environment(cfg);
  if (a.steps >= 0) cfg.steps = a.steps;
  fs::create_directories(a.out);
  const std::string ckpt = (fs::path(a.out) / "checkpoint.ckpt").string();
  const std::string log_path = (fs::path(a.out) / "train_log.jsonl").string();

  std::vector<Image> images;
  for (auto& it : load_corpus(a.data, a.synthetic, cfg.seed, cfg.image_size, false, 0.2)) images.push_back(std::move(it.image));

  if (a.resume) {
    train::Trainer t = train::Trainer::resume(ckpt, std::move(images), cfg.steps);
    // Keep only log lines the checkpoint already accounts for.
    std::vector<std::string> kept;
    {
      std::ifstream in(log_path);
      std::string line;
      while (std::getline(in, line))
        if (!line.empty() && nlohmann::json::parse(line).at("step").get<long long>() <= t.completed_steps())
          kept.push_back(line);
    }
    std::ofstream log(log_path, std::ios::trunc);
    for (const auto& l : kept) log << l << '\n';
    t.run(log, ckpt);
    out << "resumed at step " << kept.size() << ", finished at step " << t.completed_steps() << '\n';
    return kExitOk;
  }
  std::ofstream(fs::path(a.out) / "config.txt") << train::format_config(cfg);
  train::Trainer t(cfg, std::move(images));
  std::ofstream log(log_path, std::ios::trunc);
  t.run(log, ckpt);
  out << "trained " << t.completed_steps() << " steps; checkpoint " << ckpt << '\n';
  return kExitOk;
}

struct InpaintArgs {
  std::string ckpt, image, mask, method = "safepaint", out;
};

int inpaint_cmd(const InpaintArgs& a, std::ostream& out) {
  eval::Method method;
  try {
    method = eval::parse_method(a.method);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const bool learned = method == eval::Method::SafePaint || method == eval::Method::Stage1;
  if (learned && a.ckpt.empty()) throw UsageError("--ckpt is required for method " + a.method);
  Image img = io::read_png(a.image);
  const Mask m = io::read_mask_png(a.mask);
  if (learned) img = to_rgb(img);
  std::unique_ptr<models::SafePaintModel> model;
  if (learned) model = std::make_unique<models::SafePaintModel>(train::load_model(a.ckpt));
  const Image result = eval::run_method(method, model.get(), img, m);
  if (auto parent = fs::path(a.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  io::write_png(a.out, result);
  out << a.out << '\n';
  return kExitOk;
}

struct DetectArgs {
  std::string image, mask, probe, out_heatmap, out_report, detector;
  int window = 5;
  int patch = 7, stride = 2;
  double tau = 0.05;
};

int detect_cmd(const DetectArgs& a, std::ostream& out) {
  const Image img = io::read_png(a.image);
  const Mask m = io::read_mask_png(a.mask);
  nlohmann::json report = {{"probe", a.probe}, {"image", a.image}};
  probes::Heatmap h;
  if (a.probe == "kl") {
    if (!a.out_heatmap.empty()) throw UsageError("the kl probe produces no heatmap");
    report["kl_gap"] = probes::kl_domain_gap(img, m);
  } else {
    if (a.probe == "variance") h = probes::local_variance_map(img, a.window);
    else if (a.probe == "similarity") h = probes::patch_similarity_map(img, {a.patch, a.stride, a.tau});
    else if (a.probe == "learned") {
      if (a.detector.empty()) throw UsageError("--detector is required for the learned probe");
      h = probes::PatchDetector::load(a.detector).heatmap(img);
    } else {
      throw UsageError("unknown probe '" + a.probe + "'");
    }
    report["detection"] = probes::to_json(probes::detection_metrics(h, m));
    if (!a.out_heatmap.empty()) {
      if (auto parent = fs::path(a.out_heatmap).parent_path(); !parent.empty()) fs::create_directories(parent);
      io::write_png(a.out_heatmap, h.to_image());
    }
  }
  if (!a.out_report.empty()) write_json(a.out_report, report);
  else out << report.dump(2) << '\n';
  return kExitOk;
}

struct EvaluateArgs {
  std::string ckpt, data, buckets = "30-40", out_report, methods = "stage1,safepaint,diffusion,exemplar", save_detector;
  int synthetic = 0;
  int jpeg_qf = 0;
  int detector_images = 20;
  std::uint64_t seed = 1;
  double held_out_fraction = 0.2;
};

int evaluate_cmd(const EvaluateArgs& a, std::ostream& out) {
  eval::EvalOptions opts;
  opts.buckets = parse_buckets(a.buckets);
  opts.jpeg_qf = a.jpeg_qf;
  opts.seed = a.seed;
  opts.methods.clear();
  std::stringstream ss(a.methods);
  for (std::string m; std::getline(ss, m, ',');) {
    try {
      opts.methods.push_back(eval::parse_method(m));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  std::unique_ptr<models::SafePaintModel> model;
  int size = 64;
  if (!a.ckpt.empty()) {
    if (!fs::exists(a.ckpt)) throw std::runtime_error("checkpoint not found: " + a.ckpt);
    model = std::make_unique<models::SafePaintModel>(train::load_model(a.ckpt));
  }
  const auto held_out = load_corpus(a.data, a.synthetic, a.seed, size, true, a.held_out_fraction);
  auto detector_items = load_corpus(a.data, a.synthetic > 0 ? a.detector_images : 0, a.seed, size, false, a.held_out_fraction);
  if (detector_items.size() > static_cast<size_t>(a.detector_images)) detector_items.resize(a.detector_images);
  const auto report = eval::antiforensic_eval(model.get(), held_out, detector_items, opts);
  write_json(a.out_report, report);
  out << a.out_report << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"SafePaint anti-forensic inpainting toolkit", "safepaint"};
  app.require_subcommand(1, 1);

  MakeMasksArgs mm;
  auto* c_masks = app.add_subcommand("make-masks", "Generate seeded free-form masks in a ratio bucket");
  c_masks->add_option("--seed", mm.seed, "Random seed")->required();
  c_masks->add_option("--bucket", mm.bucket, "Hole ratio bucket, e.g. 30-40")->required();
  c_masks->add_option("--size", mm.size, "Mask side length")->check(CLI::Range(16, 4096));
  c_masks->add_option("--count", mm.count, "Number of masks")->check(CLI::PositiveNumber);
  c_masks->add_option("--out", mm.out, "Output PNG (count 1) or directory")->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the two-stage model");
  c_train->add_option("--config", tr.config, "key = value config file")->check(CLI::ExistingFile);
  c_train->add_option("--data", tr.data, "Directory of PNG training images")->check(CLI::ExistingDirectory);
  c_train->add_option("--synthetic", tr.synthetic, "Use N generated texture images instead of --data");
  c_train->add_option("--out", tr.out, "Output directory (log, checkpoint)")->required();
  c_train->add_option("--steps", tr.steps, "Override the configured step count");
  c_train->add_flag("--resume", tr.resume, "Continue from <out>/checkpoint.ckpt");

  InpaintArgs ip;
  auto* c_inpaint = app.add_subcommand("inpaint", "Fill the masked region of an image");
  c_inpaint->add_option("--ckpt", ip.ckpt, "Checkpoint (safepaint and stage1 methods)");
  c_inpaint->add_option("--image", ip.image, "Input PNG")->required()->check(CLI::ExistingFile);
  c_inpaint->add_option("--mask", ip.mask, "Mask PNG, white = hole")->required()->check(CLI::ExistingFile);
  c_inpaint->add_option("--method", ip.method, "safepaint | stage1 | diffusion | exemplar")
      ->check(CLI::IsMember({"safepaint", "stage1", "diffusion", "exemplar"}));
  c_inpaint->add_option("--out", ip.out, "Output PNG")->required();

  DetectArgs dt;
  auto* c_detect = app.add_subcommand("detect", "Run a forensic probe");
  c_detect->add_option("--image", dt.image, "Input PNG")->required()->check(CLI::ExistingFile);
  c_detect->add_option("--mask", dt.mask, "Ground-truth mask PNG")->required()->check(CLI::ExistingFile);
  c_detect->add_option("--probe", dt.probe, "kl | variance | similarity | learned")
      ->required()
      ->check(CLI::IsMember({"kl", "variance", "similarity", "learned"}));
  c_detect->add_option("--out-heatmap", dt.out_heatmap, "Heatmap PNG");
  c_detect->add_option("--out-report", dt.out_report, "Report JSON (stdout when omitted)");
  c_detect->add_option("--detector", dt.detector, "Trained detector (learned probe)")->check(CLI::ExistingFile);
  c_detect->add_option("--window", dt.window, "Variance window (odd)");
  c_detect->add_option("--patch", dt.patch, "Similarity patch size (odd)");
  c_detect->add_option("--stride", dt.stride, "Similarity grid stride");
  c_detect->add_option("--tau", dt.tau, "Similarity SSD scale");

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Anti-forensic comparison over held-out images");
  c_eval->add_option("--ckpt", ev.ckpt, "Checkpoint (needed for stage1 and safepaint)");
  c_eval->add_option("--data", ev.data, "Directory of PNG images")->check(CLI::ExistingDirectory);
  c_eval->add_option("--synthetic", ev.synthetic, "Use N generated held-out images instead of --data");
  c_eval->add_option("--buckets", ev.buckets, "Comma-separated buckets, e.g. 10-20,30-40");
  c_eval->add_option("--jpeg-qf", ev.jpeg_qf, "JPEG quality applied before scoring (0 = off)")->check(CLI::Range(0, 100));
  c_eval->add_option("--methods", ev.methods, "Comma-separated methods");
  c_eval->add_option("--seed", ev.seed, "Split and mask seed");
  c_eval->add_option("--detector-images", ev.detector_images, "Training images for the learned probe");
  c_eval->add_option("--out-report", ev.out_report, "Report JSON")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    const std::string name = sub->get_name();
    if (name == "make-masks") return make_masks(mm, out);
    if (name == "train") return train_cmd(tr, out);
    if (name == "inpaint") return inpaint_cmd(ip, out);
    if (name == "detect") return detect_cmd(dt, out);
    return evaluate_cmd(ev, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << sub->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace safepaint::cli
