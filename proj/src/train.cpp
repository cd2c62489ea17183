#include "safepaint/train.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "safepaint/archive.hpp"
#include "safepaint/masks.hpp"

namespace safepaint::train {

using nn::Tensor;
using nn::Var;

models::ModelConfig TrainConfig::model_config() const {
  models::ModelConfig m;
  m.base_width = base_width;
  m.residual_blocks = residual_blocks;
  m.disc_width = disc_width;
  m.extractor_width = extractor_width;
  m.rwsa_reduction = rwsa_reduction;
  m.rwsa = rwsa;
  m.instance_norm = instance_norm;
  m.seed = seed;
  return m;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (!(lr > 0)) fail("lr must be > 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) fail("adam_betas must lie in [0,1)");
  if (batch < 1) fail("batch must be >= 1");
  if (steps < 0) fail("steps must be >= 0");
  if (image_size < 16 || image_size % 4 != 0) fail("image_size must be a multiple of 4, at least 16");
  if (base_width < 4 || disc_width < 1 || extractor_width < 1) fail("network widths too small");
  if (residual_blocks < 0) fail("residual_blocks must be >= 0");
  if (rwsa_reduction < 1) fail("rwsa_reduction must be >= 1");
  if (mask_min < 0 || mask_max > 100 || mask_min % 10 || mask_max % 10 || mask_min >= mask_max)
    fail("mask_min/mask_max must be multiples of 10 with 0 <= mask_min < mask_max <= 100");
  if (mask_pool < 1) fail("mask_pool must be >= 1");
  if (checkpoint_every < 1) fail("checkpoint_every must be >= 1");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw std::invalid_argument("train config: " + key + " expects a number, got '" + v + "'");
  return d;
}

long long to_int(const std::string& key, const std::string& v) {
  size_t used = 0;
  long long i = 0;
  try {
    i = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw std::invalid_argument("train config: " + key + " expects an integer, got '" + v + "'");
  return i;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("train config: " + key + " expects true/false, got '" + v + "'");
}

}  // namespace

TrainConfig parse_config(const std::string& text, TrainConfig c) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("train config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
    if (key == "lr") c.lr = to_double(key, v);
    else if (key == "adam_betas") {
      const auto comma = v.find(',');
      if (comma == std::string::npos) throw std::invalid_argument("train config: adam_betas expects 'b1, b2'");
      c.beta1 = to_double(key, trim(v.substr(0, comma)));
      c.beta2 = to_double(key, trim(v.substr(comma + 1)));
    } else if (key == "batch") c.batch = static_cast<int>(to_int(key, v));
    else if (key == "steps") c.steps = static_cast<int>(to_int(key, v));
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_int(key, v));
    else if (key == "image_size") c.image_size = static_cast<int>(to_int(key, v));
    else if (key == "w_l1") c.weights.l1 = to_double(key, v);
    else if (key == "w_per") c.weights.per = to_double(key, v);
    else if (key == "w_sty") c.weights.sty = to_double(key, v);
    else if (key == "w_adv") c.weights.adv = to_double(key, v);
    else if (key == "w_dom") c.weights.dom = to_double(key, v);
    else if (key == "base_width") c.base_width = static_cast<int>(to_int(key, v));
    else if (key == "residual_blocks") c.residual_blocks = static_cast<int>(to_int(key, v));
    else if (key == "disc_width") c.disc_width = static_cast<int>(to_int(key, v));
    else if (key == "extractor_width") c.extractor_width = static_cast<int>(to_int(key, v));
    else if (key == "rwsa_reduction") c.rwsa_reduction = static_cast<int>(to_int(key, v));
    else if (key == "rwsa") c.rwsa = to_bool(key, v);
    else if (key == "instance_norm") c.instance_norm = to_bool(key, v);
    else if (key == "dom_trains_extractor") c.dom_trains_extractor = to_bool(key, v);
    else if (key == "mask_min") c.mask_min = static_cast<int>(to_int(key, v));
    else if (key == "mask_max") c.mask_max = static_cast<int>(to_int(key, v));
    else if (key == "mask_pool") c.mask_pool = static_cast<int>(to_int(key, v));
    else if (key == "checkpoint_every") c.checkpoint_every = static_cast<int>(to_int(key, v));
    else throw std::invalid_argument("train config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const TrainConfig& c) {
  std::ostringstream o;
  o.precision(17);
  o << "lr = " << c.lr << "\nadam_betas = " << c.beta1 << ", " << c.beta2 << "\nbatch = " << c.batch
    << "\nsteps = " << c.steps << "\nseed = " << c.seed << "\nimage_size = " << c.image_size
    << "\nw_l1 = " << c.weights.l1 << "\nw_per = " << c.weights.per << "\nw_sty = " << c.weights.sty
    << "\nw_adv = " << c.weights.adv << "\nw_dom = " << c.weights.dom << "\nbase_width = " << c.base_width
    << "\nresidual_blocks = " << c.residual_blocks << "\ndisc_width = " << c.disc_width
    << "\nextractor_width = " << c.extractor_width << "\nrwsa_reduction = " << c.rwsa_reduction
    << "\nrwsa = " << (c.rwsa ? "true" : "false") << "\ninstance_norm = " << (c.instance_norm ? "true" : "false")
    << "\nmask_min = " << c.mask_min << "\nmask_max = " << c.mask_max
    << "\nmask_pool = " << c.mask_pool << "\ncheckpoint_every = " << c.checkpoint_every
    << "\ndom_trains_extractor = " << (c.dom_trains_extractor ? "true" : "false") << "\n";
  return o.str();
}

void apply_environment(TrainConfig& cfg) {
  const char* env = std::getenv("SAFEPAINT_SEED");
  if (!env || !*env) return;
  cfg.seed = static_cast<std::uint64_t>(to_int("SAFEPAINT_SEED", env));
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"adam_betas", {c.beta1, c.beta2}},
          {"batch", c.batch},
          {"steps", c.steps},
          {"seed", c.seed},
          {"image_size", c.image_size},
          {"weights", {{"l1", c.weights.l1}, {"per", c.weights.per}, {"sty", c.weights.sty}, {"adv", c.weights.adv}, {"dom", c.weights.dom}}},
          {"base_width", c.base_width},
          {"residual_blocks", c.residual_blocks},
          {"disc_width", c.disc_width},
          {"extractor_width", c.extractor_width},
          {"rwsa_reduction", c.rwsa_reduction},
          {"rwsa", c.rwsa},
          {"instance_norm", c.instance_norm},
          {"mask_min", c.mask_min},
          {"mask_max", c.mask_max},
          {"mask_pool", c.mask_pool},
          {"checkpoint_every", c.checkpoint_every},
          {"dom_trains_extractor", c.dom_trains_extractor}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lr = j.at("lr");
  c.beta1 = j.at("adam_betas").at(0);
  c.beta2 = j.at("adam_betas").at(1);
  c.batch = j.at("batch");
  c.steps = j.at("steps");
  c.seed = j.at("seed");
  c.image_size = j.at("image_size");
  const auto& w = j.at("weights");
  c.weights = {w.at("l1"), w.at("per"), w.at("sty"), w.at("adv"), w.at("dom")};
  c.base_width = j.at("base_width");
  c.residual_blocks = j.at("residual_blocks");
  c.disc_width = j.at("disc_width");
  c.extractor_width = j.at("extractor_width");
  c.rwsa_reduction = j.at("rwsa_reduction");
  c.rwsa = j.at("rwsa");
  c.instance_norm = j.value("instance_norm", false);
  c.mask_min = j.at("mask_min");
  c.mask_max = j.at("mask_max");
  c.mask_pool = j.at("mask_pool");
  c.checkpoint_every = j.at("checkpoint_every");
  c.dom_trains_extractor = j.value("dom_trains_extractor", true);
  c.validate();
  return c;
}

namespace {

double batch_variance(const Tensor& z) {
  const int n = z.shape.n, d = z.shape.c;
  if (n < 2) return 0;
  double total = 0;
  for (int k = 0; k < d; ++k) {
    double mean = 0;
    for (int i = 0; i < n; ++i) mean += z.at(i, k, 0, 0);
    mean /= n;
    double var = 0;
    for (int i = 0; i < n; ++i) var += (z.at(i, k, 0, 0) - mean) * (z.at(i, k, 0, 0) - mean);
    total += var / n;
  }
  return total / d;
}

}  // namespace

losses::LossReport train_step(models::SafePaintModel& model, nn::Adam& opt_g, nn::Adam& opt_d,
                              const models::FeaturePyramid& pyramid, const Tensor& gt, const Tensor& mask,
                              const losses::LossWeights& weights, bool dom_trains_extractor) {
  const models::PipelineOutputs out = model.forward(gt, mask, true);
  const Var real = nn::constant(gt);

  // Discriminator update on detached fakes.
  opt_d.zero_grad();
  const auto d_terms = losses::adversarial_losses(model.disc.forward(real, true), model.disc.forward(nn::detach(out.refined), true));
  const double adv_d = d_terms.d_loss->value.item();
  if (!std::isfinite(adv_d)) throw std::runtime_error("train_step: non-finite adv_d loss");
  nn::backward(d_terms.d_loss);
  opt_d.step();

  // Joint generator / extractor update.
  opt_g.zero_grad();
  Tensor keep(mask.shape);
  for (size_t i = 0; i < keep.numel(); ++i) keep.data[i] = 1.0 - mask.data[i];
  losses::GeneratorTerms terms;
  terms.l1 = losses::l1_loss(out.coarse, out.refined, real);
  const auto f_coarse = pyramid.forward(out.coarse), f_refined = pyramid.forward(out.refined), f_gt = pyramid.forward(real);
  terms.per = losses::perceptual_loss(f_coarse, f_refined, f_gt);
  terms.sty = losses::style_loss(f_coarse, f_refined, f_gt);
  const Var fake_logits = model.disc.forward(out.refined, false);
  terms.adv_g = nn::bce_with_logits(fake_logits, 1.0);
  // Z_b = P(I_c, known) equals P(I_gt, known) because I_c keeps the known pixels verbatim.
  const models::DomainExtractor p = dom_trains_extractor ? model.extractor : model.extractor.detached();
  const Var z_out = p.forward(out.refined, mask);
  const Var z_gt = p.forward(real, mask);
  const Var z_b = dom_trains_extractor ? out.z_background : nn::detach(out.z_background);
  terms.dom = losses::domain_distance_loss(z_out, z_b, z_gt);
  const Var total = losses::total_loss(terms, weights);

  losses::LossReport report{{"l1", terms.l1->value.item()},   {"per", terms.per->value.item()},
                            {"sty", terms.sty->value.item()}, {"adv_d", adv_d},
                            {"adv_g", terms.adv_g->value.item()}, {"dom", terms.dom->value.item()},
                            {"total", total->value.item()}};
  for (const char* key : {"l1", "per", "sty", "adv_g", "dom", "total"})
    if (!std::isfinite(report[key])) throw std::runtime_error(std::string("train_step: non-finite ") + key + " loss");

  const double zb_var = batch_variance(out.z_background->value);
  if (gt.shape.n >= 2 && zb_var <= 1e-6)
    throw std::runtime_error("train_step: domain extractor collapsed (Z_b batch variance " + std::to_string(zb_var) + ")");
  report["zb_var"] = zb_var;

  nn::backward(total);
  opt_g.step();
  opt_d.zero_grad();  // the generator pass also reached the discriminator weights
  return report;
}

Trainer::Trainer(const TrainConfig& cfg, std::vector<Image> images)
    : cfg_(cfg), images_(std::move(images)), model_(cfg.model_config()) {
  cfg_.validate();
  if (images_.empty()) throw std::invalid_argument("Trainer: corpus is empty");
  if (static_cast<int>(images_.size()) < cfg_.batch)
    throw std::invalid_argument("Trainer: corpus smaller than the batch size");
  for (auto& img : images_) {
    img = to_rgb(img);
    if (img.height != cfg_.image_size || img.width != cfg_.image_size)
      throw ShapeError("Trainer: corpus images must be " + std::to_string(cfg_.image_size) + " square");
  }
  const int buckets = (cfg_.mask_max - cfg_.mask_min) / 10;
  for (int i = 0; i < cfg_.mask_pool; ++i) {
    const int lower = cfg_.mask_min + 10 * (i % buckets);
    masks_.push_back(masks::generate_irregular(derive_seed(cfg_.seed, 0x3a5c0000ULL + i), {lower, lower + 10},
                                               cfg_.image_size, cfg_.image_size));
  }
  const nn::AdamOptions opts{cfg_.lr, cfg_.beta1, cfg_.beta2, 1e-8};
  opt_g_ = nn::Adam(model_.generator_registry().params, opts);
  opt_d_ = nn::Adam(model_.discriminator_registry().params, opts);
}

nlohmann::json Trainer::step() {
  Rng rng(derive_seed(cfg_.seed, 0x57e90000000ULL + static_cast<std::uint64_t>(step_)));
  std::vector<Image> batch;
  std::vector<Mask> batch_masks;
  for (int b = 0; b < cfg_.batch; ++b) {
    batch.push_back(images_[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(images_.size()) - 1))]);
    batch_masks.push_back(masks_[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(masks_.size()) - 1))]);
  }
  const auto report = train_step(model_, opt_g_, opt_d_, pyramid_, models::to_tensor(batch),
                                 models::mask_tensor(batch_masks), cfg_.weights, cfg_.dom_trains_extractor);
  ++step_;
  nlohmann::json rec = {{"step", step_}};
  for (const char* key : {"l1", "per", "sty", "adv_d", "adv_g", "dom", "total", "zb_var"}) rec[key] = report.at(key);
  return rec;
}

void Trainer::run(std::ostream& log, const std::string& checkpoint_path) {
  while (step_ < cfg_.steps) {
    log << step().dump() << '\n';
    log.flush();
    if (!checkpoint_path.empty() && step_ % cfg_.checkpoint_every == 0) save_checkpoint(checkpoint_path);
  }
  if (!checkpoint_path.empty()) save_checkpoint(checkpoint_path);
}

void Trainer::save_checkpoint(const std::string& path) {
  archive::Archive a;
  a.header = kCheckpointHeader;
  a.meta["config"] = to_json(cfg_);
  a.meta["seed"] = cfg_.seed;
  a.meta["step"] = step_;
  a.meta["opt_g_steps"] = opt_g_.steps();
  a.meta["opt_d_steps"] = opt_d_.steps();
  auto reg = model_.full_registry();
  for (auto& [name, v] : reg.params) a.tensors.emplace_back(name, v->value);
  for (auto& [name, t] : reg.buffers) a.tensors.emplace_back(name, *t);
  for (auto& [name, t] : opt_g_.state()) a.tensors.emplace_back("opt_g." + name, t);
  for (auto& [name, t] : opt_d_.state()) a.tensors.emplace_back("opt_d." + name, t);
  // Write-then-rename so an interrupted save never leaves a torn checkpoint.
  const std::string tmp = path + ".tmp";
  archive::write(tmp, a);
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot move checkpoint into " + path);
}

namespace {

void load_weights(models::SafePaintModel& model, const archive::Archive& a) {
  auto reg = model.full_registry();
  for (auto& [name, v] : reg.params) {
    const auto& t = a.get(name);
    if (!(t.shape == v->value.shape)) throw std::runtime_error("checkpoint: shape mismatch for " + name);
    v->value = t;
  }
  for (auto& [name, t] : reg.buffers) {
    const auto& src = a.get(name);
    if (!t->empty() && !(src.shape == t->shape)) throw std::runtime_error("checkpoint: shape mismatch for " + name);
    *t = src;
  }
}

std::vector<std::pair<std::string, Tensor>> with_prefix(const archive::Archive& a, const std::string& prefix) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, t] : a.tensors)
    if (name.rfind(prefix, 0) == 0) out.emplace_back(name.substr(prefix.size()), t);
  return out;
}

}  // namespace

Trainer Trainer::resume(const std::string& path, std::vector<Image> images, int steps) {
  const auto a = archive::read(path, kCheckpointHeader);
  TrainConfig cfg = config_from_json(a.meta.at("config"));
  cfg.steps = steps;
  Trainer t(cfg, std::move(images));
  load_weights(t.model_, a);
  t.opt_g_.load_state(with_prefix(a, "opt_g."), a.meta.at("opt_g_steps").get<long long>());
  t.opt_d_.load_state(with_prefix(a, "opt_d."), a.meta.at("opt_d_steps").get<long long>());
  t.step_ = a.meta.at("step").get<long long>();
  return t;
}

models::SafePaintModel load_model(const std::string& checkpoint_path) {
  const auto a = archive::read(checkpoint_path, kCheckpointHeader);
  const TrainConfig cfg = config_from_json(a.meta.at("config"));
  models::SafePaintModel model(cfg.model_config());
  load_weights(model, a);
  return model;
}

}  // namespace safepaint::train
