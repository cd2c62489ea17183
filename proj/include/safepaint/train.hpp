#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "safepaint/losses.hpp"
#include "safepaint/models.hpp"
#include "safepaint/nn/optim.hpp"

namespace safepaint::train {

struct TrainConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch = 4;
  int steps = 2000;
  std::uint64_t seed = 1;
  int image_size = 64;
  losses::LossWeights weights;
  int base_width = 8;
  int residual_blocks = 4;
  int disc_width = 8;
  int extractor_width = 8;
  int rwsa_reduction = 16;
  bool rwsa = true;
  bool instance_norm = false;
  int mask_min = 10;  // training masks are drawn from buckets in [mask_min, mask_max)
  int mask_max = 50;
  int mask_pool = 256;
  int checkpoint_every = 500;
  // When false, P is evaluated through a detached copy and keeps its initial
  // weights; a fallback for configurations where L_d drives P to a constant.
  bool dom_trains_extractor = true;

  models::ModelConfig model_config() const;
  void validate() const;
};

/// Parses `key = value` lines; '#' starts a comment. Keys mirror the field
/// names, with adam_betas = b1, b2 and w_l1 / w_per / w_sty / w_adv / w_dom
/// for the loss weights. Unknown keys are rejected.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::string& path);
std::string format_config(const TrainConfig& cfg);

/// Applies SAFEPAINT_SEED when it is set.
void apply_environment(TrainConfig& cfg);

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const nlohmann::json& j);

/// One alternating update: the discriminator on (gt, detached I_out), then
/// G1, G2 and P jointly on the weighted total. Throws std::runtime_error
/// naming the first non-finite component, or when Z_b collapses.
losses::LossReport train_step(models::SafePaintModel& model, nn::Adam& opt_g, nn::Adam& opt_d,
                              const models::FeaturePyramid& pyramid, const nn::Tensor& gt, const nn::Tensor& mask,
                              const losses::LossWeights& weights, bool dom_trains_extractor = true);

/// Stateful loop over a fixed training set. Batch composition at step s is a
/// pure function of (seed, s), so a resumed run replays an uninterrupted one.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::vector<Image> images);

  /// Runs one step and returns its log record.
  nlohmann::json step();
  /// Steps until cfg.steps, writing one JSON line per step to `log` and a
  /// checkpoint to `checkpoint_path` every cfg.checkpoint_every steps and at the end.
  void run(std::ostream& log, const std::string& checkpoint_path);

  void save_checkpoint(const std::string& path);
  /// Restores model, optimizer state and step counter. The stored config
  /// wins over `cfg` except for `steps`.
  static Trainer resume(const std::string& path, std::vector<Image> images, int steps);

  long long completed_steps() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  models::SafePaintModel& model() { return model_; }

 private:
  TrainConfig cfg_;
  std::vector<Image> images_;
  std::vector<Mask> masks_;
  models::SafePaintModel model_;
  models::FeaturePyramid pyramid_;
  nn::Adam opt_g_, opt_d_;
  long long step_ = 0;
};

inline constexpr const char* kCheckpointHeader = "safepaint-ckpt-v1";

/// Rebuilds the model stored in a checkpoint, for inference.
models::SafePaintModel load_model(const std::string& checkpoint_path);

}  // namespace safepaint::train
