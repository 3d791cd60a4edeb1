#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "smile/data.hpp"
#include "smile/encoders.hpp"
#include "smile/losses.hpp"

namespace smile::train {

using ad::Mat;
using ad::Tensor;

struct TrainConfig {
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  std::uint64_t seed = 7;
  int checkpoint_every = 0;  // epochs between checkpoints; 0 = final only
  // Component toggles for ablation; a disabled component contributes exactly
  // zero and receives no gradient.
  bool mv_bt_enabled = true;
  bool vl_align_enabled = true;
  bool red_min_enabled = true;
  std::string lr_schedule = "constant";

  loss::LossConfig loss;
  data::AugmentPolicy augment;
  nn::ModelConfig model;

  void validate() const;
  /// Loss weights with the toggles folded in.
  loss::LossConfig effective_loss() const;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Adam with decoupled weight decay. Moment buffers mirror the parameter
/// list order; frozen parameters are simply never handed to it.
class AdamW {
 public:
  AdamW() = default;
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Mat*>& params, const std::vector<Mat>& grads);

  long step_count() const { return t_; }
  const std::vector<Mat>& first_moments() const { return m_; }
  const std::vector<Mat>& second_moments() const { return v_; }
  void restore(std::vector<Mat> m, std::vector<Mat> v, long t);
  double learning_rate() const { return lr_; }
  double weight_decay() const { return wd_; }

 private:
  double lr_ = 1e-4, wd_ = 0.0, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

/// One assembled mini-batch: clean and distorted view features plus sampled
/// prompt tokens. Class ids ride along for evaluation only; the training
/// objective never reads them.
struct ViewBatch {
  std::vector<int> indices;
  std::vector<int> subject_ids;
  std::vector<int> class_ids;
  std::vector<Mat> views_clean;  // per view: B x input_dim
  std::vector<Mat> views_a;
  std::vector<Mat> views_b;
  std::vector<std::vector<int>> prompt_tokens;

  int size() const { return static_cast<int>(indices.size()); }
};

ViewBatch assemble_batch(const data::Dataset& ds, const std::vector<int>& indices,
                         const data::PromptBank& bank, const data::AugmentPolicy& policy,
                         std::mt19937_64& rng);

/// Every embedding the objective consumes, on one tape.
struct EmbeddingSet {
  std::vector<Tensor> za, zb;   // per view distorted pairs, B x d
  std::vector<Tensor> clean;    // per view clean embeddings, B x d
  nn::Fusion fusion;            // fused B x d + weights B x N
  Tensor text;                  // B x d, L2-normalized
};

EmbeddingSet forward_embeddings(const nn::BoundModel& bm, const ViewBatch& batch);

struct StepStats {
  loss::LossBreakdown breakdown;
  double cbar_diag_mean = 0.0;
  double cbar_offdiag_mean = 0.0;
  double fusion_entropy = 0.0;
};

/// One forward/backward/update. Returns the pre-update loss breakdown and
/// diagnostics. Divergence (non-finite or exploding loss) aborts with the
/// offending component named.
StepStats train_step(nn::Model& model, AdamW& opt, const ViewBatch& batch,
                     const TrainConfig& cfg);

struct MetricsRow {
  int epoch = 0;
  long step = 0;
  StepStats stats;
};

/// The metrics log CSV, schema:
/// epoch,step,mv_bt,vl_align,red_min,total,cbar_diag_mean,cbar_offdiag_mean,fusion_entropy
std::string metrics_csv(const std::vector<MetricsRow>& rows);

struct ResumeState {
  nn::Model model;
  AdamW optimizer;
  int next_epoch = 0;
  long global_step = 0;
};

struct TrainResult {
  nn::Model model;
  AdamW optimizer;
  std::vector<MetricsRow> log;
  long global_step = 0;
};

using EpochCallback =
    std::function<void(int epoch_just_finished, const nn::Model&, const AdamW&, long step)>;

/// Deterministic mini-batch training over the given train indices. All
/// randomness derives from (cfg.seed, epoch, batch index), so a run resumed
/// from an epoch-boundary checkpoint reproduces the uninterrupted run
/// bit-exactly.
TrainResult run_training(const data::Dataset& ds, const std::vector<int>& train_indices,
                         const TrainConfig& cfg, const data::PromptBank& bank,
                         const std::optional<ResumeState>& resume = std::nullopt,
                         const EpochCallback& on_epoch = nullptr);

/// Packs model + optimizer + position into a checkpoint; the counterpart
/// restores a ResumeState that continues the same run.
nn::Checkpoint make_train_checkpoint(const nn::Model& model, const AdamW& opt,
                                     int next_epoch, long global_step);
ResumeState resume_from_checkpoint(const nn::Checkpoint& ckpt, const TrainConfig& cfg);

}  // namespace smile::train
