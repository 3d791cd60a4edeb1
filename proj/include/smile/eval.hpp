#pragma once

#include <string>
#include <vector>

#include "smile/train.hpp"

namespace smile::eval {

using ad::Mat;

struct Metrics {
  std::vector<std::string> class_names;
  Eigen::MatrixXi confusion;  // rows: true class, cols: predicted class
  int total = 0;
  double accuracy = 0.0;
  std::vector<double> precision, recall, f1;
  double macro_f1 = 0.0;
  int tie_count = 0;

  /// Derives every aggregate from the confusion matrix.
  static Metrics from_confusion(const Eigen::MatrixXi& confusion,
                                std::vector<std::string> class_names, int tie_count = 0);
  nlohmann::json to_json() const;
};

struct EvalOptions {
  /// Centroid matching by default; max similarity over templates when set.
  bool max_over_templates = false;
};

/// Per-class prompt representations from a trained model: each class's
/// centroid is the mean of its L2-normalized template embeddings.
struct PromptIndex {
  std::vector<std::string> class_names;
  Mat centroids;             // n_classes x d
  Mat template_embeddings;   // n_templates_total x d (normalized)
  std::vector<int> template_class;  // class of each template row
};
PromptIndex build_prompt_index(const nn::Model& model, const data::PromptBank& bank);

struct ZeroShotResult {
  int class_id = 0;  // index into the candidate class list
  Eigen::VectorXd similarities;
  bool tie = false;
};

/// Cosine argmax of one fused embedding row against class prompts.
/// `candidates` restricts the class list (empty = all); ties break to the
/// lowest candidate position.
ZeroShotResult classify_fused(const Mat& fused_row, const PromptIndex& index,
                              const EvalOptions& opts = {},
                              const std::vector<int>& candidates = {});

/// Zero-shot prediction for one multiview sample: encode, fuse, cosine-match
/// against class prompts. Ties break to the lowest class id.
ZeroShotResult zero_shot_classify(const data::Sample& sample, const nn::Model& model,
                                  const PromptIndex& index, const EvalOptions& opts = {});

/// Classifies every test sample zero-shot and aggregates metrics. When
/// class_subset is non-empty, candidates and test samples are restricted to
/// those classes (subset metrics index into the subset's class list).
Metrics evaluate_fold(const nn::Model& model, const data::Dataset& ds,
                      const std::vector<int>& test_indices, const data::PromptBank& bank,
                      const EvalOptions& opts = {},
                      const std::vector<int>& class_subset = {});

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

struct FoldOutcome {
  int fold = 0;
  std::vector<int> test_subjects;
  Metrics metrics;
};

struct CrossValResult {
  std::vector<FoldOutcome> folds;
  double mean_accuracy = 0.0;
  double sd_accuracy = 0.0;
  double mean_macro_f1 = 0.0;
  Metrics pooled;  // all folds' confusions summed
};

/// Trains from scratch per fold (fold-derived seeds), evaluates zero-shot on
/// the held-out subjects. Folds are independent; `jobs` bounds the worker
/// pool without affecting results.
CrossValResult run_cross_validation(const data::Dataset& ds, int k,
                                    const train::TrainConfig& cfg,
                                    const data::PromptBank& bank, int jobs = 1,
                                    const EvalOptions& opts = {});

// ---------------------------------------------------------------------------
// Cross-domain evaluation
// ---------------------------------------------------------------------------

struct CrossDomainResult {
  Metrics in_domain;     // held-out subjects of the training domain
  Metrics cross_domain;  // the shifted domain, same held-out subject ids
  std::vector<std::string> class_subset;
  bool degenerate_subset = false;  // single-class subset: accuracy is trivially 1
};

/// Trains on the training domain (minus a subject holdout), then evaluates
/// zero-shot both in-domain and on the shifted domain, restricted to
/// class_subset.
CrossDomainResult run_cross_domain(const data::Dataset& train_ds,
                                   const data::Dataset& test_ds,
                                   const std::vector<std::string>& class_subset,
                                   const train::TrainConfig& cfg,
                                   const data::PromptBank& bank, int holdout_k = 5,
                                   const EvalOptions& opts = {});

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

extern const std::vector<std::string> kAblationVariants;  // full, no_mv_bt, ...

struct AblationResult {
  std::vector<std::string> variants;
  std::vector<double> mean_cv_accuracy;  // one per variant
  Mat improvement;  // improvement(u, v) = acc(u) - acc(v); antisymmetric
};

/// One cross-validation per variant, the corresponding loss weight zeroed.
AblationResult run_ablation(const data::Dataset& ds, int k, const train::TrainConfig& cfg,
                            const data::PromptBank& bank, int jobs = 1);

/// Bounded worker pool over [0, n); order-independent tasks only.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace smile::eval
