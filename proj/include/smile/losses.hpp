#pragma once

#include <optional>
#include <vector>

#include "smile/tensor.hpp"

namespace smile::loss {

using ad::Tensor;

/// All scalar hyperparameters of the joint objective.
struct LossConfig {
  double alpha = 1.0;           // weight of the multi-view decorrelation term
  double beta = 1.0;            // weight of the vision-language alignment term
  double gamma = 1.0;           // weight of the cross-modal redundancy term
  double lambda_mv_bt = 5e-3;   // off-diagonal weight inside the mv-bt penalty
  double lambda_red_min = 5e-3; // off-diagonal weight inside the red-min penalty
  double tau = 0.07;            // alignment temperature
  bool standardize = true;      // batch-standardize before correlation matrices
  bool symmetric_align = false; // also align text -> image (off by default)
  double standardize_eps = 1e-5;

  void validate() const;
};

struct CorrelationMatrix {
  enum class Source { PerView, Averaged, VisualText };
  Tensor values;  // d x d
  Source source = Source::PerView;
  int view_index = -1;
};

struct LossBreakdown {
  double mv_bt = 0.0;
  double vl_align = 0.0;
  double red_min = 0.0;
  double total = 0.0;
};

/// Result of combining the three components: the differentiable total plus
/// the plain-number breakdown for logging. When every effective weight is
/// zero the total is a detached constant 0.
struct JointLoss {
  Tensor total;
  LossBreakdown breakdown;
};

/// Batch cross-correlation of two embedding matrices (B x d each):
/// C = (1/B) za^T zb, after column standardization when enabled.
CorrelationMatrix cross_correlation(const Tensor& za, const Tensor& zb,
                                    bool standardize = true, double eps = 1e-5,
                                    int view_index = -1);

/// Entrywise mean of per-view correlation matrices.
CorrelationMatrix average_correlation(const std::vector<CorrelationMatrix>& mats);

/// sum_k (C_kk - 1)^2 + lambda * sum_{k != l} C_kl^2
Tensor mv_bt_loss(const CorrelationMatrix& cbar, double lambda_mv_bt);

/// InfoNCE alignment of each view embedding and the fused embedding against
/// the batch text embeddings: mean over (N+1) groups and B rows of
/// -log softmax(sim / tau) with in-batch negatives.
Tensor vl_align_loss(const std::vector<Tensor>& view_embeds, const Tensor& fused,
                     const Tensor& text, double tau, bool symmetric = false);

/// Barlow-style penalty on the fused-visual / text correlation matrix.
Tensor red_min_loss(const Tensor& fused, const Tensor& text, double lambda_red_min,
                    bool standardize = true, double eps = 1e-5);

/// total = alpha * mv_bt + beta * vl_align + gamma * red_min.
/// Zero-weight components are left out of the gradient graph entirely.
JointLoss joint_loss(const Tensor& mv_bt, const Tensor& vl_align, const Tensor& red_min,
                     const LossConfig& config);

/// Diagnostics of a correlation matrix used by the training log.
struct CorrelationStats {
  double diag_mean = 0.0;
  double offdiag_abs_mean = 0.0;
};
CorrelationStats correlation_stats(const CorrelationMatrix& m);

}  // namespace smile::loss
