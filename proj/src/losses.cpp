#include "smile/losses.hpp"

#include <cmath>

namespace smile::loss {

using ad::Mat;

void LossConfig::validate() const {
  if (alpha < 0 || beta < 0 || gamma < 0)
    throw ConfigError("loss weights must be >= 0 (alpha=" + fmt_double(alpha) +
                      ", beta=" + fmt_double(beta) + ", gamma=" + fmt_double(gamma) + ")");
  if (lambda_mv_bt < 0 || lambda_red_min < 0)
    throw ConfigError("off-diagonal weights must be >= 0");
  if (!(tau > 0)) throw ConfigError("tau must be > 0, got " + fmt_double(tau));
  if (!(standardize_eps > 0)) throw ConfigError("standardize_eps must be > 0");
}

CorrelationMatrix cross_correlation(const Tensor& za, const Tensor& zb, bool standardize,
                                    double eps, int view_index) {
  if (za.rows() != zb.rows() || za.cols() != zb.cols())
    throw ShapeError("cross_correlation: shapes " + za.shape_str() + " and " +
                     zb.shape_str() + " do not match");
  if (za.rows() < 2)
    throw ConfigError("cross_correlation: batch of " + std::to_string(za.rows()) +
                      " is too small (need >= 2)");
  Tensor a = standardize ? ad::column_standardize(za, eps) : za;
  Tensor b = standardize ? ad::column_standardize(zb, eps) : zb;
  const double inv_b = 1.0 / static_cast<double>(za.rows());
  CorrelationMatrix out;
  out.values = ad::scale(ad::matmul(ad::transpose(a), b), inv_b);
  out.source = CorrelationMatrix::Source::PerView;
  out.view_index = view_index;
  return out;
}

CorrelationMatrix average_correlation(const std::vector<CorrelationMatrix>& mats) {
  if (mats.empty()) throw ConfigError("average_correlation: empty input");
  const Eigen::Index d = mats.front().values.rows();
  for (const auto& m : mats) {
    if (m.values.rows() != d || m.values.cols() != d)
      throw ShapeError("average_correlation: matrix shapes differ (" +
                       mats.front().values.shape_str() + " vs " + m.values.shape_str() + ")");
  }
  Tensor acc = mats.front().values;
  for (std::size_t i = 1; i < mats.size(); ++i) acc = ad::add(acc, mats[i].values);
  CorrelationMatrix out;
  out.values = ad::scale(acc, 1.0 / static_cast<double>(mats.size()));
  out.source = CorrelationMatrix::Source::Averaged;
  return out;
}

namespace {

/// Shared body of Eqs.-style identity-target penalties:
/// sum_k (C_kk - 1)^2 + lambda * sum_{k != l} C_kl^2.
Tensor identity_target_penalty(const Tensor& c, double lambda) {
  if (c.rows() != c.cols())
    throw ShapeError("identity-target penalty needs a square matrix, got " + c.shape_str());
  Tensor diag = ad::diagonal(c);  // d x 1
  Tensor diag_term = ad::sum(ad::square(ad::add_scalar(diag, -1.0)));
  Tensor total_sq = ad::sum(ad::square(c));
  Tensor diag_sq = ad::sum(ad::square(diag));
  Tensor off_term = ad::sub(total_sq, diag_sq);
  return ad::add(diag_term, ad::scale(off_term, lambda));
}

}  // namespace

Tensor mv_bt_loss(const CorrelationMatrix& cbar, double lambda_mv_bt) {
  return identity_target_penalty(cbar.values, lambda_mv_bt);
}

namespace {

/// One InfoNCE group: rows of z against all rows of text, positives on the
/// diagonal. Returns the summed (not yet averaged) row losses.
Tensor alignment_group(const Tensor& z, const Tensor& text_hat, double tau,
                       bool symmetric) {
  Tensor z_hat = ad::l2_normalize_rows(z);
  Tensor logits = ad::scale(ad::matmul(z_hat, ad::transpose(text_hat)), 1.0 / tau);
  Tensor pos = ad::diagonal(logits);           // B x 1
  Tensor lse = ad::logsumexp_rows(logits);     // image -> text candidates
  Tensor group = ad::sum(ad::sub(lse, pos));
  if (symmetric) {
    Tensor lse_t = ad::logsumexp_rows(ad::transpose(logits));  // text -> image
    Tensor group_t = ad::sum(ad::sub(lse_t, pos));
    group = ad::scale(ad::add(group, group_t), 0.5);
  }
  return group;
}

}  // namespace

Tensor vl_align_loss(const std::vector<Tensor>& view_embeds, const Tensor& fused,
                     const Tensor& text, double tau, bool symmetric) {
  if (!(tau > 0)) throw ConfigError("vl_align_loss: tau must be > 0, got " + fmt_double(tau));
  const Eigen::Index b = text.rows();
  const Eigen::Index d = text.cols();
  if (b == 0) throw ConfigError("vl_align_loss: empty batch");
  if (fused.rows() != b || fused.cols() != d)
    throw ShapeError("vl_align_loss: fused shape " + fused.shape_str() +
                     " does not match text shape " + text.shape_str());
  for (const Tensor& v : view_embeds)
    if (v.rows() != b || v.cols() != d)
      throw ShapeError("vl_align_loss: view shape " + v.shape_str() +
                       " does not match text shape " + text.shape_str());

  Tensor text_hat = ad::l2_normalize_rows(text);
  Tensor acc = alignment_group(fused, text_hat, tau, symmetric);
  for (const Tensor& v : view_embeds)
    acc = ad::add(acc, alignment_group(v, text_hat, tau, symmetric));

  const double n_groups = static_cast<double>(view_embeds.size()) + 1.0;
  return ad::scale(acc, 1.0 / (n_groups * static_cast<double>(b)));
}

Tensor red_min_loss(const Tensor& fused, const Tensor& text, double lambda_red_min,
                    bool standardize, double eps) {
  if (fused.rows() != text.rows() || fused.cols() != text.cols())
    throw ShapeError("red_min_loss: shapes " + fused.shape_str() + " and " +
                     text.shape_str() + " do not match");
  if (fused.rows() < 2)
    throw ConfigError("red_min_loss: batch of " + std::to_string(fused.rows()) +
                      " is too small (need >= 2)");
  Tensor a = standardize ? ad::column_standardize(fused, eps) : fused;
  Tensor b = standardize ? ad::column_standardize(text, eps) : text;
  const double inv_b = 1.0 / static_cast<double>(fused.rows());
  Tensor cvt = ad::scale(ad::matmul(ad::transpose(a), b), inv_b);
  return identity_target_penalty(cvt, lambda_red_min);
}

JointLoss joint_loss(const Tensor& mv_bt, const Tensor& vl_align, const Tensor& red_min,
                     const LossConfig& config) {
  config.validate();
  JointLoss out;
  out.breakdown.mv_bt = mv_bt.scalar_value();
  out.breakdown.vl_align = vl_align.scalar_value();
  out.breakdown.red_min = red_min.scalar_value();

  // Zero-weight terms stay off the tape so disabled components cannot leak
  // gradients into shared parameters.
  std::optional<Tensor> total;
  auto include = [&total](const Tensor& part, double weight) {
    if (weight == 0.0) return;
    Tensor scaled = ad::scale(part, weight);
    total = total.has_value() ? ad::add(*total, scaled) : scaled;
  };
  include(mv_bt, config.alpha);
  include(vl_align, config.beta);
  include(red_min, config.gamma);

  out.total = total.value_or(Tensor::scalar(0.0));
  out.breakdown.total = out.total.scalar_value();
  return out;
}

CorrelationStats correlation_stats(const CorrelationMatrix& m) {
  const Mat& c = m.values.value();
  CorrelationStats s;
  const Eigen::Index d = c.rows();
  s.diag_mean = c.diagonal().mean();
  if (d > 1) {
    const double off_abs_sum = c.cwiseAbs().sum() - c.diagonal().cwiseAbs().sum();
    s.offdiag_abs_mean = off_abs_sum / static_cast<double>(d * (d - 1));
  }
  return s;
}

}  // namespace smile::loss
