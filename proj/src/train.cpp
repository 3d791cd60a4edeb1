#include "smile/train.hpp"

#include <algorithm>
#include <cmath>

namespace smile::train {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 2)
    throw ConfigError("batch_size must be >= 2 (column standardization needs it), got " +
                      std::to_string(batch_size));
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (lr_schedule != "constant")
    throw ConfigError("unsupported lr_schedule '" + lr_schedule + "' (only constant)");
  loss.validate();
  augment.validate();
}

loss::LossConfig TrainConfig::effective_loss() const {
  loss::LossConfig e = loss;
  if (!mv_bt_enabled) e.alpha = 0.0;
  if (!vl_align_enabled) e.beta = 0.0;
  if (!red_min_enabled) e.gamma = 0.0;
  return e;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"weight_decay", weight_decay},
          {"seed", seed},
          {"checkpoint_every", checkpoint_every},
          {"mv_bt_enabled", mv_bt_enabled},
          {"vl_align_enabled", vl_align_enabled},
          {"red_min_enabled", red_min_enabled},
          {"lr_schedule", lr_schedule},
          {"loss",
           {{"alpha", loss.alpha},
            {"beta", loss.beta},
            {"gamma", loss.gamma},
            {"lambda_mv_bt", loss.lambda_mv_bt},
            {"lambda_red_min", loss.lambda_red_min},
            {"tau", loss.tau},
            {"standardize", loss.standardize},
            {"symmetric_align", loss.symmetric_align},
            {"standardize_eps", loss.standardize_eps}}},
          {"augment", augment.to_json()},
          {"model", model.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  c.mv_bt_enabled = j.at("mv_bt_enabled").get<bool>();
  c.vl_align_enabled = j.at("vl_align_enabled").get<bool>();
  c.red_min_enabled = j.at("red_min_enabled").get<bool>();
  c.lr_schedule = j.at("lr_schedule").get<std::string>();
  const nlohmann::json& l = j.at("loss");
  c.loss.alpha = l.at("alpha").get<double>();
  c.loss.beta = l.at("beta").get<double>();
  c.loss.gamma = l.at("gamma").get<double>();
  c.loss.lambda_mv_bt = l.at("lambda_mv_bt").get<double>();
  c.loss.lambda_red_min = l.at("lambda_red_min").get<double>();
  c.loss.tau = l.at("tau").get<double>();
  c.loss.standardize = l.at("standardize").get<bool>();
  c.loss.symmetric_align = l.at("symmetric_align").get<bool>();
  c.loss.standardize_eps = l.at("standardize_eps").get<double>();
  c.augment = data::AugmentPolicy::from_json(j.at("augment"));
  c.model = nn::ModelConfig::from_json(j.at("model"));
  return c;
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

void AdamW::step(const std::vector<Mat*>& params, const std::vector<Mat>& grads) {
  if (params.size() != grads.size())
    throw ConfigError("AdamW: " + std::to_string(params.size()) + " params vs " +
                      std::to_string(grads.size()) + " grads");
  if (m_.empty()) {
    for (const Mat* p : params) {
      m_.push_back(Mat::Zero(p->rows(), p->cols()));
      v_.push_back(Mat::Zero(p->rows(), p->cols()));
    }
  }
  if (m_.size() != params.size())
    throw ConfigError("AdamW: parameter count changed mid-run");

  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat& p = *params[i];
    const Mat& g = grads[i];
    if (p.rows() != g.rows() || p.cols() != g.cols())
      throw ShapeError("AdamW: grad shape mismatch at parameter " + std::to_string(i));
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    const Mat mhat = m_[i] / bc1;
    const Mat vhat = v_[i] / bc2;
    const Mat update =
        mhat.cwiseQuotient((vhat.array().sqrt() + eps_).matrix());
    // Decoupled decay is applied to the incoming parameter value, not mixed
    // into the gradient moments.
    p = p - lr_ * update - (lr_ * wd_) * p;
  }
}

void AdamW::restore(std::vector<Mat> m, std::vector<Mat> v, long t) {
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

// ---------------------------------------------------------------------------
// Batch assembly and forward pass
// ---------------------------------------------------------------------------

ViewBatch assemble_batch(const data::Dataset& ds, const std::vector<int>& indices,
                         const data::PromptBank& bank, const data::AugmentPolicy& policy,
                         std::mt19937_64& rng) {
  if (indices.empty()) throw ConfigError("assemble_batch: empty index list");
  const int b = static_cast<int>(indices.size());
  const int vc = ds.config.view_count;
  const int dim = ds.config.input_dim;

  ViewBatch batch;
  batch.indices = indices;
  for (int v = 0; v < vc; ++v) {
    batch.views_clean.emplace_back(b, dim);
    batch.views_a.emplace_back(b, dim);
    batch.views_b.emplace_back(b, dim);
  }
  for (int row = 0; row < b; ++row) {
    const data::Sample& s = ds.samples[static_cast<std::size_t>(indices[static_cast<std::size_t>(row)])];
    batch.subject_ids.push_back(s.subject_id);
    batch.class_ids.push_back(s.class_id);
    auto [a, bb] = data::augment_pair(s, policy, rng);
    for (int v = 0; v < vc; ++v) {
      batch.views_clean[static_cast<std::size_t>(v)].row(row) = s.views.row(v);
      batch.views_a[static_cast<std::size_t>(v)].row(row) = a.row(v);
      batch.views_b[static_cast<std::size_t>(v)].row(row) = bb.row(v);
    }
    batch.prompt_tokens.push_back(data::sample_prompt(s.class_id, bank, rng));
  }
  return batch;
}

EmbeddingSet forward_embeddings(const nn::BoundModel& bm, const ViewBatch& batch) {
  EmbeddingSet es;
  const std::size_t vc = batch.views_clean.size();
  es.za.reserve(vc);
  es.zb.reserve(vc);
  es.clean.reserve(vc);
  for (std::size_t v = 0; v < vc; ++v) {
    es.za.push_back(nn::encode_batch(bm, batch.views_a[v]));
    es.zb.push_back(nn::encode_batch(bm, batch.views_b[v]));
    es.clean.push_back(nn::encode_batch(bm, batch.views_clean[v]));
  }
  es.fusion = nn::fuse_views(bm, es.clean);
  es.text = nn::encode_text_batch(bm, batch.prompt_tokens);
  return es;
}

namespace {

double fusion_entropy(const Mat& weights) {
  double acc = 0.0;
  for (Eigen::Index r = 0; r < weights.rows(); ++r)
    for (Eigen::Index c = 0; c < weights.cols(); ++c) {
      const double w = weights(r, c);
      if (w > 0) acc -= w * std::log(w);
    }
  return weights.rows() > 0 ? acc / static_cast<double>(weights.rows()) : 0.0;
}

void check_component(const char* name, double value, bool enabled) {
  if (enabled && !std::isfinite(value))
    throw DivergenceError(std::string("training diverged: ") + name + " is non-finite");
}

}  // namespace

StepStats train_step(nn::Model& model, AdamW& opt, const ViewBatch& batch,
                     const TrainConfig& cfg) {
  if (batch.size() < 2)
    throw ConfigError("train_step: batch of " + std::to_string(batch.size()) +
                      " is too small (need >= 2)");

  const loss::LossConfig eff = cfg.effective_loss();

  ad::Tape tape;
  nn::BoundModel bm = nn::bind(tape, model);
  EmbeddingSet es = forward_embeddings(bm, batch);

  std::vector<loss::CorrelationMatrix> per_view;
  per_view.reserve(es.za.size());
  for (std::size_t v = 0; v < es.za.size(); ++v)
    per_view.push_back(loss::cross_correlation(es.za[v], es.zb[v], eff.standardize,
                                               eff.standardize_eps, static_cast<int>(v)));
  loss::CorrelationMatrix cbar = loss::average_correlation(per_view);

  Tensor mv = loss::mv_bt_loss(cbar, eff.lambda_mv_bt);
  Tensor vl = loss::vl_align_loss(es.clean, es.fusion.fused, es.text, eff.tau,
                                  eff.symmetric_align);
  Tensor red = loss::red_min_loss(es.fusion.fused, es.text, eff.lambda_red_min,
                                  eff.standardize, eff.standardize_eps);
  loss::JointLoss joint = loss::joint_loss(mv, vl, red, eff);

  check_component("mv_bt", joint.breakdown.mv_bt, eff.alpha != 0.0);
  check_component("vl_align", joint.breakdown.vl_align, eff.beta != 0.0);
  check_component("red_min", joint.breakdown.red_min, eff.gamma != 0.0);
  if (!std::isfinite(joint.breakdown.total) || std::abs(joint.breakdown.total) > 1e6)
    throw DivergenceError("training diverged: total loss " +
                          fmt_double(joint.breakdown.total));

  StepStats stats;
  stats.breakdown = joint.breakdown;
  loss::CorrelationStats cs = loss::correlation_stats(cbar);
  stats.cbar_diag_mean = cs.diag_mean;
  stats.cbar_offdiag_mean = cs.offdiag_abs_mean;
  stats.fusion_entropy = fusion_entropy(es.fusion.weights.value());

  std::vector<Mat*> params;
  for (auto& [name, mat] : model.trainable_params()) params.push_back(mat);

  std::vector<Mat> grads;
  if (joint.total.on_tape()) {
    tape.backward(joint.total);
    grads.reserve(bm.leaves.size());
    for (const Tensor& leaf : bm.leaves) grads.push_back(tape.grad(leaf));
  } else {
    // All components disabled: no gradients, but decay still applies.
    for (Mat* p : params) grads.push_back(Mat::Zero(p->rows(), p->cols()));
  }
  opt.step(params, grads);
  return stats;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out =
      "epoch,step,mv_bt,vl_align,red_min,total,cbar_diag_mean,cbar_offdiag_mean,"
      "fusion_entropy\n";
  for (const MetricsRow& r : rows) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.step) + "," +
           fmt_double(r.stats.breakdown.mv_bt) + "," + fmt_double(r.stats.breakdown.vl_align) +
           "," + fmt_double(r.stats.breakdown.red_min) + "," +
           fmt_double(r.stats.breakdown.total) + "," + fmt_double(r.stats.cbar_diag_mean) +
           "," + fmt_double(r.stats.cbar_offdiag_mean) + "," +
           fmt_double(r.stats.fusion_entropy) + "\n";
  }
  return out;
}

TrainResult run_training(const data::Dataset& ds, const std::vector<int>& train_indices,
                         const TrainConfig& cfg, const data::PromptBank& bank,
                         const std::optional<ResumeState>& resume,
                         const EpochCallback& on_epoch) {
  cfg.validate();
  for (int i : train_indices)
    if (i < 0 || i >= ds.size())
      throw ConfigError("train index " + std::to_string(i) + " out of range");

  nn::ModelConfig mc = cfg.model;
  mc.input_dim = ds.config.input_dim;
  mc.vocab_size = bank.vocab_size();

  TrainResult result;
  int start_epoch = 0;
  if (resume.has_value()) {
    result.model = resume->model;
    result.optimizer = resume->optimizer;
    result.global_step = resume->global_step;
    start_epoch = resume->next_epoch;
  } else {
    result.model = nn::Model::init(mc, derive_seed(cfg.seed, "init"));
    result.optimizer = AdamW(cfg.learning_rate, cfg.weight_decay);
  }

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order = train_indices;
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    const int b = cfg.batch_size;
    int batch_index = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(b), ++batch_index) {
      const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(b), order.size() - at);
      if (take < 2) break;  // partial batches below the standardization floor are dropped
      std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(at),
                           order.begin() + static_cast<std::ptrdiff_t>(at + take));
      std::mt19937_64 batch_rng(derive_seed(cfg.seed, "batch",
                                            static_cast<std::uint64_t>(epoch),
                                            static_cast<std::uint64_t>(batch_index)));
      ViewBatch batch = assemble_batch(ds, idx, bank, cfg.augment, batch_rng);
      StepStats stats = train_step(result.model, result.optimizer, batch, cfg);
      result.log.push_back({epoch, result.global_step, stats});
      ++result.global_step;
    }
    if (on_epoch) on_epoch(epoch, result.model, result.optimizer, result.global_step);
  }
  return result;
}

nn::Checkpoint make_train_checkpoint(const nn::Model& model, const AdamW& opt,
                                     int next_epoch, long global_step) {
  nn::Checkpoint ckpt;
  ckpt.model = model;
  ckpt.meta = {{"next_epoch", next_epoch},
               {"global_step", global_step},
               {"adam_step", opt.step_count()}};
  const auto& m = opt.first_moments();
  const auto& v = opt.second_moments();
  for (std::size_t i = 0; i < m.size(); ++i) {
    ckpt.extra_arrays.emplace_back("adam_m_" + std::to_string(i), m[i]);
    ckpt.extra_arrays.emplace_back("adam_v_" + std::to_string(i), v[i]);
  }
  return ckpt;
}

ResumeState resume_from_checkpoint(const nn::Checkpoint& ckpt, const TrainConfig& cfg) {
  ResumeState rs;
  rs.model = ckpt.model;
  rs.next_epoch = ckpt.meta.at("next_epoch").get<int>();
  rs.global_step = ckpt.meta.at("global_step").get<long>();
  rs.optimizer = AdamW(cfg.learning_rate, cfg.weight_decay);
  const long adam_step = ckpt.meta.at("adam_step").get<long>();
  std::vector<Mat> m, v;
  for (const auto& [name, mat] : ckpt.extra_arrays) {
    if (name.rfind("adam_m_", 0) == 0) m.push_back(mat);
    else if (name.rfind("adam_v_", 0) == 0) v.push_back(mat);
  }
  if (!m.empty() || adam_step > 0) rs.optimizer.restore(std::move(m), std::move(v), adam_step);
  return rs;
}

}  // namespace smile::train
