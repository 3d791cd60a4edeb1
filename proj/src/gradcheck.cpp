#include "smile/gradcheck.hpp"

#include <random>

#include "smile/train.hpp"

namespace smile::gradcheck {

using ad::Mat;
using ad::Tape;
using ad::Tensor;

namespace {

constexpr int kBatch = 4;
constexpr int kViews = 3;
constexpr int kDim = 8;

Mat uniform_mat(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double lo,
                double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

std::vector<Mat> random_embeddings(std::mt19937_64& rng, int count) {
  std::vector<Mat> out;
  for (int i = 0; i < count; ++i) out.push_back(uniform_mat(rng, kBatch, kDim, -2.0, 2.0));
  return out;
}

Tensor mv_bt_from(const std::vector<Tensor>& th, const loss::LossConfig& cfg) {
  std::vector<loss::CorrelationMatrix> mats;
  for (int v = 0; v < kViews; ++v)
    mats.push_back(loss::cross_correlation(th[static_cast<std::size_t>(2 * v)],
                                           th[static_cast<std::size_t>(2 * v + 1)],
                                           cfg.standardize, cfg.standardize_eps, v));
  return loss::mv_bt_loss(loss::average_correlation(mats), cfg.lambda_mv_bt);
}

Tensor vl_from(const std::vector<Tensor>& th, std::size_t base, const loss::LossConfig& cfg) {
  std::vector<Tensor> views(th.begin() + static_cast<std::ptrdiff_t>(base),
                            th.begin() + static_cast<std::ptrdiff_t>(base + kViews));
  const Tensor& fused = th[base + kViews];
  const Tensor& text = th[base + kViews + 1];
  return loss::vl_align_loss(views, fused, text, cfg.tau, cfg.symmetric_align);
}

}  // namespace

std::vector<Entry> run_suite(std::uint64_t seed, double h) {
  const loss::LossConfig cfg;  // library defaults
  std::vector<Entry> results;

  {
    std::mt19937_64 rng(derive_seed(seed, "gradcheck-mv"));
    std::vector<Mat> theta = random_embeddings(rng, 2 * kViews);
    double err = ad::finite_difference_check(
        [&](Tape&, const std::vector<Tensor>& th) { return mv_bt_from(th, cfg); }, theta, h);
    results.push_back({"mv_bt_loss", err});
  }

  {
    std::mt19937_64 rng(derive_seed(seed, "gradcheck-vl"));
    std::vector<Mat> theta = random_embeddings(rng, kViews + 2);
    double err = ad::finite_difference_check(
        [&](Tape&, const std::vector<Tensor>& th) { return vl_from(th, 0, cfg); }, theta, h);
    results.push_back({"vl_align_loss", err});
  }

  {
    std::mt19937_64 rng(derive_seed(seed, "gradcheck-red"));
    std::vector<Mat> theta = random_embeddings(rng, 2);
    double err = ad::finite_difference_check(
        [&](Tape&, const std::vector<Tensor>& th) {
          return loss::red_min_loss(th[0], th[1], cfg.lambda_red_min, cfg.standardize,
                                    cfg.standardize_eps);
        },
        theta, h);
    results.push_back({"red_min_loss", err});
  }

  {
    // Joint objective over independent component inputs:
    // za/zb per view, clean views, fused, text.
    std::mt19937_64 rng(derive_seed(seed, "gradcheck-joint"));
    std::vector<Mat> theta = random_embeddings(rng, 2 * kViews + kViews + 2);
    double err = ad::finite_difference_check(
        [&](Tape&, const std::vector<Tensor>& th) {
          Tensor mv = mv_bt_from(th, cfg);
          Tensor vl = vl_from(th, 2 * kViews, cfg);
          Tensor red = loss::red_min_loss(th[2 * kViews + kViews], th[2 * kViews + kViews + 1],
                                          cfg.lambda_red_min, cfg.standardize,
                                          cfg.standardize_eps);
          return loss::joint_loss(mv, vl, red, cfg).total;
        },
        theta, h);
    results.push_back({"joint_loss", err});
  }

  {
    // Full composite: gradients w.r.t. every trainable model parameter,
    // through encoders, fusion, text pooling and all three losses.
    data::PromptBank bank = data::PromptBank::basic_six();
    nn::ModelConfig mc;
    mc.input_dim = 6;
    mc.hidden_dim = 7;
    mc.embed_dim = kDim;
    mc.fusion_hidden = 5;
    mc.vocab_size = bank.vocab_size();
    mc.text_frozen = true;
    nn::Model model = nn::Model::init(mc, derive_seed(seed, "gradcheck-model"));

    std::mt19937_64 rng(derive_seed(seed, "gradcheck-batch"));
    train::ViewBatch batch;
    for (int v = 0; v < kViews; ++v) {
      batch.views_a.push_back(uniform_mat(rng, kBatch, mc.input_dim, -1.0, 1.0));
      batch.views_b.push_back(uniform_mat(rng, kBatch, mc.input_dim, -1.0, 1.0));
      batch.views_clean.push_back(uniform_mat(rng, kBatch, mc.input_dim, -1.0, 1.0));
    }
    std::uniform_int_distribution<int> cls(0, bank.num_classes() - 1);
    for (int b = 0; b < kBatch; ++b) {
      batch.indices.push_back(b);
      batch.subject_ids.push_back(b);
      batch.class_ids.push_back(cls(rng));
      batch.prompt_tokens.push_back(data::sample_prompt(batch.class_ids.back(), bank, rng));
    }

    std::vector<Mat> theta;
    for (auto& [name, mat] : model.trainable_params()) theta.push_back(*mat);

    double err = ad::finite_difference_check(
        [&](Tape& tape, const std::vector<Tensor>& th) {
          nn::BoundModel bm;
          bm.config = &model.config;
          bm.tape = &tape;
          bm.enc_w1 = th[0];
          bm.enc_b1 = th[1];
          bm.enc_w2 = th[2];
          bm.enc_b2 = th[3];
          bm.proj_w = th[4];
          bm.proj_b = th[5];
          bm.fus_w1 = th[6];
          bm.fus_b1 = th[7];
          bm.fus_w2 = th[8];
          bm.fus_b2 = th[9];
          bm.text_table = Tensor::constant(model.text_table);

          train::EmbeddingSet es = train::forward_embeddings(bm, batch);
          std::vector<loss::CorrelationMatrix> mats;
          for (std::size_t v = 0; v < es.za.size(); ++v)
            mats.push_back(loss::cross_correlation(es.za[v], es.zb[v], cfg.standardize,
                                                   cfg.standardize_eps, static_cast<int>(v)));
          Tensor mv = loss::mv_bt_loss(loss::average_correlation(mats), cfg.lambda_mv_bt);
          Tensor vl = loss::vl_align_loss(es.clean, es.fusion.fused, es.text, cfg.tau,
                                          cfg.symmetric_align);
          Tensor red = loss::red_min_loss(es.fusion.fused, es.text, cfg.lambda_red_min,
                                          cfg.standardize, cfg.standardize_eps);
          return loss::joint_loss(mv, vl, red, cfg).total;
        },
        theta, h);
    results.push_back({"model_composite", err});
  }

  return results;
}

}  // namespace smile::gradcheck
