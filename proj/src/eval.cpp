#include "smile/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <set>
#include <thread>

namespace smile::eval {

const std::vector<std::string> kAblationVariants = {"full", "no_mv_bt", "no_vl_align",
                                                    "no_red_min"};

Metrics Metrics::from_confusion(const Eigen::MatrixXi& confusion,
                                std::vector<std::string> class_names, int tie_count) {
  if (confusion.rows() != confusion.cols())
    throw ShapeError("confusion matrix must be square");
  if (confusion.rows() != static_cast<Eigen::Index>(class_names.size()))
    throw ShapeError("confusion matrix size does not match class list");
  Metrics m;
  m.class_names = std::move(class_names);
  m.confusion = confusion;
  m.tie_count = tie_count;
  m.total = confusion.sum();
  const Eigen::Index c = confusion.rows();
  m.accuracy = m.total > 0
                   ? static_cast<double>(confusion.diagonal().sum()) / static_cast<double>(m.total)
                   : 0.0;
  m.precision.resize(static_cast<std::size_t>(c), 0.0);
  m.recall.resize(static_cast<std::size_t>(c), 0.0);
  m.f1.resize(static_cast<std::size_t>(c), 0.0);
  for (Eigen::Index i = 0; i < c; ++i) {
    const double tp = confusion(i, i);
    const double pred = confusion.col(i).sum();
    const double truth = confusion.row(i).sum();
    const double p = pred > 0 ? tp / pred : 0.0;
    const double r = truth > 0 ? tp / truth : 0.0;
    m.precision[static_cast<std::size_t>(i)] = p;
    m.recall[static_cast<std::size_t>(i)] = r;
    m.f1[static_cast<std::size_t>(i)] = (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  double acc = 0.0;
  for (double f : m.f1) acc += f;
  m.macro_f1 = c > 0 ? acc / static_cast<double>(c) : 0.0;
  return m;
}

nlohmann::json Metrics::to_json() const {
  std::vector<std::vector<int>> rows;
  for (Eigen::Index i = 0; i < confusion.rows(); ++i) {
    std::vector<int> row;
    for (Eigen::Index j = 0; j < confusion.cols(); ++j) row.push_back(confusion(i, j));
    rows.push_back(std::move(row));
  }
  return {{"classes", class_names}, {"confusion", rows},      {"total", total},
          {"accuracy", accuracy},   {"precision", precision}, {"recall", recall},
          {"f1", f1},               {"macro_f1", macro_f1},   {"ties", tie_count}};
}

PromptIndex build_prompt_index(const nn::Model& model, const data::PromptBank& bank) {
  if (bank.num_classes() == 0) throw ConfigError("prompt bank has no classes");
  nn::BoundModel bm = nn::bind_frozen(model);
  PromptIndex index;
  index.class_names = bank.class_names;

  std::vector<Mat> rows;
  for (int c = 0; c < bank.num_classes(); ++c)
    for (const std::string& tmpl : bank.templates[static_cast<std::size_t>(c)]) {
      rows.push_back(nn::encode_text(bm, bank.tokenize(tmpl)).value());
      index.template_class.push_back(c);
    }

  const Eigen::Index d = rows.front().cols();
  index.template_embeddings.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i)
    index.template_embeddings.row(static_cast<Eigen::Index>(i)) = rows[i].row(0);

  index.centroids = Mat::Zero(bank.num_classes(), d);
  std::vector<int> counts(static_cast<std::size_t>(bank.num_classes()), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    index.centroids.row(index.template_class[i]) += rows[i].row(0);
    ++counts[static_cast<std::size_t>(index.template_class[i])];
  }
  for (int c = 0; c < bank.num_classes(); ++c)
    index.centroids.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
  return index;
}

namespace {

/// Batched fused embeddings for a list of samples (values only, no tape).
Mat fused_embeddings(const nn::Model& model, const data::Dataset& ds,
                     const std::vector<int>& indices) {
  nn::BoundModel bm = nn::bind_frozen(model);
  const int vc = ds.config.view_count;
  const int dim = ds.config.input_dim;
  const int b = static_cast<int>(indices.size());
  std::vector<ad::Tensor> views;
  for (int v = 0; v < vc; ++v) {
    Mat x(b, dim);
    for (int row = 0; row < b; ++row)
      x.row(row) = ds.samples[static_cast<std::size_t>(indices[static_cast<std::size_t>(row)])].views.row(v);
    views.push_back(nn::encode_batch(bm, x));
  }
  return nn::fuse_views(bm, views).fused.value();
}

Mat normalize_rows_value(Mat m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).norm();
    if (n > 0) m.row(r) /= n;
  }
  return m;
}

struct Prediction {
  int class_pos = 0;  // position within the candidate list
  bool tie = false;
  Eigen::VectorXd similarities;
};

/// Argmax of cosine similarity over candidate classes; candidates listed by
/// their positions in the prompt index.
Prediction predict_row(const Mat& fused_row_normalized, const PromptIndex& index,
                       const std::vector<int>& candidates, const EvalOptions& opts) {
  Prediction out;
  out.similarities.resize(static_cast<Eigen::Index>(candidates.size()));
  for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
    const int cls = candidates[ci];
    double sim;
    if (opts.max_over_templates) {
      sim = -2.0;
      for (Eigen::Index t = 0; t < index.template_embeddings.rows(); ++t) {
        if (index.template_class[static_cast<std::size_t>(t)] != cls) continue;
        sim = std::max(sim, fused_row_normalized.row(0).dot(
                                normalize_rows_value(index.template_embeddings.row(t)).row(0)));
      }
    } else {
      Mat c = normalize_rows_value(index.centroids.row(cls));
      sim = fused_row_normalized.row(0).dot(c.row(0));
    }
    out.similarities(static_cast<Eigen::Index>(ci)) = sim;
  }
  Eigen::Index best = 0;
  out.similarities.maxCoeff(&best);
  // Deterministic tie-break: lowest candidate position wins; flag exact ties.
  for (Eigen::Index i = 0; i < out.similarities.size(); ++i) {
    if (out.similarities(i) == out.similarities(best) && i != best) {
      out.tie = true;
      best = std::min(best, i);
    }
  }
  out.class_pos = static_cast<int>(best);
  return out;
}

}  // namespace

ZeroShotResult classify_fused(const Mat& fused_row, const PromptIndex& index,
                              const EvalOptions& opts, const std::vector<int>& candidates) {
  if (fused_row.rows() != 1)
    throw ShapeError("classify_fused: expected a single row, got " +
                     std::to_string(fused_row.rows()));
  std::vector<int> cand = candidates;
  if (cand.empty()) {
    cand.resize(index.class_names.size());
    for (std::size_t i = 0; i < cand.size(); ++i) cand[i] = static_cast<int>(i);
  }
  Prediction p = predict_row(normalize_rows_value(fused_row), index, cand, opts);
  return {p.class_pos, p.similarities, p.tie};
}

ZeroShotResult zero_shot_classify(const data::Sample& sample, const nn::Model& model,
                                  const PromptIndex& index, const EvalOptions& opts) {
  nn::BoundModel bm = nn::bind_frozen(model);
  std::vector<ad::Tensor> views;
  for (Eigen::Index v = 0; v < sample.views.rows(); ++v)
    views.push_back(nn::encode_batch(bm, Mat(sample.views.row(v))));
  Mat fused = nn::fuse_views(bm, views).fused.value();
  return classify_fused(fused, index, opts);
}

Metrics evaluate_fold(const nn::Model& model, const data::Dataset& ds,
                      const std::vector<int>& test_indices, const data::PromptBank& bank,
                      const EvalOptions& opts, const std::vector<int>& class_subset) {
  if (test_indices.empty()) throw ConfigError("evaluate_fold: empty test set");
  PromptIndex index = build_prompt_index(model, bank);

  std::vector<int> candidates;
  if (class_subset.empty()) {
    candidates.resize(index.class_names.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) candidates[i] = static_cast<int>(i);
  } else {
    candidates = class_subset;
    for (int c : candidates)
      if (c < 0 || c >= static_cast<int>(index.class_names.size()))
        throw ConfigError("class subset entry " + std::to_string(c) + " out of range");
  }

  // Restrict test samples to the candidate classes.
  std::set<int> candidate_set(candidates.begin(), candidates.end());
  std::vector<int> kept;
  for (int i : test_indices)
    if (candidate_set.count(ds.samples[static_cast<std::size_t>(i)].class_id)) kept.push_back(i);
  if (kept.empty()) throw ConfigError("evaluate_fold: no test samples in the class subset");

  Mat fused = normalize_rows_value(fused_embeddings(model, ds, kept));

  std::vector<std::string> names;
  for (int c : candidates) names.push_back(index.class_names[static_cast<std::size_t>(c)]);
  Eigen::MatrixXi confusion =
      Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(candidates.size()),
                            static_cast<Eigen::Index>(candidates.size()));
  int ties = 0;
  for (std::size_t row = 0; row < kept.size(); ++row) {
    Prediction p = predict_row(Mat(fused.row(static_cast<Eigen::Index>(row))), index,
                               candidates, opts);
    if (p.tie) ++ties;
    const int truth = ds.samples[static_cast<std::size_t>(kept[row])].class_id;
    const auto truth_pos = std::find(candidates.begin(), candidates.end(), truth) -
                           candidates.begin();
    confusion(static_cast<Eigen::Index>(truth_pos), p.class_pos) += 1;
  }
  return Metrics::from_confusion(confusion, std::move(names), ties);
}

// ---------------------------------------------------------------------------
// Parallel driver
// ---------------------------------------------------------------------------

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(jobs));
  for (int t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

CrossValResult run_cross_validation(const data::Dataset& ds, int k,
                                    const train::TrainConfig& cfg,
                                    const data::PromptBank& bank, int jobs,
                                    const EvalOptions& opts) {
  const std::uint64_t split_seed = derive_seed(cfg.seed, "split");
  std::vector<data::FoldSplit> folds = data::kfold_subject_split(ds, k, split_seed);

  CrossValResult result;
  result.folds.resize(folds.size());
  parallel_for(static_cast<int>(folds.size()), jobs, [&](int f) {
    train::TrainConfig fold_cfg = cfg;
    fold_cfg.seed = derive_seed(cfg.seed, "fold", static_cast<std::uint64_t>(f));
    train::TrainResult tr =
        train::run_training(ds, folds[static_cast<std::size_t>(f)].train_indices, fold_cfg, bank);
    FoldOutcome outcome;
    outcome.fold = f;
    outcome.test_subjects = folds[static_cast<std::size_t>(f)].test_subjects;
    outcome.metrics = evaluate_fold(tr.model, ds,
                                    folds[static_cast<std::size_t>(f)].test_indices, bank, opts);
    result.folds[static_cast<std::size_t>(f)] = std::move(outcome);
  });

  double acc_sum = 0.0, f1_sum = 0.0;
  for (const FoldOutcome& f : result.folds) {
    acc_sum += f.metrics.accuracy;
    f1_sum += f.metrics.macro_f1;
  }
  const double n = static_cast<double>(result.folds.size());
  result.mean_accuracy = acc_sum / n;
  result.mean_macro_f1 = f1_sum / n;
  double var = 0.0;
  for (const FoldOutcome& f : result.folds) {
    const double d = f.metrics.accuracy - result.mean_accuracy;
    var += d * d;
  }
  result.sd_accuracy = std::sqrt(var / n);

  Eigen::MatrixXi pooled = result.folds.front().metrics.confusion;
  int ties = result.folds.front().metrics.tie_count;
  for (std::size_t f = 1; f < result.folds.size(); ++f) {
    pooled += result.folds[f].metrics.confusion;
    ties += result.folds[f].metrics.tie_count;
  }
  result.pooled =
      Metrics::from_confusion(pooled, result.folds.front().metrics.class_names, ties);
  return result;
}

// ---------------------------------------------------------------------------
// Cross-domain
// ---------------------------------------------------------------------------

CrossDomainResult run_cross_domain(const data::Dataset& train_ds,
                                   const data::Dataset& test_ds,
                                   const std::vector<std::string>& class_subset,
                                   const train::TrainConfig& cfg,
                                   const data::PromptBank& bank, int holdout_k,
                                   const EvalOptions& opts) {
  if (class_subset.empty()) throw ConfigError("cross-domain: empty class subset");
  std::vector<int> subset_ids;
  for (const std::string& name : class_subset) subset_ids.push_back(bank.class_index(name));
  for (const data::Sample& s : test_ds.samples)
    if (s.class_id < 0 || s.class_id >= bank.num_classes())
      throw ConfigError("cross-domain: test dataset classes exceed the prompt bank");

  std::vector<data::FoldSplit> folds =
      data::kfold_subject_split(train_ds, holdout_k, derive_seed(cfg.seed, "split"));
  const data::FoldSplit& holdout = folds.front();

  train::TrainResult tr = train::run_training(train_ds, holdout.train_indices, cfg, bank);

  CrossDomainResult result;
  result.class_subset = class_subset;
  result.degenerate_subset = class_subset.size() == 1;
  result.in_domain =
      evaluate_fold(tr.model, train_ds, holdout.test_indices, bank, opts, subset_ids);

  // Evaluate the shifted domain on the same held-out subject ids so an
  // identical test domain reproduces the in-domain numbers exactly.
  std::set<int> held(holdout.test_subjects.begin(), holdout.test_subjects.end());
  std::vector<int> test_indices;
  for (int i = 0; i < test_ds.size(); ++i)
    if (held.count(test_ds.samples[static_cast<std::size_t>(i)].subject_id))
      test_indices.push_back(i);
  if (test_indices.empty())
    for (int i = 0; i < test_ds.size(); ++i) test_indices.push_back(i);
  result.cross_domain = evaluate_fold(tr.model, test_ds, test_indices, bank, opts, subset_ids);
  return result;
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

namespace {

train::TrainConfig variant_config(const train::TrainConfig& base, const std::string& variant) {
  train::TrainConfig cfg = base;
  if (variant == "full") return cfg;
  if (variant == "no_mv_bt") {
    cfg.mv_bt_enabled = false;
    return cfg;
  }
  if (variant == "no_vl_align") {
    cfg.vl_align_enabled = false;
    return cfg;
  }
  if (variant == "no_red_min") {
    cfg.red_min_enabled = false;
    return cfg;
  }
  throw ConfigError("unknown ablation variant: " + variant);
}

}  // namespace

AblationResult run_ablation(const data::Dataset& ds, int k, const train::TrainConfig& cfg,
                            const data::PromptBank& bank, int jobs) {
  if (!cfg.mv_bt_enabled || !cfg.vl_align_enabled || !cfg.red_min_enabled)
    throw ConfigError("ablation needs all components enabled as the full reference");
  AblationResult result;
  result.variants = kAblationVariants;
  result.mean_cv_accuracy.resize(result.variants.size(), 0.0);
  // Folds already parallelize inside each variant's cross-validation.
  for (std::size_t v = 0; v < result.variants.size(); ++v) {
    CrossValResult cv =
        run_cross_validation(ds, k, variant_config(cfg, result.variants[v]), bank, jobs);
    result.mean_cv_accuracy[v] = cv.mean_accuracy;
  }
  const Eigen::Index n = static_cast<Eigen::Index>(result.variants.size());
  result.improvement.resize(n, n);
  for (Eigen::Index u = 0; u < n; ++u)
    for (Eigen::Index v = 0; v < n; ++v)
      result.improvement(u, v) = result.mean_cv_accuracy[static_cast<std::size_t>(u)] -
                                 result.mean_cv_accuracy[static_cast<std::size_t>(v)];
  return result;
}

}  // namespace smile::eval
