#include "smile/data.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "smile/io.hpp"

namespace smile::data {

// ---------------------------------------------------------------------------
// PromptBank
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_ws(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace

void PromptBank::build_vocab() {
  std::set<std::string> tokens;
  for (const auto& class_templates : templates)
    for (const auto& t : class_templates)
      for (const auto& tok : split_ws(t)) tokens.insert(tok);
  vocab.assign(tokens.begin(), tokens.end());
  vocab_index.clear();
  for (std::size_t i = 0; i < vocab.size(); ++i) vocab_index[vocab[i]] = static_cast<int>(i);
}

PromptBank PromptBank::basic_six() {
  PromptBank b;
  b.mode = "basic-six";
  b.class_names = {"happy", "sad", "surprise", "angry", "disgust", "fear"};
  b.templates = {
      {"a person smiling happily", "a joyful facial expression", "an expression of delight"},
      {"a person looking down sadly", "a face showing sorrow", "a sad expression"},
      {"a surprised facial expression", "a face with surprise expression",
       "a face reacting with amazement"},
      {"a person frowning angrily", "an expression of frustration",
       "a face showing intense anger"},
      {"a person showing disgust", "a face with disgust expression",
       "a disgusted facial reaction"},
      {"a fearful facial expression", "a person appearing afraid",
       "a face with fear expression"},
  };
  b.build_vocab();
  b.validate();
  return b;
}

PromptBank PromptBank::micro_five() {
  PromptBank b;
  b.mode = "micro-five";
  b.class_names = {"positive", "negative", "surprise", "repression", "others"};
  b.templates.reserve(b.class_names.size());
  for (const std::string& cls : b.class_names) {
    b.templates.push_back({"a face with " + cls + " micro expression",
                           "a subtle " + cls + " micro expression",
                           "a brief " + cls + " micro expression on a face"});
  }
  b.build_vocab();
  b.validate();
  return b;
}

PromptBank PromptBank::by_mode(const std::string& mode) {
  if (mode == "basic-six") return basic_six();
  if (mode == "micro-five") return micro_five();
  throw ConfigError("unknown prompt bank mode: " + mode +
                    " (expected basic-six or micro-five)");
}

nlohmann::json PromptBank::to_json() const {
  // Class order is meaningful (it defines class ids), so the mapping is an
  // ordered array of [name, templates] pairs rather than a plain object.
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < class_names.size(); ++c)
    classes.push_back({{"name", class_names[c]}, {"templates", templates[c]}});
  return {{"mode", mode}, {"classes", classes}};
}

PromptBank PromptBank::from_json(const nlohmann::json& j, const std::string& fallback_mode) {
  PromptBank b;
  b.mode = j.value("mode", fallback_mode);
  for (const nlohmann::json& entry : j.at("classes")) {
    b.class_names.push_back(entry.at("name").get<std::string>());
    b.templates.push_back(entry.at("templates").get<std::vector<std::string>>());
  }
  b.build_vocab();
  b.validate();
  return b;
}

void PromptBank::save(const std::string& path) const { io::write_json_file(path, to_json()); }

PromptBank PromptBank::load(const std::string& path) {
  return from_json(io::read_json_file(path));
}

int PromptBank::class_index(const std::string& name) const {
  for (std::size_t i = 0; i < class_names.size(); ++i)
    if (class_names[i] == name) return static_cast<int>(i);
  throw ConfigError("unknown class name: " + name);
}

std::vector<int> PromptBank::tokenize(const std::string& text) const {
  std::vector<int> ids;
  for (const std::string& tok : split_ws(text)) {
    auto it = vocab_index.find(tok);
    if (it == vocab_index.end())
      throw ConfigError("token not in prompt bank vocabulary: '" + tok + "'");
    ids.push_back(it->second);
  }
  if (ids.empty()) throw ConfigError("empty prompt");
  return ids;
}

void PromptBank::validate() const {
  if (class_names.empty()) throw ConfigError("prompt bank has no classes");
  if (class_names.size() != templates.size())
    throw ConfigError("prompt bank class/template tables disagree");
  for (std::size_t c = 0; c < templates.size(); ++c)
    if (templates[c].size() < 2)
      throw ConfigError("class '" + class_names[c] + "' needs at least 2 templates, has " +
                        std::to_string(templates[c].size()));
  if (mode == "micro-five") {
    const std::vector<std::string> want = {"positive", "negative", "surprise", "repression",
                                           "others"};
    if (class_names != want)
      throw ConfigError("micro-five bank must have exactly the classes "
                        "positive/negative/surprise/repression/others");
  }
}

std::vector<int> sample_prompt(int class_id, const PromptBank& bank, std::mt19937_64& rng) {
  if (class_id < 0 || class_id >= bank.num_classes())
    throw ConfigError("sample_prompt: class id " + std::to_string(class_id) +
                      " not in bank with " + std::to_string(bank.num_classes()) + " classes");
  const auto& pool = bank.templates[static_cast<std::size_t>(class_id)];
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  return bank.tokenize(pool[pick(rng)]);
}

// ---------------------------------------------------------------------------
// GeneratorConfig
// ---------------------------------------------------------------------------

void GeneratorConfig::validate() const {
  if (n_subjects < 1 || samples_per_subject < 1 || n_classes < 1 || input_dim < 1 ||
      view_count < 1)
    throw ConfigError("generator counts must all be >= 1");
  if (static_cast<int>(view_angles_deg.size()) != view_count)
    throw ConfigError("view_angles_deg has " + std::to_string(view_angles_deg.size()) +
                      " entries but view_count is " + std::to_string(view_count));
  if (noise_sd < 0 || subject_sd < 0 || anchor_scale <= 0 || transform_perturbation < 0)
    throw ConfigError("generator scales must be non-negative (anchor_scale > 0)");
  if (temporal_frames < 0) throw ConfigError("temporal_frames must be >= 0");
}

nlohmann::json GeneratorConfig::to_json() const {
  return {{"name", name},
          {"n_subjects", n_subjects},
          {"samples_per_subject", samples_per_subject},
          {"n_classes", n_classes},
          {"input_dim", input_dim},
          {"view_count", view_count},
          {"view_angles_deg", view_angles_deg},
          {"noise_sd", noise_sd},
          {"subject_sd", subject_sd},
          {"anchor_scale", anchor_scale},
          {"temporal_frames", temporal_frames},
          {"transform_perturbation", transform_perturbation},
          {"seed", seed},
          {"anchor_seed", anchor_seed},
          {"view_seed", view_seed}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.name = j.at("name").get<std::string>();
  c.n_subjects = j.at("n_subjects").get<int>();
  c.samples_per_subject = j.at("samples_per_subject").get<int>();
  c.n_classes = j.at("n_classes").get<int>();
  c.input_dim = j.at("input_dim").get<int>();
  c.view_count = j.at("view_count").get<int>();
  c.view_angles_deg = j.at("view_angles_deg").get<std::vector<double>>();
  c.noise_sd = j.at("noise_sd").get<double>();
  c.subject_sd = j.at("subject_sd").get<double>();
  c.anchor_scale = j.at("anchor_scale").get<double>();
  c.temporal_frames = j.at("temporal_frames").get<int>();
  c.transform_perturbation = j.at("transform_perturbation").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.anchor_seed = j.at("anchor_seed").get<std::uint64_t>();
  c.view_seed = j.at("view_seed").get<std::uint64_t>();
  return c;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

namespace {

Mat gaussian_mat(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double sd) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = sd * dist(rng);
  return m;
}

/// Random orthogonal map with a canonical sign convention so the result is a
/// pure function of the rng stream.
Mat random_orthogonal(std::mt19937_64& rng, int n) {
  Eigen::MatrixXd g = gaussian_mat(rng, n, n, 1.0);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd diag = qr.matrixQR().diagonal();
  for (int i = 0; i < n; ++i)
    if (diag(i) < 0) q.col(i) *= -1.0;
  return Mat(q);
}

}  // namespace

Dataset generate_synthetic(const GeneratorConfig& cfg, const PromptBank& bank) {
  cfg.validate();
  if (cfg.n_classes != bank.num_classes())
    throw ConfigError("generator wants " + std::to_string(cfg.n_classes) +
                      " classes but the '" + bank.mode + "' prompt bank has " +
                      std::to_string(bank.num_classes()));

  Dataset ds;
  ds.config = cfg;
  ds.class_names = bank.class_names;
  ds.prompt_mode = bank.mode;

  const std::uint64_t anchor_seed = cfg.anchor_seed ? cfg.anchor_seed : derive_seed(cfg.seed, "anchors");
  const std::uint64_t view_seed = cfg.view_seed ? cfg.view_seed : derive_seed(cfg.seed, "views");

  // Class anchors: random unit directions scaled by anchor_scale.
  {
    std::mt19937_64 rng(anchor_seed);
    ds.anchors = gaussian_mat(rng, cfg.n_classes, cfg.input_dim, 1.0);
    for (Eigen::Index c = 0; c < ds.anchors.rows(); ++c)
      ds.anchors.row(c) *= cfg.anchor_scale / ds.anchors.row(c).norm();
  }

  // Fixed per-view linear maps, optionally perturbed for shifted domains.
  {
    std::mt19937_64 rng(view_seed);
    for (int v = 0; v < cfg.view_count; ++v)
      ds.view_transforms.push_back(random_orthogonal(rng, cfg.input_dim));
    if (cfg.transform_perturbation > 0) {
      std::mt19937_64 prng(derive_seed(cfg.seed, "perturb"));
      const double entry_sd = 1.0 / std::sqrt(static_cast<double>(cfg.input_dim));
      for (int v = 0; v < cfg.view_count; ++v)
        ds.view_transforms[static_cast<std::size_t>(v)] +=
            cfg.transform_perturbation * gaussian_mat(prng, cfg.input_dim, cfg.input_dim, entry_sd);
    }
  }

  const double offset_sd = cfg.subject_sd / std::sqrt(static_cast<double>(cfg.input_dim));
  const int total = cfg.n_subjects * cfg.samples_per_subject;
  ds.samples.reserve(static_cast<std::size_t>(total));

  for (int s = 0; s < cfg.n_subjects; ++s) {
    std::mt19937_64 rng(derive_seed(cfg.seed, "subject", static_cast<std::uint64_t>(s)));
    Mat offset = gaussian_mat(rng, 1, cfg.input_dim, offset_sd);
    for (int j = 0; j < cfg.samples_per_subject; ++j) {
      Sample sample;
      sample.subject_id = s;
      sample.class_id = (s * cfg.samples_per_subject + j) % cfg.n_classes;
      const Mat base = ds.anchors.row(sample.class_id) + offset.row(0);

      sample.views.resize(cfg.view_count, cfg.input_dim);
      if (cfg.temporal_frames > 0) {
        // The class signal enters as a temporal ramp so rank pooling, which
        // cancels statics, recovers it.
        const int T = cfg.temporal_frames;
        sample.sequence.resize(T, cfg.input_dim);
        for (int t = 0; t < T; ++t) {
          const double ramp = static_cast<double>(t + 1) / static_cast<double>(T);
          sample.sequence.row(t) = offset.row(0) + ramp * ds.anchors.row(sample.class_id) +
                                   gaussian_mat(rng, 1, cfg.input_dim, cfg.noise_sd).row(0);
        }
        const Mat pooled = rank_pool(sample.sequence);
        for (int v = 0; v < cfg.view_count; ++v) {
          Mat latent = pooled + gaussian_mat(rng, 1, cfg.input_dim, cfg.noise_sd * 0.1);
          sample.views.row(v) =
              (ds.view_transforms[static_cast<std::size_t>(v)] * latent.transpose()).transpose();
        }
      } else {
        for (int v = 0; v < cfg.view_count; ++v) {
          Mat latent = base + gaussian_mat(rng, 1, cfg.input_dim, cfg.noise_sd);
          sample.views.row(v) =
              (ds.view_transforms[static_cast<std::size_t>(v)] * latent.transpose()).transpose();
        }
      }
      ds.samples.push_back(std::move(sample));
    }
  }

  ds.oracle_accuracy = nearest_anchor_oracle_accuracy(ds);
  return ds;
}

double nearest_anchor_oracle_accuracy(const Dataset& ds) {
  if (ds.anchors.size() == 0 || ds.view_transforms.empty())
    throw ConfigError("oracle needs generator internals (dataset was loaded from files?)");
  // Per-view anchor images, rows L2-normalized for cosine scoring.
  std::vector<Mat> view_anchors;
  for (const Mat& q : ds.view_transforms) {
    Mat va = (q * ds.anchors.transpose()).transpose();  // n_classes x input_dim
    for (Eigen::Index c = 0; c < va.rows(); ++c) {
      const double n = va.row(c).norm();
      if (n > 0) va.row(c) /= n;
    }
    view_anchors.push_back(std::move(va));
  }

  int hits = 0;
  for (const Sample& s : ds.samples) {
    Eigen::VectorXd scores = Eigen::VectorXd::Zero(ds.anchors.rows());
    for (Eigen::Index v = 0; v < s.views.rows(); ++v) {
      const double vn = s.views.row(v).norm();
      if (vn == 0) continue;
      scores += view_anchors[static_cast<std::size_t>(v)] * (s.views.row(v) / vn).transpose();
    }
    Eigen::Index best = 0;
    scores.maxCoeff(&best);
    if (static_cast<int>(best) == s.class_id) ++hits;
  }
  return ds.samples.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(ds.samples.size());
}

std::vector<int> Dataset::distinct_subjects() const {
  std::set<int> ids;
  for (const Sample& s : samples) ids.insert(s.subject_id);
  return std::vector<int>(ids.begin(), ids.end());
}

std::uint64_t Dataset::digest() const {
  Fnv1a h;
  for (const Sample& s : samples) {
    h.update(s.views.data(), static_cast<std::size_t>(s.views.size()) * sizeof(double));
    if (s.sequence.size() > 0)
      h.update(s.sequence.data(), static_cast<std::size_t>(s.sequence.size()) * sizeof(double));
  }
  return h.digest();
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

void AugmentPolicy::validate() const {
  if (noise_sd < 0) throw ConfigError("augment noise_sd must be >= 0");
  if (dropout_prob < 0 || dropout_prob >= 1)
    throw ConfigError("augment dropout_prob must be in [0, 1)");
  if (scale_min > scale_max || scale_min <= 0)
    throw ConfigError("augment scale range invalid: [" + fmt_double(scale_min) + ", " +
                      fmt_double(scale_max) + "]");
}

nlohmann::json AugmentPolicy::to_json() const {
  return {{"noise_sd", noise_sd},
          {"dropout_prob", dropout_prob},
          {"scale_min", scale_min},
          {"scale_max", scale_max}};
}

AugmentPolicy AugmentPolicy::from_json(const nlohmann::json& j) {
  AugmentPolicy p;
  p.noise_sd = j.at("noise_sd").get<double>();
  p.dropout_prob = j.at("dropout_prob").get<double>();
  p.scale_min = j.at("scale_min").get<double>();
  p.scale_max = j.at("scale_max").get<double>();
  return p;
}

Mat augment_views(const Mat& views, const AugmentPolicy& policy, std::mt19937_64& rng) {
  policy.validate();
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> scale_dist(policy.scale_min, policy.scale_max);
  Mat out = views;
  for (Eigen::Index v = 0; v < out.rows(); ++v) {
    const double scale = (policy.scale_min == policy.scale_max) ? policy.scale_min
                                                                : scale_dist(rng);
    for (Eigen::Index i = 0; i < out.cols(); ++i) {
      double x = out(v, i);
      if (policy.noise_sd > 0) x += policy.noise_sd * noise(rng);
      if (policy.dropout_prob > 0 && unit(rng) < policy.dropout_prob) x = 0.0;
      out(v, i) = x * scale;
    }
  }
  return out;
}

std::pair<Mat, Mat> augment_pair(const Sample& s, const AugmentPolicy& policy,
                                 std::mt19937_64& rng) {
  Mat a = augment_views(s.views, policy, rng);
  Mat b = augment_views(s.views, policy, rng);
  return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// Rank pooling
// ---------------------------------------------------------------------------

Mat rank_pool(const Mat& sequence) {
  if (sequence.rows() < 1) throw ConfigError("rank_pool: empty sequence");
  const Eigen::Index T = sequence.rows();
  Mat out = Mat::Zero(1, sequence.cols());
  // w_t = 2t - T - 1 is antisymmetric around the center, so summing paired
  // frame differences keeps constant sequences at exactly zero.
  for (Eigen::Index t = 1; 2 * t < T + 1; ++t) {
    const double w = static_cast<double>(2 * t - T - 1);
    out.row(0) += w * (sequence.row(t - 1) - sequence.row(T - t));
  }
  const double peak = out.cwiseAbs().maxCoeff();
  if (peak > 0) out /= peak;
  return out;
}

// ---------------------------------------------------------------------------
// Folds
// ---------------------------------------------------------------------------

std::vector<FoldSplit> kfold_subject_split(const Dataset& ds, int k, std::uint64_t seed) {
  std::vector<int> subjects = ds.distinct_subjects();
  if (k < 2) throw ConfigError("k-fold split needs k >= 2, got " + std::to_string(k));
  if (k > static_cast<int>(subjects.size()))
    throw ConfigError("k = " + std::to_string(k) + " exceeds the " +
                      std::to_string(subjects.size()) + " distinct subjects");

  // Keyed on the sorted subject set, so sample order cannot move subjects
  // between folds.
  std::mt19937_64 rng(derive_seed(seed, "kfold", static_cast<std::uint64_t>(k)));
  std::shuffle(subjects.begin(), subjects.end(), rng);

  std::vector<std::vector<int>> groups(static_cast<std::size_t>(k));
  const int q = static_cast<int>(subjects.size()) / k;
  const int r = static_cast<int>(subjects.size()) % k;
  std::size_t at = 0;
  for (int g = 0; g < k; ++g) {
    const int take = q + (g < r ? 1 : 0);
    for (int i = 0; i < take; ++i) groups[static_cast<std::size_t>(g)].push_back(subjects[at++]);
  }

  std::vector<FoldSplit> folds;
  folds.reserve(static_cast<std::size_t>(k));
  for (int g = 0; g < k; ++g) {
    FoldSplit fold;
    fold.test_subjects = groups[static_cast<std::size_t>(g)];
    std::set<int> test_set(fold.test_subjects.begin(), fold.test_subjects.end());
    for (int i = 0; i < ds.size(); ++i) {
      if (test_set.count(ds.samples[static_cast<std::size_t>(i)].subject_id))
        fold.test_indices.push_back(i);
      else
        fold.train_indices.push_back(i);
    }
    folds.push_back(std::move(fold));
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Dataset files
// ---------------------------------------------------------------------------

void save_dataset(const Dataset& ds, const std::string& prefix) {
  std::vector<double> blob;
  for (const Sample& s : ds.samples)
    blob.insert(blob.end(), s.views.data(), s.views.data() + s.views.size());
  if (ds.config.temporal_frames > 0)
    for (const Sample& s : ds.samples)
      blob.insert(blob.end(), s.sequence.data(), s.sequence.data() + s.sequence.size());

  std::vector<int> subject_ids, class_ids;
  for (const Sample& s : ds.samples) {
    subject_ids.push_back(s.subject_id);
    class_ids.push_back(s.class_id);
  }

  nlohmann::json manifest = {
      {"format", "smile-dataset"},
      {"version", 1},
      {"config", ds.config.to_json()},
      {"classes", ds.class_names},
      {"prompt_mode", ds.prompt_mode},
      {"n_samples", ds.size()},
      {"subject_ids", subject_ids},
      {"class_ids", class_ids},
      {"oracle_accuracy", ds.oracle_accuracy},
      {"digest", hex_digest(ds.digest())},
      {"blob",
       {{"dtype", "float64-le"},
        {"layout",
         "views[sample][view][feature] row-major; sequences[sample][frame][feature] "
         "appended when temporal_frames > 0"},
        {"count", blob.size()}}},
  };
  io::write_json_file(prefix + ".manifest.json", manifest);
  io::write_f64_blob(prefix + ".f64", blob);
}

Dataset load_dataset(const std::string& prefix) {
  nlohmann::json manifest = io::read_json_file(prefix + ".manifest.json");
  if (manifest.value("format", "") != "smile-dataset")
    throw ConfigError(prefix + ".manifest.json is not a dataset manifest");
  std::vector<double> blob = io::read_f64_blob(prefix + ".f64");

  Dataset ds;
  ds.config = GeneratorConfig::from_json(manifest.at("config"));
  ds.class_names = manifest.at("classes").get<std::vector<std::string>>();
  ds.prompt_mode = manifest.value("prompt_mode", std::string("custom"));
  ds.oracle_accuracy = manifest.value("oracle_accuracy", 0.0);
  const int n = manifest.at("n_samples").get<int>();
  const auto subject_ids = manifest.at("subject_ids").get<std::vector<int>>();
  const auto class_ids = manifest.at("class_ids").get<std::vector<int>>();
  if (static_cast<int>(subject_ids.size()) != n || static_cast<int>(class_ids.size()) != n)
    throw ConfigError("dataset manifest id tables disagree with n_samples");

  const int vc = ds.config.view_count;
  const int dim = ds.config.input_dim;
  const int T = ds.config.temporal_frames;
  const std::size_t view_doubles = static_cast<std::size_t>(n) * static_cast<std::size_t>(vc) *
                                   static_cast<std::size_t>(dim);
  const std::size_t seq_doubles =
      T > 0 ? static_cast<std::size_t>(n) * static_cast<std::size_t>(T) *
                  static_cast<std::size_t>(dim)
            : 0;
  if (blob.size() != view_doubles + seq_doubles)
    throw ConfigError("dataset blob has " + std::to_string(blob.size()) +
                      " doubles, expected " + std::to_string(view_doubles + seq_doubles));

  ds.samples.resize(static_cast<std::size_t>(n));
  std::size_t at = 0;
  for (int i = 0; i < n; ++i) {
    Sample& s = ds.samples[static_cast<std::size_t>(i)];
    s.subject_id = subject_ids[static_cast<std::size_t>(i)];
    s.class_id = class_ids[static_cast<std::size_t>(i)];
    s.views.resize(vc, dim);
    std::copy(blob.begin() + static_cast<std::ptrdiff_t>(at),
              blob.begin() + static_cast<std::ptrdiff_t>(at + static_cast<std::size_t>(vc * dim)),
              s.views.data());
    at += static_cast<std::size_t>(vc * dim);
  }
  if (T > 0) {
    for (int i = 0; i < n; ++i) {
      Sample& s = ds.samples[static_cast<std::size_t>(i)];
      s.sequence.resize(T, dim);
      std::copy(blob.begin() + static_cast<std::ptrdiff_t>(at),
                blob.begin() + static_cast<std::ptrdiff_t>(at + static_cast<std::size_t>(T * dim)),
                s.sequence.data());
      at += static_cast<std::size_t>(T * dim);
    }
  }

  const std::string want = manifest.value("digest", std::string());
  if (!want.empty() && want != hex_digest(ds.digest()))
    throw ConfigError("dataset blob digest mismatch for " + prefix);
  return ds;
}

}  // namespace smile::data
