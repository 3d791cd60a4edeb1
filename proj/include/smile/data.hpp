#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "smile/tensor.hpp"

namespace smile::data {

using ad::Mat;

// ---------------------------------------------------------------------------
// Prompt bank
// ---------------------------------------------------------------------------

/// Class-name -> prompt-template table plus the whitespace-token vocabulary
/// built from it. Two banks ship built in: the six basic expressions and the
/// five-class micro-expression set.
struct PromptBank {
  std::string mode;  // "basic-six", "micro-five", or "custom"
  std::vector<std::string> class_names;
  std::vector<std::vector<std::string>> templates;  // per class, >= 2 each
  std::vector<std::string> vocab;                   // sorted unique tokens
  std::unordered_map<std::string, int> vocab_index;

  static PromptBank basic_six();
  static PromptBank micro_five();
  static PromptBank by_mode(const std::string& mode);

  nlohmann::json to_json() const;
  static PromptBank from_json(const nlohmann::json& j, const std::string& mode = "custom");
  void save(const std::string& path) const;
  static PromptBank load(const std::string& path);

  int num_classes() const { return static_cast<int>(class_names.size()); }
  int vocab_size() const { return static_cast<int>(vocab.size()); }
  int class_index(const std::string& name) const;
  std::vector<int> tokenize(const std::string& text) const;

  void validate() const;

 private:
  void build_vocab();
};

/// Uniform draw over the class's templates, tokenized.
std::vector<int> sample_prompt(int class_id, const PromptBank& bank, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Synthetic multiview dataset
// ---------------------------------------------------------------------------

struct GeneratorConfig {
  std::string name = "synthetic";
  int n_subjects = 20;
  int samples_per_subject = 10;
  int n_classes = 6;
  int input_dim = 24;
  int view_count = 3;
  std::vector<double> view_angles_deg = {-30.0, 0.0, 30.0};
  double noise_sd = 0.3;
  double subject_sd = 0.25;
  double anchor_scale = 1.0;
  int temporal_frames = 0;  // 0 = static samples; > 0 = rank-pooled sequences
  double transform_perturbation = 0.0;  // domain-shift knob
  std::uint64_t seed = 1;
  std::uint64_t anchor_seed = 0;  // 0 -> derived from seed
  std::uint64_t view_seed = 0;    // 0 -> derived from seed

  void validate() const;
  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
};

struct Sample {
  int subject_id = 0;
  int class_id = 0;  // latent label: used by the splitter and evaluation only
  Mat views;         // view_count x input_dim
  Mat sequence;      // temporal_frames x input_dim, 0x0 when static
};

struct Dataset {
  GeneratorConfig config;
  std::vector<std::string> class_names;
  std::string prompt_mode;
  std::vector<Sample> samples;
  double oracle_accuracy = 0.0;

  // Generator internals kept for oracles and shifted-domain generation;
  // empty when the dataset was loaded from files.
  Mat anchors;                        // n_classes x input_dim
  std::vector<Mat> view_transforms;   // per view, input_dim x input_dim

  int size() const { return static_cast<int>(samples.size()); }
  std::vector<int> distinct_subjects() const;
  std::uint64_t digest() const;  // hash of every float in the payload
};

/// Deterministic synthetic benchmark: per class a random anchor direction,
/// per subject a fixed offset, per view a fixed near-orthogonal linear map.
/// Records the nearest-anchor oracle accuracy for the generated data.
Dataset generate_synthetic(const GeneratorConfig& cfg, const PromptBank& bank);

/// Classifies by cosine similarity against the per-view transformed class
/// anchors, summed over views. The learnability reference for the benchmark.
double nearest_anchor_oracle_accuracy(const Dataset& ds);

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

struct AugmentPolicy {
  double noise_sd = 0.1;
  double dropout_prob = 0.05;
  double scale_min = 0.95;
  double scale_max = 1.05;

  void validate() const;
  nlohmann::json to_json() const;
  static AugmentPolicy from_json(const nlohmann::json& j);
};

/// One stochastic distortion of a view matrix (per-row noise, per-entry
/// dropout, one scale factor per view row).
Mat augment_views(const Mat& views, const AugmentPolicy& policy, std::mt19937_64& rng);

/// Two independent distortions of the same sample's views.
std::pair<Mat, Mat> augment_pair(const Sample& s, const AugmentPolicy& policy,
                                 std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Temporal rank pooling
// ---------------------------------------------------------------------------

/// Approximate rank pooling with linear weights w_t = 2t - T - 1 (t = 1..T),
/// followed by max-abs normalization. Constant sequences map to exact zero.
Mat rank_pool(const Mat& sequence);  // T x D -> 1 x D

// ---------------------------------------------------------------------------
// Subject-independent folds
// ---------------------------------------------------------------------------

struct FoldSplit {
  std::vector<int> train_indices;
  std::vector<int> test_indices;
  std::vector<int> test_subjects;
};

/// Partitions subjects (not samples) into k near-equal groups, seeded. Every
/// sample lands in exactly one test fold and no subject straddles the split.
std::vector<FoldSplit> kfold_subject_split(const Dataset& ds, int k, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Dataset files: <prefix>.manifest.json + <prefix>.f64
// Layout: all samples' views (sample-major, then view, then feature), then
// all samples' sequences when temporal_frames > 0.
// ---------------------------------------------------------------------------

void save_dataset(const Dataset& ds, const std::string& prefix);
Dataset load_dataset(const std::string& prefix);

}  // namespace smile::data
