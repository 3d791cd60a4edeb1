#pragma once

#include <string>
#include <vector>

#include "smile/data.hpp"
#include "smile/train.hpp"

namespace smile::config {

struct EvalSection {
  int k_folds = 10;
  bool max_over_templates = false;
  std::string checkpoint;  // consumed by the eval subcommand
};

/// Domain-shift recipe: same class anchors and base view geometry as the
/// training domain, different subjects/noise plus a small transform
/// perturbation.
struct CrossDomainSection {
  double noise_sd = 0.45;
  double subject_sd = 0.35;
  double transform_perturbation = 0.1;
  std::uint64_t seed_offset = 1;
  std::vector<std::string> class_subset = {"happy", "disgust"};
  int holdout_k = 5;
};

struct ReportSection {
  std::string from;  // directory with previously emitted CSV tables
};

struct RunConfig {
  data::GeneratorConfig dataset;
  std::string dataset_path;  // when non-empty, ingest files instead of generating
  std::string prompt_mode = "basic-six";
  std::string prompt_path;  // optional custom bank JSON
  train::TrainConfig train;
  EvalSection eval;
  CrossDomainSection cross_domain;
  ReportSection report;

  nlohmann::json to_json() const;
  /// Strict parse: unknown keys anywhere are rejected.
  static RunConfig from_json(const nlohmann::json& j);
  /// The complete default configuration tree (also shipped as
  /// configs/default.json).
  static nlohmann::json default_json();
};

/// Merges a (possibly partial) user config over the defaults.
nlohmann::json merge_over_defaults(const nlohmann::json& user);

/// Applies repeatable `--set dotted.key=value` overrides. Values parse as
/// JSON when possible, else as strings.
nlohmann::json apply_overrides(nlohmann::json j, const std::vector<std::string>& sets);

/// The --seed flag rederives every seed in the tree from one base value.
void apply_seed_flag(nlohmann::json& j, std::uint64_t seed);

data::PromptBank load_bank(const RunConfig& rc);
data::Dataset load_or_generate(const RunConfig& rc, const data::PromptBank& bank);

/// The shifted-domain generator config implied by the cross_domain section.
data::GeneratorConfig shifted_domain(const data::GeneratorConfig& base,
                                     const CrossDomainSection& cd);

}  // namespace smile::config
