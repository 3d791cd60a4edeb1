#include "smile/config.hpp"

#include <set>

#include "smile/io.hpp"

namespace smile::config {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError("config section '" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown config key '" + where + "." + it.key() + "'");
}

}  // namespace

nlohmann::json RunConfig::default_json() {
  RunConfig d;
  return d.to_json();
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json ds = dataset.to_json();
  ds["path"] = dataset_path;
  nlohmann::json tr = train.to_json();
  // vocab_size/input_dim are bound at run time from the bank and dataset.
  tr["model"] = {{"hidden_dim", train.model.hidden_dim},
                 {"embed_dim", train.model.embed_dim},
                 {"fusion_hidden", train.model.fusion_hidden},
                 {"text_frozen", train.model.text_frozen}};
  return {{"dataset", ds},
          {"prompts", {{"mode", prompt_mode}, {"path", prompt_path}}},
          {"train", tr},
          {"eval",
           {{"k_folds", eval.k_folds},
            {"max_over_templates", eval.max_over_templates},
            {"checkpoint", eval.checkpoint}}},
          {"cross_domain",
           {{"noise_sd", cross_domain.noise_sd},
            {"subject_sd", cross_domain.subject_sd},
            {"transform_perturbation", cross_domain.transform_perturbation},
            {"seed_offset", cross_domain.seed_offset},
            {"class_subset", cross_domain.class_subset},
            {"holdout_k", cross_domain.holdout_k}}},
          {"report", {{"from", report.from}}}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  check_keys(j, {"dataset", "prompts", "train", "eval", "cross_domain", "report"}, "<root>");
  RunConfig rc;

  const nlohmann::json& ds = j.at("dataset");
  check_keys(ds,
             {"name", "n_subjects", "samples_per_subject", "n_classes", "input_dim",
              "view_count", "view_angles_deg", "noise_sd", "subject_sd", "anchor_scale",
              "temporal_frames", "transform_perturbation", "seed", "anchor_seed",
              "view_seed", "path"},
             "dataset");
  nlohmann::json ds_only = ds;
  ds_only.erase("path");
  rc.dataset = data::GeneratorConfig::from_json(ds_only);
  rc.dataset_path = ds.at("path").get<std::string>();

  const nlohmann::json& pr = j.at("prompts");
  check_keys(pr, {"mode", "path"}, "prompts");
  rc.prompt_mode = pr.at("mode").get<std::string>();
  rc.prompt_path = pr.at("path").get<std::string>();

  const nlohmann::json& tr = j.at("train");
  check_keys(tr,
             {"epochs", "batch_size", "learning_rate", "weight_decay", "seed",
              "checkpoint_every", "mv_bt_enabled", "vl_align_enabled", "red_min_enabled",
              "lr_schedule", "loss", "augment", "model"},
             "train");
  check_keys(tr.at("loss"),
             {"alpha", "beta", "gamma", "lambda_mv_bt", "lambda_red_min", "tau",
              "standardize", "symmetric_align", "standardize_eps"},
             "train.loss");
  check_keys(tr.at("augment"), {"noise_sd", "dropout_prob", "scale_min", "scale_max"},
             "train.augment");
  check_keys(tr.at("model"), {"hidden_dim", "embed_dim", "fusion_hidden", "text_frozen"},
             "train.model");
  nlohmann::json tr_full = tr;
  tr_full["model"] = {{"input_dim", rc.dataset.input_dim},
                      {"hidden_dim", tr.at("model").at("hidden_dim")},
                      {"embed_dim", tr.at("model").at("embed_dim")},
                      {"fusion_hidden", tr.at("model").at("fusion_hidden")},
                      {"vocab_size", 1},  // bound from the bank later
                      {"text_frozen", tr.at("model").at("text_frozen")}};
  rc.train = train::TrainConfig::from_json(tr_full);

  const nlohmann::json& ev = j.at("eval");
  check_keys(ev, {"k_folds", "max_over_templates", "checkpoint"}, "eval");
  rc.eval.k_folds = ev.at("k_folds").get<int>();
  rc.eval.max_over_templates = ev.at("max_over_templates").get<bool>();
  rc.eval.checkpoint = ev.at("checkpoint").get<std::string>();

  const nlohmann::json& cd = j.at("cross_domain");
  check_keys(cd,
             {"noise_sd", "subject_sd", "transform_perturbation", "seed_offset",
              "class_subset", "holdout_k"},
             "cross_domain");
  rc.cross_domain.noise_sd = cd.at("noise_sd").get<double>();
  rc.cross_domain.subject_sd = cd.at("subject_sd").get<double>();
  rc.cross_domain.transform_perturbation = cd.at("transform_perturbation").get<double>();
  rc.cross_domain.seed_offset = cd.at("seed_offset").get<std::uint64_t>();
  rc.cross_domain.class_subset = cd.at("class_subset").get<std::vector<std::string>>();
  rc.cross_domain.holdout_k = cd.at("holdout_k").get<int>();

  const nlohmann::json& rp = j.at("report");
  check_keys(rp, {"from"}, "report");
  rc.report.from = rp.at("from").get<std::string>();
  return rc;
}

nlohmann::json merge_over_defaults(const nlohmann::json& user) {
  nlohmann::json j = RunConfig::default_json();
  j.merge_patch(user);
  return j;
}

nlohmann::json apply_overrides(nlohmann::json j, const std::vector<std::string>& sets) {
  for (const std::string& kv : sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);

    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // plain string

    nlohmann::json* node = &j;
    std::size_t start = 0;
    while (true) {
      const std::size_t dot = key.find('.', start);
      const std::string part = key.substr(start, dot - start);
      if (part.empty()) throw ConfigError("--set key has an empty segment: '" + key + "'");
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
  return j;
}

void apply_seed_flag(nlohmann::json& j, std::uint64_t seed) {
  j["dataset"]["seed"] = derive_seed(seed, "dataset");
  j["train"]["seed"] = derive_seed(seed, "train");
}

data::PromptBank load_bank(const RunConfig& rc) {
  if (!rc.prompt_path.empty()) return data::PromptBank::load(rc.prompt_path);
  return data::PromptBank::by_mode(rc.prompt_mode);
}

data::Dataset load_or_generate(const RunConfig& rc, const data::PromptBank& bank) {
  if (!rc.dataset_path.empty()) {
    data::Dataset ds = data::load_dataset(rc.dataset_path);
    if (ds.class_names != bank.class_names)
      throw ConfigError("dataset classes do not match the prompt bank");
    return ds;
  }
  return data::generate_synthetic(rc.dataset, bank);
}

data::GeneratorConfig shifted_domain(const data::GeneratorConfig& base,
                                     const CrossDomainSection& cd) {
  data::GeneratorConfig s = base;
  s.name = base.name + "_shift";
  s.noise_sd = cd.noise_sd;
  s.subject_sd = cd.subject_sd;
  s.transform_perturbation = cd.transform_perturbation;
  s.seed = base.seed + cd.seed_offset;
  // Pin the shared structure so both domains see the same class anchors and
  // the same base view geometry.
  s.anchor_seed = base.anchor_seed ? base.anchor_seed : derive_seed(base.seed, "anchors");
  s.view_seed = base.view_seed ? base.view_seed : derive_seed(base.seed, "views");
  return s;
}

}  // namespace smile::config
