#include "smile/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "smile/config.hpp"
#include "smile/eval.hpp"
#include "smile/gradcheck.hpp"
#include "smile/io.hpp"
#include "smile/report.hpp"

namespace smile::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
  std::vector<std::string> sets;
};

void flatten_keys(const nlohmann::json& j, const std::string& prefix,
                  std::vector<std::string>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it.value().is_object())
      flatten_keys(it.value(), key, out);
    else
      out.push_back(key);
  }
}

std::string config_key_footer() {
  std::vector<std::string> keys;
  flatten_keys(config::RunConfig::default_json(), "", keys);
  std::string out = "Config keys (settable via --set key=value):\n";
  for (const std::string& k : keys) out += "  " + k + "\n";
  return out;
}

void add_common(CLI::App* sub, CommonOpts& opts, const std::string& footer) {
  sub->add_option("--config", opts.config_path, "JSON run config (merged over defaults)");
  sub->add_option("--seed", opts.seed, "Base seed; rederives every seed in the config")
      ->trigger_on_parse()
      ->each([&opts](const std::string&) { opts.seed_set = true; });
  sub->add_option("--out", opts.out_dir, "Output directory (default $SMILE_SSL_OUT or ./out)");
  sub->add_option("--jobs", opts.jobs, "Worker pool size for independent folds/variants")
      ->check(CLI::PositiveNumber);
  sub->add_option("--set", opts.sets, "Override a config key: --set train.epochs=50")
      ->take_all();
  sub->footer(footer);
}

struct Resolved {
  nlohmann::json config_json;
  config::RunConfig rc;
  fs::path out;
  fs::path report_dir;
  std::string run_id;
};

Resolved resolve(const std::string& command, const CommonOpts& opts) {
  nlohmann::json j = config::RunConfig::default_json();
  if (!opts.config_path.empty())
    j = config::merge_over_defaults(io::read_json_file(opts.config_path));
  if (opts.seed_set) config::apply_seed_flag(j, opts.seed);
  j = config::apply_overrides(j, opts.sets);

  Resolved r;
  r.rc = config::RunConfig::from_json(j);
  r.config_json = j;

  std::string out = opts.out_dir;
  if (out.empty()) {
    const char* env = std::getenv("SMILE_SSL_OUT");
    out = (env != nullptr && *env != '\0') ? env : "out";
  }
  r.out = fs::path(out);
  r.report_dir = r.out / "report";
  fs::create_directories(r.report_dir);

  Fnv1a h;
  h.update_str(command);
  h.update_str(j.dump());
  r.run_id = hex_digest(h.digest()).substr(0, 12);
  return r;
}

void write_run_record(const std::string& command, const CommonOpts& opts, const Resolved& r,
                      const nlohmann::json& extra, const std::vector<std::string>& outputs) {
  nlohmann::json record = {
      {"command", command},
      {"artifact_version", kVersion},
      {"run_id", r.run_id},
      {"config", r.config_json},
      {"seed_flag", opts.seed_set ? nlohmann::json(opts.seed) : nlohmann::json(nullptr)},
      {"jobs", opts.jobs},
      {"outputs", outputs},
  };
  record.update(extra);
  io::write_json_file((r.out / "run.json").string(), record);
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

int cmd_gen_data(const CommonOpts& opts) {
  Resolved r = resolve("gen-data", opts);
  data::PromptBank bank = config::load_bank(r.rc);
  data::Dataset ds = data::generate_synthetic(r.rc.dataset, bank);
  const std::string prefix = (r.out / ds.config.name).string();
  data::save_dataset(ds, prefix);
  write_run_record("gen-data", opts, r,
                   {{"dataset_digest", hex_digest(ds.digest())},
                    {"oracle_accuracy", ds.oracle_accuracy}},
                   {prefix + ".manifest.json", prefix + ".f64"});
  std::cout << "dataset " << ds.config.name << ": " << ds.size() << " samples, oracle "
            << fmt_double(ds.oracle_accuracy) << ", digest " << hex_digest(ds.digest())
            << "\n";
  return 0;
}

int cmd_train(const CommonOpts& opts) {
  Resolved r = resolve("train", opts);
  data::PromptBank bank = config::load_bank(r.rc);
  data::Dataset ds = config::load_or_generate(r.rc, bank);
  std::vector<int> all(static_cast<std::size_t>(ds.size()));
  for (int i = 0; i < ds.size(); ++i) all[static_cast<std::size_t>(i)] = i;

  const std::string ckpt_prefix = (r.out / ("model_" + r.run_id)).string();
  train::EpochCallback on_epoch;
  if (r.rc.train.checkpoint_every > 0) {
    on_epoch = [&](int epoch, const nn::Model& m, const train::AdamW& o, long step) {
      if ((epoch + 1) % r.rc.train.checkpoint_every == 0)
        nn::save_checkpoint(train::make_train_checkpoint(m, o, epoch + 1, step),
                            ckpt_prefix + "_epoch" + std::to_string(epoch + 1));
    };
  }
  train::TrainResult tr =
      train::run_training(ds, all, r.rc.train, bank, std::nullopt, on_epoch);
  nn::save_checkpoint(
      train::make_train_checkpoint(tr.model, tr.optimizer, r.rc.train.epochs, tr.global_step),
      ckpt_prefix);

  const std::string csv_path = (r.report_dir / ("metrics_" + r.run_id + ".csv")).string();
  io::write_text_file(csv_path, train::metrics_csv(tr.log));
  write_run_record("train", opts, r,
                   {{"dataset_digest", hex_digest(ds.digest())},
                    {"checkpoint_digest", hex_digest(tr.model.digest())}},
                   {ckpt_prefix + ".ckpt.json", ckpt_prefix + ".ckpt.f64", csv_path});
  std::cout << "trained " << r.rc.train.epochs << " epochs (" << tr.global_step
            << " steps); final total "
            << (tr.log.empty() ? std::string("n/a")
                               : fmt_double(tr.log.back().stats.breakdown.total))
            << "; checkpoint " << ckpt_prefix << ".ckpt.*\n";
  return 0;
}

int cmd_eval(const CommonOpts& opts) {
  Resolved r = resolve("eval", opts);
  if (r.rc.eval.checkpoint.empty())
    throw ConfigError("eval needs a checkpoint: --set eval.checkpoint=<prefix>");
  data::PromptBank bank = config::load_bank(r.rc);
  data::Dataset ds = config::load_or_generate(r.rc, bank);
  nn::Checkpoint ckpt = nn::load_checkpoint(r.rc.eval.checkpoint);

  std::vector<int> all(static_cast<std::size_t>(ds.size()));
  for (int i = 0; i < ds.size(); ++i) all[static_cast<std::size_t>(i)] = i;
  eval::EvalOptions eo;
  eo.max_over_templates = r.rc.eval.max_over_templates;
  eval::Metrics m = eval::evaluate_fold(ckpt.model, ds, all, bank, eo);

  const std::string json_path = (r.report_dir / ("eval_" + r.run_id + ".json")).string();
  io::write_json_file(json_path, m.to_json());
  write_run_record("eval", opts, r, {{"dataset_digest", hex_digest(ds.digest())}},
                   {json_path});
  std::cout << "zero-shot accuracy " << fmt_double(m.accuracy) << ", macro-F1 "
            << fmt_double(m.macro_f1) << " over " << m.total << " samples\n";
  return 0;
}

int cmd_cross_val(const CommonOpts& opts) {
  Resolved r = resolve("cross-val", opts);
  data::PromptBank bank = config::load_bank(r.rc);
  data::Dataset ds = config::load_or_generate(r.rc, bank);
  eval::EvalOptions eo;
  eo.max_over_templates = r.rc.eval.max_over_templates;
  eval::CrossValResult cv =
      eval::run_cross_validation(ds, r.rc.eval.k_folds, r.rc.train, bank, opts.jobs, eo);

  const std::string csv_path = (r.report_dir / ("metrics_" + r.run_id + ".csv")).string();
  io::write_text_file(csv_path, report::cross_val_csv(cv));
  const std::string pooled_path =
      (r.report_dir / ("cross_val_" + r.run_id + ".json")).string();
  io::write_json_file(pooled_path,
                      {{"mean_accuracy", cv.mean_accuracy},
                       {"sd_accuracy", cv.sd_accuracy},
                       {"mean_macro_f1", cv.mean_macro_f1},
                       {"pooled", cv.pooled.to_json()}});
  write_run_record("cross-val", opts, r, {{"dataset_digest", hex_digest(ds.digest())}},
                   {csv_path, pooled_path});
  std::cout << r.rc.eval.k_folds << "-fold zero-shot accuracy " << fmt_double(cv.mean_accuracy)
            << " +/- " << fmt_double(cv.sd_accuracy) << "\n";
  return 0;
}

int cmd_cross_domain(const CommonOpts& opts) {
  Resolved r = resolve("cross-domain", opts);
  data::PromptBank bank = config::load_bank(r.rc);
  data::Dataset train_ds = config::load_or_generate(r.rc, bank);
  data::Dataset test_ds =
      data::generate_synthetic(config::shifted_domain(r.rc.dataset, r.rc.cross_domain), bank);

  eval::EvalOptions eo;
  eo.max_over_templates = r.rc.eval.max_over_templates;
  eval::CrossDomainResult cd =
      eval::run_cross_domain(train_ds, test_ds, r.rc.cross_domain.class_subset, r.rc.train,
                             bank, r.rc.cross_domain.holdout_k, eo);

  const std::string json_path =
      (r.report_dir / ("cross_domain_" + r.run_id + ".json")).string();
  io::write_json_file(json_path,
                      {{"class_subset", cd.class_subset},
                       {"degenerate_subset", cd.degenerate_subset},
                       {"in_domain", cd.in_domain.to_json()},
                       {"cross_domain", cd.cross_domain.to_json()},
                       {"degradation", cd.in_domain.accuracy - cd.cross_domain.accuracy}});
  const std::string csv_path =
      (r.report_dir / ("cross_domain_" + r.run_id + ".csv")).string();
  io::write_text_file(csv_path, "setting,accuracy,macro_f1,n\nin_domain," +
                                    fmt_double(cd.in_domain.accuracy) + "," +
                                    fmt_double(cd.in_domain.macro_f1) + "," +
                                    std::to_string(cd.in_domain.total) + "\ncross_domain," +
                                    fmt_double(cd.cross_domain.accuracy) + "," +
                                    fmt_double(cd.cross_domain.macro_f1) + "," +
                                    std::to_string(cd.cross_domain.total) + "\n");
  write_run_record("cross-domain", opts, r,
                   {{"dataset_digest", hex_digest(train_ds.digest())},
                    {"shifted_digest", hex_digest(test_ds.digest())}},
                   {json_path, csv_path});
  std::cout << "in-domain " << fmt_double(cd.in_domain.accuracy) << ", cross-domain "
            << fmt_double(cd.cross_domain.accuracy)
            << (cd.degenerate_subset ? " (degenerate single-class subset)" : "") << "\n";
  return 0;
}

int cmd_ablate(const CommonOpts& opts) {
  Resolved r = resolve("ablate", opts);
  data::PromptBank bank = config::load_bank(r.rc);
  data::Dataset ds = config::load_or_generate(r.rc, bank);
  eval::AblationResult ab =
      eval::run_ablation(ds, r.rc.eval.k_folds, r.rc.train, bank, opts.jobs);

  const std::string ab_csv = (r.report_dir / ("ablation_" + r.run_id + ".csv")).string();
  const std::string im_csv =
      (r.report_dir / ("improvement_matrix_" + r.run_id + ".csv")).string();
  const std::string ab_svg = (r.report_dir / ("ablation_" + r.run_id + ".svg")).string();
  const std::string im_svg =
      (r.report_dir / ("improvement_matrix_" + r.run_id + ".svg")).string();
  io::write_text_file(ab_csv, report::ablation_csv(ab));
  io::write_text_file(im_csv, report::improvement_csv(ab));
  io::write_text_file(ab_svg, report::bar_chart_svg(ab.variants, ab.mean_cv_accuracy,
                                                    "Mean CV accuracy per variant"));
  io::write_text_file(im_svg, report::heatmap_svg(ab.variants, ab.improvement,
                                                  "Pairwise accuracy improvement"));
  write_run_record("ablate", opts, r, {{"dataset_digest", hex_digest(ds.digest())}},
                   {ab_csv, im_csv, ab_svg, im_svg});
  for (std::size_t v = 0; v < ab.variants.size(); ++v)
    std::cout << ab.variants[v] << ": " << fmt_double(ab.mean_cv_accuracy[v]) << "\n";
  return 0;
}

int cmd_gradcheck(const CommonOpts& opts) {
  Resolved r = resolve("gradcheck", opts);
  const std::uint64_t seed = opts.seed_set ? opts.seed : r.rc.train.seed;
  std::vector<gradcheck::Entry> entries = gradcheck::run_suite(seed);
  bool ok = true;
  nlohmann::json results = nlohmann::json::object();
  for (const auto& e : entries) {
    std::cout << "gradcheck " << e.name << ": max rel err " << fmt_double(e.max_rel_err)
              << "\n";
    results[e.name] = e.max_rel_err;
    ok = ok && e.max_rel_err < 1e-4;
  }
  write_run_record("gradcheck", opts, r, {{"results", results}, {"pass", ok}}, {});
  if (!ok) throw NumericError("gradient check exceeded the 1e-4 bound");
  std::cout << "all gradients within 1e-4 of central differences\n";
  return 0;
}

int cmd_report(const CommonOpts& opts) {
  Resolved r = resolve("report", opts);
  if (r.rc.report.from.empty())
    throw ConfigError("report needs a source directory: --set report.from=<dir>");
  const fs::path from(r.rc.report.from);
  if (!fs::is_directory(from)) throw ConfigError("not a directory: " + from.string());

  std::vector<std::string> outputs;
  for (const auto& entry : fs::directory_iterator(from)) {
    const std::string name = entry.path().filename().string();
    auto parse_csv = [&](const std::string& text) {
      std::vector<std::vector<std::string>> rows;
      std::istringstream in(text);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
      }
      return rows;
    };
    if (name.rfind("ablation_", 0) == 0 && entry.path().extension() == ".csv") {
      auto rows = parse_csv(io::read_text_file(entry.path().string()));
      std::vector<std::string> labels;
      std::vector<double> values;
      for (std::size_t i = 1; i < rows.size(); ++i) {
        labels.push_back(rows[i].at(0));
        values.push_back(std::stod(rows[i].at(1)));
      }
      const std::string svg = (from / (entry.path().stem().string() + ".svg")).string();
      io::write_text_file(svg, report::bar_chart_svg(labels, values,
                                                     "Mean CV accuracy per variant"));
      outputs.push_back(svg);
    } else if (name.rfind("improvement_matrix_", 0) == 0 &&
               entry.path().extension() == ".csv") {
      auto rows = parse_csv(io::read_text_file(entry.path().string()));
      std::vector<std::string> labels(rows.at(0).begin() + 1, rows.at(0).end());
      ad::Mat m(static_cast<Eigen::Index>(labels.size()),
                static_cast<Eigen::Index>(labels.size()));
      for (std::size_t i = 1; i < rows.size(); ++i)
        for (std::size_t c = 1; c < rows[i].size(); ++c)
          m(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(c - 1)) =
              std::stod(rows[i][c]);
      const std::string svg = (from / (entry.path().stem().string() + ".svg")).string();
      io::write_text_file(svg, report::heatmap_svg(labels, m,
                                                   "Pairwise accuracy improvement"));
      outputs.push_back(svg);
    }
  }
  std::sort(outputs.begin(), outputs.end());
  write_run_record("report", opts, r, {}, outputs);
  std::cout << "rendered " << outputs.size() << " figure(s)\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Self-supervised multi-view vision-language training sandbox"};
  app.require_subcommand(1);
  const std::string footer = config_key_footer();

  struct SubSpec {
    const char* name;
    const char* desc;
    int (*fn)(const CommonOpts&);
  };
  const std::vector<SubSpec> specs = {
      {"gen-data", "Generate a synthetic multiview dataset", cmd_gen_data},
      {"train", "Train on a dataset and write a checkpoint", cmd_train},
      {"eval", "Zero-shot evaluate a checkpoint on a dataset", cmd_eval},
      {"cross-val", "Subject-independent k-fold cross-validation", cmd_cross_val},
      {"cross-domain", "Train on one domain, evaluate on a shifted one", cmd_cross_domain},
      {"ablate", "Cross-validate every loss-component variant", cmd_ablate},
      {"gradcheck", "Check analytic gradients against finite differences", cmd_gradcheck},
      {"report", "Re-render SVG figures from emitted CSV tables", cmd_report},
  };

  std::vector<std::pair<CLI::App*, const SubSpec*>> subs;
  std::vector<std::unique_ptr<CommonOpts>> opt_store;
  for (const SubSpec& spec : specs) {
    CLI::App* sub = app.add_subcommand(spec.name, spec.desc);
    opt_store.push_back(std::make_unique<CommonOpts>());
    add_common(sub, *opt_store.back(), footer);
    subs.emplace_back(sub, &spec);
  }

  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // usage error
  }

  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i].first->parsed()) continue;
    try {
      return subs[i].second->fn(*opt_store[i]);
    } catch (const DivergenceError& e) {
      std::cerr << "error [divergence]: " << e.what() << "\n";
      return 4;
    } catch (const Error& e) {
      std::cerr << "error [" << e.category() << "]: " << e.what() << "\n";
      return 3;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 3;
    }
  }
  return 2;
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> full;
  full.push_back("smile");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(full.size());
  for (const std::string& s : full) argv.push_back(s.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace smile::cli
