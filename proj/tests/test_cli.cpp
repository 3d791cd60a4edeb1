#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "smile/cli.hpp"
#include "smile/io.hpp"

using namespace smile;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("smile_cli_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

// Small-but-real settings so CLI paths run in seconds.
std::vector<std::string> tiny_overrides() {
  return {
      "--set", "dataset.n_subjects=4",   "--set", "dataset.samples_per_subject=3",
      "--set", "dataset.input_dim=8",    "--set", "train.epochs=2",
      "--set", "train.batch_size=4",     "--set", "train.model.hidden_dim=10",
      "--set", "train.model.embed_dim=6", "--set", "train.model.fusion_hidden=4",
      "--set", "eval.k_folds=2",
  };
}

std::vector<std::string> with_tiny(std::vector<std::string> args, const std::string& out) {
  std::vector<std::string> t = tiny_overrides();
  args.insert(args.end(), t.begin(), t.end());
  args.push_back("--out");
  args.push_back(out);
  return args;
}

std::string slurp(const fs::path& p) { return io::read_text_file(p.string()); }

}  // namespace

TEST_CASE("help exits zero for every subcommand") {
  CHECK(cli::run({"--help"}) == 0);
  for (const char* sub : {"gen-data", "train", "eval", "cross-val", "cross-domain", "ablate",
                          "gradcheck", "report"})
    CHECK(cli::run({sub, "--help"}) == 0);
}

TEST_CASE("usage errors exit 2") {
  CHECK(cli::run({"no-such-command"}) == 2);
  CHECK(cli::run({}) == 2);
  CHECK(cli::run({"train", "--no-such-flag"}) == 2);
}

TEST_CASE("validation errors exit 3") {
  TempDir tmp("validation");
  CHECK(cli::run({"gen-data", "--set", "dataset.no_such_key=1", "--out", tmp.str()}) == 3);
  CHECK(cli::run({"gen-data", "--set", "dataset.n_classes=4", "--out", tmp.str()}) == 3);
  CHECK(cli::run({"eval", "--out", tmp.str()}) == 3);  // no checkpoint named
}

TEST_CASE("divergence exits 4") {
  TempDir tmp("divergence");
  auto args = with_tiny({"train", "--set", "train.loss.alpha=1e9"}, tmp.str());
  CHECK(cli::run(args) == 4);
}

TEST_CASE("gen-data is deterministic and writes a provenance record") {
  TempDir a("gen_a"), b("gen_b");
  REQUIRE(cli::run(with_tiny({"gen-data"}, a.str())) == 0);
  REQUIRE(cli::run(with_tiny({"gen-data"}, b.str())) == 0);

  CHECK(slurp(a.path / "synthetic.manifest.json") == slurp(b.path / "synthetic.manifest.json"));
  CHECK(slurp(a.path / "synthetic.f64") == slurp(b.path / "synthetic.f64"));
  CHECK(slurp(a.path / "run.json") == slurp(b.path / "run.json"));

  nlohmann::json run = io::read_json_file((a.path / "run.json").string());
  CHECK(run.at("command") == "gen-data");
  CHECK(run.contains("config"));
  CHECK(run.contains("dataset_digest"));
}

TEST_CASE("the seed flag rederives dataset and train seeds") {
  TempDir a("seed_a"), b("seed_b");
  REQUIRE(cli::run(with_tiny({"gen-data", "--seed", "5"}, a.str())) == 0);
  REQUIRE(cli::run(with_tiny({"gen-data", "--seed", "6"}, b.str())) == 0);
  nlohmann::json ja = io::read_json_file((a.path / "synthetic.manifest.json").string());
  nlohmann::json jb = io::read_json_file((b.path / "synthetic.manifest.json").string());
  CHECK(ja.at("digest") != jb.at("digest"));
}

TEST_CASE("SMILE_SSL_OUT is the output fallback") {
  TempDir tmp("envout");
  setenv("SMILE_SSL_OUT", tmp.str().c_str(), 1);
  std::vector<std::string> args = {"gen-data"};
  std::vector<std::string> t = tiny_overrides();
  args.insert(args.end(), t.begin(), t.end());
  REQUIRE(cli::run(args) == 0);
  unsetenv("SMILE_SSL_OUT");
  CHECK(fs::exists(tmp.path / "synthetic.manifest.json"));
}

TEST_CASE("train then eval a checkpoint; ingest the exported dataset") {
  TempDir tmp("train_eval");
  REQUIRE(cli::run(with_tiny({"gen-data"}, tmp.str())) == 0);
  REQUIRE(cli::run(with_tiny({"train"}, tmp.str())) == 0);

  // Locate the emitted checkpoint prefix.
  std::string prefix;
  for (const auto& e : fs::directory_iterator(tmp.path)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("model_", 0) == 0 && name.find(".ckpt.json") != std::string::npos)
      prefix = (tmp.path / name.substr(0, name.size() - std::string(".ckpt.json").size()))
                   .string();
  }
  REQUIRE_FALSE(prefix.empty());

  // Evaluate against the dataset file written by gen-data (ingestion path).
  auto args = with_tiny({"eval", "--set",
                         "dataset.path=" + (tmp.path / "synthetic").string(), "--set",
                         "eval.checkpoint=" + prefix},
                        tmp.str());
  REQUIRE(cli::run(args) == 0);

  bool found_eval = false;
  for (const auto& e : fs::directory_iterator(tmp.path / "report"))
    if (e.path().filename().string().rfind("eval_", 0) == 0) found_eval = true;
  CHECK(found_eval);
}

TEST_CASE("cross-val emits byte-identical CSVs for identical config and seed") {
  TempDir a("cv_a"), b("cv_b");
  REQUIRE(cli::run(with_tiny({"cross-val", "--seed", "3"}, a.str())) == 0);
  REQUIRE(cli::run(with_tiny({"cross-val", "--seed", "3"}, b.str())) == 0);

  auto find_metrics = [](const fs::path& dir) {
    for (const auto& e : fs::directory_iterator(dir / "report"))
      if (e.path().filename().string().rfind("metrics_", 0) == 0) return e.path();
    throw ConfigError("metrics csv not found");
  };
  CHECK(slurp(find_metrics(a.path)) == slurp(find_metrics(b.path)));
  CHECK(slurp(a.path / "run.json") == slurp(b.path / "run.json"));
}

TEST_CASE("ablate emits tables and figures; report re-renders them") {
  TempDir tmp("ablate");
  REQUIRE(cli::run(with_tiny({"ablate", "--jobs", "2"}, tmp.str())) == 0);

  fs::path ab_csv, im_csv, ab_svg, im_svg;
  for (const auto& e : fs::directory_iterator(tmp.path / "report")) {
    const std::string n = e.path().filename().string();
    if (n.rfind("ablation_", 0) == 0 && e.path().extension() == ".csv") ab_csv = e.path();
    if (n.rfind("improvement_matrix_", 0) == 0 && e.path().extension() == ".csv")
      im_csv = e.path();
    if (n.rfind("ablation_", 0) == 0 && e.path().extension() == ".svg") ab_svg = e.path();
    if (n.rfind("improvement_matrix_", 0) == 0 && e.path().extension() == ".svg")
      im_svg = e.path();
  }
  REQUIRE_FALSE(ab_csv.empty());
  REQUIRE_FALSE(im_csv.empty());
  REQUIRE_FALSE(ab_svg.empty());
  REQUIRE_FALSE(im_svg.empty());
  CHECK(slurp(ab_csv).rfind("variant,mean_cv_accuracy\nfull,", 0) == 0);
  CHECK(slurp(ab_svg).find("<svg") != std::string::npos);

  // Remove the figures, then re-render them from the CSVs alone.
  const std::string ab_svg_bytes = slurp(ab_svg), im_svg_bytes = slurp(im_svg);
  fs::remove(ab_svg);
  fs::remove(im_svg);
  REQUIRE(cli::run({"report", "--set", "report.from=" + (tmp.path / "report").string(),
                    "--out", tmp.str()}) == 0);
  CHECK(slurp(ab_svg) == ab_svg_bytes);
  CHECK(slurp(im_svg) == im_svg_bytes);
}

TEST_CASE("gradcheck subcommand passes and reports per-loss errors") {
  TempDir tmp("gradcheck");
  CHECK(cli::run({"gradcheck", "--seed", "7", "--out", tmp.str()}) == 0);
  nlohmann::json run = io::read_json_file((tmp.path / "run.json").string());
  CHECK(run.at("pass") == true);
  CHECK(run.at("results").size() == 5);
}
