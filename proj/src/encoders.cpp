#include "smile/encoders.hpp"

#include <cmath>
#include <random>

#include "smile/io.hpp"

namespace smile::nn {

void ModelConfig::validate() const {
  if (input_dim < 1 || hidden_dim < 1 || embed_dim < 1 || fusion_hidden < 1)
    throw ConfigError("model dimensions must be >= 1");
  if (vocab_size < 1)
    throw ConfigError("vocab_size must be >= 1 (set from the prompt bank)");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"input_dim", input_dim},     {"hidden_dim", hidden_dim},
          {"embed_dim", embed_dim},     {"fusion_hidden", fusion_hidden},
          {"vocab_size", vocab_size},   {"text_frozen", text_frozen}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.input_dim = j.at("input_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.fusion_hidden = j.at("fusion_hidden").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.text_frozen = j.at("text_frozen").get<bool>();
  return c;
}

namespace {

Mat uniform_init(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, int fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.config = cfg;
  std::mt19937_64 rng(seed);
  m.enc_w1 = uniform_init(rng, cfg.input_dim, cfg.hidden_dim, cfg.input_dim);
  m.enc_b1 = uniform_init(rng, 1, cfg.hidden_dim, cfg.input_dim);
  m.enc_w2 = uniform_init(rng, cfg.hidden_dim, cfg.embed_dim, cfg.hidden_dim);
  m.enc_b2 = uniform_init(rng, 1, cfg.embed_dim, cfg.hidden_dim);
  m.proj_w = uniform_init(rng, cfg.embed_dim, cfg.embed_dim, cfg.embed_dim);
  m.proj_b = uniform_init(rng, 1, cfg.embed_dim, cfg.embed_dim);
  m.fus_w1 = uniform_init(rng, cfg.embed_dim, cfg.fusion_hidden, cfg.embed_dim);
  m.fus_b1 = uniform_init(rng, 1, cfg.fusion_hidden, cfg.embed_dim);
  m.fus_w2 = uniform_init(rng, cfg.fusion_hidden, 1, cfg.fusion_hidden);
  m.fus_b2 = uniform_init(rng, 1, 1, cfg.fusion_hidden);
  m.text_table = uniform_init(rng, cfg.vocab_size, cfg.embed_dim, cfg.embed_dim);
  return m;
}

std::vector<std::pair<std::string, Mat*>> Model::named_params() {
  return {{"enc_w1", &enc_w1}, {"enc_b1", &enc_b1}, {"enc_w2", &enc_w2},
          {"enc_b2", &enc_b2}, {"proj_w", &proj_w}, {"proj_b", &proj_b},
          {"fus_w1", &fus_w1}, {"fus_b1", &fus_b1}, {"fus_w2", &fus_w2},
          {"fus_b2", &fus_b2}, {"text_table", &text_table}};
}

std::vector<std::pair<std::string, const Mat*>> Model::named_params() const {
  auto mutable_view = const_cast<Model*>(this)->named_params();
  std::vector<std::pair<std::string, const Mat*>> out;
  out.reserve(mutable_view.size());
  for (auto& [name, ptr] : mutable_view) out.emplace_back(name, ptr);
  return out;
}

std::vector<std::pair<std::string, Mat*>> Model::trainable_params() {
  auto all = named_params();
  if (config.text_frozen) all.pop_back();  // text_table is last
  return all;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : named_params()) n += static_cast<std::size_t>(m->size());
  return n;
}

std::uint64_t Model::digest() const {
  Fnv1a h;
  for (const auto& [name, m] : named_params()) {
    h.update_str(name);
    h.update(m->data(), static_cast<std::size_t>(m->size()) * sizeof(double));
  }
  return h.digest();
}

BoundModel bind(Tape& tape, const Model& model) {
  BoundModel bm;
  bm.config = &model.config;
  bm.tape = &tape;
  auto& mutable_model = const_cast<Model&>(model);
  // Leaves registered in trainable order; gradients later read back in the
  // same order, which keeps the optimizer deterministic.
  std::vector<std::pair<std::string, Mat*>> trainable = mutable_model.trainable_params();
  for (auto& [name, mat] : trainable) {
    Tensor leaf = tape.leaf(*mat);
    bm.leaves.push_back(leaf);
    if (name == "enc_w1") bm.enc_w1 = leaf;
    else if (name == "enc_b1") bm.enc_b1 = leaf;
    else if (name == "enc_w2") bm.enc_w2 = leaf;
    else if (name == "enc_b2") bm.enc_b2 = leaf;
    else if (name == "proj_w") bm.proj_w = leaf;
    else if (name == "proj_b") bm.proj_b = leaf;
    else if (name == "fus_w1") bm.fus_w1 = leaf;
    else if (name == "fus_b1") bm.fus_b1 = leaf;
    else if (name == "fus_w2") bm.fus_w2 = leaf;
    else if (name == "fus_b2") bm.fus_b2 = leaf;
    else if (name == "text_table") bm.text_table = leaf;
  }
  if (model.config.text_frozen) bm.text_table = Tensor::constant(model.text_table);
  return bm;
}

BoundModel bind_frozen(const Model& model) {
  BoundModel bm;
  bm.config = &model.config;
  bm.enc_w1 = Tensor::constant(model.enc_w1);
  bm.enc_b1 = Tensor::constant(model.enc_b1);
  bm.enc_w2 = Tensor::constant(model.enc_w2);
  bm.enc_b2 = Tensor::constant(model.enc_b2);
  bm.proj_w = Tensor::constant(model.proj_w);
  bm.proj_b = Tensor::constant(model.proj_b);
  bm.fus_w1 = Tensor::constant(model.fus_w1);
  bm.fus_b1 = Tensor::constant(model.fus_b1);
  bm.fus_w2 = Tensor::constant(model.fus_w2);
  bm.fus_b2 = Tensor::constant(model.fus_b2);
  bm.text_table = Tensor::constant(model.text_table);
  return bm;
}

Tensor encode_batch(const BoundModel& bm, const Mat& x) {
  if (x.cols() != bm.config->input_dim)
    throw ConfigError("encode: input has " + std::to_string(x.cols()) +
                      " features, model expects " + std::to_string(bm.config->input_dim));
  if (!x.allFinite()) throw NumericError("encode: non-finite input features");
  Tensor xin = Tensor::constant(x);
  Tensor h = ad::tanh(ad::badd_row(ad::matmul(xin, bm.enc_w1), bm.enc_b1));
  Tensor e = ad::badd_row(ad::matmul(h, bm.enc_w2), bm.enc_b2);
  return ad::badd_row(ad::matmul(e, bm.proj_w), bm.proj_b);
}

Tensor encode_view(const BoundModel& bm, const std::vector<double>& features) {
  Mat x(1, static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) x(0, static_cast<Eigen::Index>(i)) = features[i];
  return encode_batch(bm, x);
}

Tensor encode_text_batch(const BoundModel& bm, const std::vector<std::vector<int>>& bags) {
  if (bags.empty()) throw ConfigError("encode_text: empty batch");
  for (std::size_t b = 0; b < bags.size(); ++b) {
    if (bags[b].empty())
      throw ConfigError("encode_text: empty prompt at batch position " + std::to_string(b));
    for (int id : bags[b])
      if (id < 0 || id >= bm.config->vocab_size)
        throw ConfigError("encode_text: token id " + std::to_string(id) +
                          " outside vocabulary of size " +
                          std::to_string(bm.config->vocab_size));
  }
  Tensor pooled = ad::bag_mean_rows(bm.text_table, bags);
  return ad::l2_normalize_rows(pooled);
}

Tensor encode_text(const BoundModel& bm, const std::vector<int>& token_ids) {
  return encode_text_batch(bm, {token_ids});
}

namespace {

/// Per-view pooling ahead of the score MLP. Pooling a vector embedding is the
/// identity; kept as a named stage so grid-shaped embeddings can slot in.
const Tensor& global_average_pool(const Tensor& z) { return z; }

}  // namespace

Fusion fuse_views(const BoundModel& bm, const std::vector<Tensor>& views) {
  if (views.empty()) throw ConfigError("fuse_views: no views given");
  const Eigen::Index d = views.front().cols();
  for (const Tensor& v : views)
    if (v.cols() != d || v.rows() != views.front().rows())
      throw ShapeError("fuse_views: view shapes differ (" + views.front().shape_str() +
                       " vs " + v.shape_str() + ")");

  std::vector<Tensor> scores;
  scores.reserve(views.size());
  for (const Tensor& v : views) {
    const Tensor& pooled = global_average_pool(v);
    Tensor h = ad::tanh(ad::badd_row(ad::matmul(pooled, bm.fus_w1), bm.fus_b1));
    scores.push_back(ad::badd_row(ad::matmul(h, bm.fus_w2), bm.fus_b2));  // B x 1
  }

  Fusion out;
  out.weights = ad::softmax_rows(ad::hcat(scores));  // B x N

  const Mat& w = out.weights.value();
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    if (std::abs(w.row(r).sum() - 1.0) > 1e-12 || (w.row(r).array() <= 0.0).any())
      throw NumericError("fuse_views: weights left the simplex at row " + std::to_string(r));
  }

  Tensor fused = ad::bmul_col(views[0], ad::col(out.weights, 0));
  for (std::size_t i = 1; i < views.size(); ++i)
    fused = ad::add(fused, ad::bmul_col(views[i], ad::col(out.weights, static_cast<Eigen::Index>(i))));
  out.fused = fused;
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const Checkpoint& ckpt, const std::string& prefix) {
  std::vector<double> blob;
  nlohmann::json arrays = nlohmann::json::array();
  auto append = [&](const std::string& name, const Mat& m) {
    arrays.push_back({{"name", name},
                      {"rows", m.rows()},
                      {"cols", m.cols()},
                      {"offset", blob.size()}});
    blob.insert(blob.end(), m.data(), m.data() + m.size());
  };
  for (const auto& [name, mat] : ckpt.model.named_params()) append(name, *mat);
  for (const auto& [name, mat] : ckpt.extra_arrays) append("extra/" + name, mat);

  nlohmann::json manifest = {
      {"format", "smile-checkpoint"},
      {"version", 1},
      {"model_config", ckpt.model.config.to_json()},
      {"arrays", arrays},
      {"blob", {{"dtype", "float64-le"}, {"layout", "row-major"}, {"count", blob.size()}}},
      {"digest", hex_digest(io::blob_digest(blob))},
      {"meta", ckpt.meta},
  };
  io::write_json_file(prefix + ".ckpt.json", manifest);
  io::write_f64_blob(prefix + ".ckpt.f64", blob);
}

Checkpoint load_checkpoint(const std::string& prefix) {
  nlohmann::json manifest = io::read_json_file(prefix + ".ckpt.json");
  if (manifest.value("format", "") != "smile-checkpoint")
    throw ConfigError(prefix + ".ckpt.json is not a checkpoint manifest");
  std::vector<double> blob = io::read_f64_blob(prefix + ".ckpt.f64");
  if (manifest.contains("digest") &&
      manifest.at("digest").get<std::string>() != hex_digest(io::blob_digest(blob)))
    throw ConfigError("checkpoint blob digest mismatch for " + prefix);

  Checkpoint ckpt;
  ckpt.model.config = ModelConfig::from_json(manifest.at("model_config"));
  ckpt.meta = manifest.value("meta", nlohmann::json::object());

  auto read_array = [&](const nlohmann::json& spec) -> Mat {
    const auto rows = spec.at("rows").get<Eigen::Index>();
    const auto cols = spec.at("cols").get<Eigen::Index>();
    const auto offset = spec.at("offset").get<std::size_t>();
    if (offset + static_cast<std::size_t>(rows * cols) > blob.size())
      throw ConfigError("checkpoint array " + spec.at("name").get<std::string>() +
                        " runs past the end of the blob");
    Mat m(rows, cols);
    std::copy(blob.begin() + static_cast<std::ptrdiff_t>(offset),
              blob.begin() + static_cast<std::ptrdiff_t>(offset) + rows * cols, m.data());
    return m;
  };

  auto params = ckpt.model.named_params();
  for (const nlohmann::json& spec : manifest.at("arrays")) {
    const std::string name = spec.at("name").get<std::string>();
    if (name.rfind("extra/", 0) == 0) {
      ckpt.extra_arrays.emplace_back(name.substr(6), read_array(spec));
      continue;
    }
    bool found = false;
    for (auto& [pname, mat] : params) {
      if (pname == name) {
        *mat = read_array(spec);
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("checkpoint has unknown parameter array: " + name);
  }

  for (const auto& [pname, mat] : ckpt.model.named_params())
    if (mat->size() == 0)
      throw ConfigError("checkpoint is missing parameter array: " + pname);
  return ckpt;
}

}  // namespace smile::nn
