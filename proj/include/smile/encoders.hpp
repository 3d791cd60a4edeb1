#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "smile/tensor.hpp"

namespace smile::nn {

using ad::Mat;
using ad::Tape;
using ad::Tensor;

struct ModelConfig {
  int input_dim = 24;
  int hidden_dim = 64;
  int embed_dim = 32;
  int fusion_hidden = 16;
  int vocab_size = 0;  // fixed by the prompt bank vocabulary
  bool text_frozen = true;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// The full trainable state: a two-layer tanh visual encoder with a linear
/// projector shared across views, a score MLP for view-aware fusion, and a
/// token-embedding text encoder (frozen by default).
struct Model {
  ModelConfig config;

  Mat enc_w1, enc_b1;  // input_dim -> hidden_dim
  Mat enc_w2, enc_b2;  // hidden_dim -> embed_dim
  Mat proj_w, proj_b;  // embed_dim -> embed_dim
  Mat fus_w1, fus_b1;  // embed_dim -> fusion_hidden
  Mat fus_w2, fus_b2;  // fusion_hidden -> 1
  Mat text_table;      // vocab_size x embed_dim

  static Model init(const ModelConfig& cfg, std::uint64_t seed);

  /// Deterministically ordered views of the parameters.
  std::vector<std::pair<std::string, Mat*>> named_params();
  std::vector<std::pair<std::string, const Mat*>> named_params() const;
  std::vector<std::pair<std::string, Mat*>> trainable_params();

  std::size_t parameter_count() const;
  std::uint64_t digest() const;
};

/// Model parameters registered on a tape: trainable ones as leaves, frozen
/// ones as constants. Valid only while both the tape and model outlive it.
struct BoundModel {
  const ModelConfig* config = nullptr;
  Tape* tape = nullptr;
  Tensor enc_w1, enc_b1, enc_w2, enc_b2, proj_w, proj_b;
  Tensor fus_w1, fus_b1, fus_w2, fus_b2;
  Tensor text_table;
  /// Leaves in the same order as Model::trainable_params().
  std::vector<Tensor> leaves;
};

BoundModel bind(Tape& tape, const Model& model);
/// Binds every parameter as a constant: forward evaluation only.
BoundModel bind_frozen(const Model& model);

/// Visual path for a batch of one view: B x input_dim -> B x embed_dim.
Tensor encode_batch(const BoundModel& bm, const Mat& x);

/// Single feature vector convenience wrapper (returns 1 x embed_dim).
Tensor encode_view(const BoundModel& bm, const std::vector<double>& features);

/// Token bags -> L2-normalized embeddings, one row per bag.
Tensor encode_text_batch(const BoundModel& bm, const std::vector<std::vector<int>>& bags);
Tensor encode_text(const BoundModel& bm, const std::vector<int>& token_ids);

struct Fusion {
  Tensor fused;    // B x d
  Tensor weights;  // B x N, rows on the simplex
};

/// View-aware fusion: per-view pooled scores through the score MLP, softmax
/// across views, convex combination of the view embeddings. Checks the
/// simplex property (sum 1 within 1e-12, strictly positive) on every call.
Fusion fuse_views(const BoundModel& bm, const std::vector<Tensor>& views);

// ---------------------------------------------------------------------------
// Checkpoints: <prefix>.ckpt.json manifest + <prefix>.ckpt.f64 blob
// (row-major little-endian float64, offsets in elements).
// ---------------------------------------------------------------------------

struct Checkpoint {
  Model model;
  nlohmann::json meta;  // free-form: seed, trainer state, optimizer arrays meta
  /// Extra named arrays (e.g. optimizer moments), saved after the params.
  std::vector<std::pair<std::string, Mat>> extra_arrays;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& prefix);
Checkpoint load_checkpoint(const std::string& prefix);

}  // namespace smile::nn
