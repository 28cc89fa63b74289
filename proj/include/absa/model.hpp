// BERT-style encoder over the autodiff tensor core: summed token/position/
// segment embeddings, stacked self-attention + feed-forward blocks, and a
// 7-way classification head reading the [CLS] position.
//
// Parameters are shared read-only during inference; training is
// single-writer.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "absa/tensor.hpp"
#include "absa/tokenizer.hpp"

namespace absa::model {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  long layers = 2;
  long heads = 4;
  long hidden = 64;
  long feed_forward = 256;
  long vocab_size = 0;
  long max_len = 128;
  long type_vocab = 2;
  long n_labels = 7;
  double dropout = 0.1;

  // Desk-scale default: trains on one CPU core in minutes.
  static ModelConfig toy(long vocab_size);
  // The published configuration: L=12, A=12, H=768, d_ff=3072, max_len=512.
  static ModelConfig base(long vocab_size);

  void validate() const;  // throws ModelError
  long head_dim() const { return hidden / heads; }
};

// Exact scalar count of a model with this configuration.
long long param_count(const ModelConfig& config);

// Named parameter tensors in a stable order (also the checkpoint order).
struct Parameters {
  ModelConfig config;
  std::vector<std::string> names;
  std::vector<tensor::Tensor> tensors;

  tensor::Tensor& at(const std::string& name);
  const tensor::Tensor& at(const std::string& name) const;

  // Truncated-normal(0.02) weights, zero biases, unit layer-norm scales;
  // bitwise deterministic per seed.
  static Parameters init(const ModelConfig& config, std::uint64_t seed);
  // Same layout, all zeros (checkpoint loading target).
  static Parameters structure(const ModelConfig& config);

  // Deep copy: fresh tensors detached from any graph, gradients dropped.
  Parameters clone() const;

  std::size_t scalar_count() const;
  void zero_grads();
};

// A padded batch of encoded sentence pairs. from_pairs trims the shared
// padding tail (safe: logits depend only on unmasked positions).
struct Batch {
  long batch_size = 0;
  long seq_len = 0;
  std::vector<int> token_ids;       // batch_size * seq_len
  std::vector<int> segment_ids;     // batch_size * seq_len
  std::vector<int> attention_mask;  // batch_size * seq_len, 1 = real token
  std::vector<int> labels;          // batch_size, empty when unlabeled

  static Batch from_pairs(const std::vector<tokenizer::EncodedPair>& pairs,
                          std::vector<int> labels = {});
};

struct ClassifierOutput {
  tensor::Tensor logits;         // (B, n_labels)
  tensor::Tensor probabilities;  // rowwise softmax of logits
};

// Token + position + segment embeddings, layer-normalized, with dropout in
// training mode. Output (B, n, H).
tensor::Tensor embed(const Batch& batch, const Parameters& params,
                     tensor::Rng& rng, bool training);

// L encoder layers. Masked (padding) positions receive a -1e30 additive
// attention bias, which underflows to exactly zero probability, making
// logits bitwise independent of padding content.
tensor::Tensor encoder_forward(const tensor::Tensor& x, const Batch& batch,
                               const Parameters& params, tensor::Rng& rng,
                               bool training);

// Classification head over an encoded (B, n, H) tensor: the [CLS] position
// (index 0) through the linear classifier.
ClassifierOutput classify(const tensor::Tensor& encoded,
                          const Parameters& params);

// Full traced pass: embed -> encoder -> logits (B, n_labels).
tensor::Tensor logits_forward(const Batch& batch, const Parameters& params,
                              tensor::Rng& rng, bool training);

// Evaluation-mode convenience (no dropout, untraced inputs stay untraced).
ClassifierOutput predict(const Batch& batch, const Parameters& params);

// --- checkpoints -------------------------------------------------------------
//
// Versioned container: a "ABSA-CKPT v1" magic line, a [config] section of
// UTF-8 key=value pairs (model config, vocabulary fingerprint, label map), a
// [manifest] section listing name/shape/byte-offset per tensor, and a [data]
// section of raw little-endian 64-bit floats.

struct Checkpoint {
  Parameters params;
  std::uint64_t vocab_fingerprint = 0;
  std::string label_map;
};

void save_checkpoint(const std::string& path, const Parameters& params,
                     std::uint64_t vocab_fingerprint,
                     const std::string& label_map);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace absa::model
