// AdamW optimization, the weighted cross-entropy fine-tuning loop, and the
// masked-language-model / next-sentence-prediction data utilities.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "absa/model.hpp"
#include "absa/tensor.hpp"
#include "absa/tokenizer.hpp"

namespace absa::train {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  long batch_size = 32;
  long epochs = 20;
  std::uint64_t seed = 42;
  // Empty = unweighted; otherwise one weight per class.
  std::vector<double> class_weights;

  void validate(long n_labels) const;  // throws TrainError
};

// First/second gradient moments per parameter tensor plus the step counter.
struct AdamWState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long long t = 0;

  static AdamWState for_params(const model::Parameters& params);
};

// One decoupled-weight-decay update:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + lambda theta)
// A tensor with no populated gradient contributes g = 0. A non-finite
// gradient aborts the whole step (no tensor is touched) naming the tensor.
void adamw_step(model::Parameters& params, AdamWState& state,
                const TrainConfig& config);

// Mean over the batch of w_label * (-log softmax(logits)[label]).
tensor::Tensor cross_entropy_loss(const tensor::Tensor& logits,
                                  const std::vector<int>& labels,
                                  const std::vector<double>& class_weights);

// --- masked-language-model masking -------------------------------------------

struct MaskingPolicy {
  double select_fraction = 0.15;
  double mask_fraction = 0.8;
  double random_fraction = 0.1;
  double keep_fraction = 0.1;

  void validate() const;  // fractions sum to 1, everything in range
};

inline constexpr int kNoMlmLabel = -1;

struct MaskedSequence {
  std::vector<int> ids;         // after masking
  std::vector<int> mlm_labels;  // original id at selected positions, else -1
};

// Selects round-half-up(select_fraction * eligible) positions (at least one
// when any is eligible) among non-special, non-padding tokens, then applies
// the 80/10/10 [MASK]/random/keep rule. Deterministic per seed.
MaskedSequence mask_tokens(const tokenizer::EncodedPair& pair,
                           const MaskingPolicy& policy,
                           const tokenizer::Vocabulary& vocab,
                           std::uint64_t seed);

// --- next-sentence-prediction pairs -------------------------------------------

struct NspPair {
  std::string sentence_a;
  std::string sentence_b;
  bool is_next = false;
};

// For each adjacent sentence pair in each document: with probability
// next_prob emit the true successor, otherwise a random sentence drawn from
// a different document. next_prob = 1 never needs a second document.
std::vector<NspPair> make_nsp_pairs(
    const std::vector<std::vector<std::string>>& documents, std::uint64_t seed,
    double next_prob = 0.5);

// --- fine-tuning loop ----------------------------------------------------------

struct LabeledExample {
  tokenizer::EncodedPair pair;
  int label = 0;
};

struct EpochRecord {
  long epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double eval_loss = 0.0;
  double eval_accuracy = 0.0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  // CSV with header epoch,train_loss,train_acc,eval_loss,eval_acc; doubles
  // printed with %.17g so reruns compare byte-identically.
  std::string to_csv() const;
};

struct TrainResult {
  model::Parameters final_params;
  model::Parameters best_params;  // highest eval accuracy seen
  double best_eval_accuracy = 0.0;
  long best_epoch = 0;
  TrainingHistory history;
  bool diverged = false;  // loss left the finite range; best_params still good
};

// One shuffled pass per epoch (seeded), constant learning rate, per-epoch
// history, best-eval-accuracy parameters retained. On divergence the loop
// stops with `diverged` set and the last good state preserved.
TrainResult train_loop(const std::vector<LabeledExample>& train_set,
                       const std::vector<LabeledExample>& eval_set,
                       const model::Parameters& initial,
                       const TrainConfig& config);

}  // namespace absa::train
