#include "absa/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace absa::train {

using model::Batch;
using model::Parameters;
using tensor::Rng;
using tensor::Tensor;

void TrainConfig::validate(long n_labels) const {
  if (learning_rate <= 0.0) throw TrainError("learning_rate must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw TrainError("beta1 and beta2 must lie in [0, 1)");
  if (epsilon <= 0.0) throw TrainError("epsilon must be positive");
  if (weight_decay < 0.0) throw TrainError("weight_decay must be >= 0");
  if (batch_size < 1) throw TrainError("batch_size must be at least 1");
  if (epochs < 1) throw TrainError("epochs must be at least 1");
  if (!class_weights.empty() &&
      class_weights.size() != static_cast<std::size_t>(n_labels))
    throw TrainError("expected " + std::to_string(n_labels) +
                     " class weights, got " +
                     std::to_string(class_weights.size()));
  for (double w : class_weights)
    if (!(w >= 0.0) || !std::isfinite(w))
      throw TrainError("class weights must be finite and non-negative");
}

AdamWState AdamWState::for_params(const Parameters& params) {
  AdamWState state;
  state.m.reserve(params.tensors.size());
  state.v.reserve(params.tensors.size());
  for (const auto& t : params.tensors) {
    state.m.emplace_back(t.size(), 0.0);
    state.v.emplace_back(t.size(), 0.0);
  }
  return state;
}

void adamw_step(Parameters& params, AdamWState& state,
                const TrainConfig& config) {
  if (state.m.size() != params.tensors.size())
    throw TrainError("optimizer state does not match the parameter set");
  // Validate every gradient before touching anything: the step must abort
  // atomically on a bad gradient.
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    if (!params.tensors[i].has_grad()) continue;
    for (double g : params.tensors[i].grad())
      if (!std::isfinite(g))
        throw TrainError("non-finite gradient in \"" + params.names[i] +
                         "\"; optimizer step aborted");
  }

  state.t += 1;
  double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& theta = params.tensors[i].values();
    auto& m = state.m[i];
    auto& v = state.v[i];
    bool has_grad = params.tensors[i].has_grad();
    const std::vector<double>* grad =
        has_grad ? &params.tensors[i].grad() : nullptr;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      double g = grad ? (*grad)[j] : 0.0;
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g;
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
      double m_hat = m[j] / bc1;
      double v_hat = v[j] / bc2;
      theta[j] -= config.learning_rate *
                  (m_hat / (std::sqrt(v_hat) + config.epsilon) +
                   config.weight_decay * theta[j]);
    }
  }
}

Tensor cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels,
                          const std::vector<double>& class_weights) {
  return tensor::cross_entropy(
      logits, labels, class_weights.empty() ? nullptr : &class_weights);
}

void MaskingPolicy::validate() const {
  if (select_fraction <= 0.0 || select_fraction > 1.0)
    throw TrainError("select_fraction must lie in (0, 1]");
  for (double f : {mask_fraction, random_fraction, keep_fraction})
    if (f < 0.0 || f > 1.0)
      throw TrainError("masking fractions must lie in [0, 1]");
  if (std::abs(mask_fraction + random_fraction + keep_fraction - 1.0) > 1e-12)
    throw TrainError("mask, random, and keep fractions must sum to 1");
}

MaskedSequence mask_tokens(const tokenizer::EncodedPair& pair,
                           const MaskingPolicy& policy,
                           const tokenizer::Vocabulary& vocab,
                           std::uint64_t seed) {
  policy.validate();
  long vocab_size = static_cast<long>(vocab.size());
  if (vocab_size <= tokenizer::kNumReserved)
    throw TrainError("vocabulary has no maskable tokens");

  MaskedSequence out;
  out.ids = pair.ids;
  out.mlm_labels.assign(pair.ids.size(), kNoMlmLabel);

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0;
       i < static_cast<std::size_t>(pair.true_length) && i < pair.ids.size();
       ++i)
    if (pair.ids[i] >= tokenizer::kNumReserved) eligible.push_back(i);
  if (eligible.empty()) return out;

  std::size_t count = static_cast<std::size_t>(std::floor(
      policy.select_fraction * static_cast<double>(eligible.size()) + 0.5));
  count = std::max<std::size_t>(count, 1);
  count = std::min(count, eligible.size());

  Rng rng(seed);
  rng.shuffle(eligible);
  eligible.resize(count);
  std::sort(eligible.begin(), eligible.end());

  for (std::size_t pos : eligible) {
    out.mlm_labels[pos] = pair.ids[pos];
    double u = rng.uniform();
    if (u < policy.mask_fraction) {
      out.ids[pos] = tokenizer::kMaskId;
    } else if (u < policy.mask_fraction + policy.random_fraction) {
      out.ids[pos] =
          tokenizer::kNumReserved +
          static_cast<int>(rng.uniform_int(static_cast<std::size_t>(
              vocab_size - tokenizer::kNumReserved)));
    }  // else: keep the original id
  }
  return out;
}

std::vector<NspPair> make_nsp_pairs(
    const std::vector<std::vector<std::string>>& documents, std::uint64_t seed,
    double next_prob) {
  if (next_prob < 0.0 || next_prob > 1.0)
    throw TrainError("next_prob must lie in [0, 1]");
  for (std::size_t d = 0; d < documents.size(); ++d)
    if (documents[d].size() < 2)
      throw TrainError("document " + std::to_string(d) +
                       " has fewer than 2 sentences");
  if (next_prob < 1.0 && documents.size() < 2)
    throw TrainError(
        "negative pairs need at least two documents; got a single document");

  Rng rng(seed);
  std::vector<NspPair> pairs;
  for (std::size_t d = 0; d < documents.size(); ++d) {
    const auto& doc = documents[d];
    for (std::size_t s = 0; s + 1 < doc.size(); ++s) {
      NspPair p;
      p.sentence_a = doc[s];
      if (rng.uniform() < next_prob) {
        p.sentence_b = doc[s + 1];
        p.is_next = true;
      } else {
        // Uniform over the other documents, then uniform within.
        std::size_t other = rng.uniform_int(documents.size() - 1);
        if (other >= d) ++other;
        p.sentence_b = documents[other][rng.uniform_int(
            documents[other].size())];
        p.is_next = false;
      }
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

std::string TrainingHistory::to_csv() const {
  std::string out = "epoch,train_loss,train_acc,eval_loss,eval_acc\n";
  char buf[512];
  for (const auto& r : epochs) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g\n", r.epoch,
                  r.train_loss, r.train_accuracy, r.eval_loss,
                  r.eval_accuracy);
    out += buf;
  }
  return out;
}

namespace {

struct SplitStats {
  double mean_loss = 0.0;
  double accuracy = 0.0;
};

// Evaluation-mode pass over a dataset in deterministic batch order.
SplitStats evaluate(const std::vector<LabeledExample>& data,
                    const Parameters& params, const TrainConfig& config) {
  SplitStats stats;
  double loss_sum = 0.0;
  long correct = 0;
  std::size_t done = 0;
  while (done < data.size()) {
    std::size_t take = std::min<std::size_t>(
        static_cast<std::size_t>(config.batch_size), data.size() - done);
    std::vector<tokenizer::EncodedPair> pairs;
    std::vector<int> labels;
    pairs.reserve(take);
    labels.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
      pairs.push_back(data[done + i].pair);
      labels.push_back(data[done + i].label);
    }
    Batch batch = Batch::from_pairs(pairs, labels);
    model::ClassifierOutput out = model::predict(batch, params);
    Tensor loss = cross_entropy_loss(out.logits, labels, config.class_weights);
    loss_sum += loss.item() * static_cast<double>(take);

    const auto& probs = out.probabilities.values();
    std::size_t n_labels = static_cast<std::size_t>(params.config.n_labels);
    for (std::size_t i = 0; i < take; ++i) {
      const double* row = probs.data() + i * n_labels;
      std::size_t argmax = 0;
      for (std::size_t j = 1; j < n_labels; ++j)
        if (row[j] > row[argmax]) argmax = j;
      if (static_cast<int>(argmax) == labels[i]) ++correct;
    }
    done += take;
  }
  stats.mean_loss = loss_sum / static_cast<double>(data.size());
  stats.accuracy =
      static_cast<double>(correct) / static_cast<double>(data.size());
  return stats;
}

}  // namespace

TrainResult train_loop(const std::vector<LabeledExample>& train_set,
                       const std::vector<LabeledExample>& eval_set,
                       const Parameters& initial, const TrainConfig& config) {
  config.validate(initial.config.n_labels);
  if (train_set.empty()) throw TrainError("training set is empty");
  if (eval_set.empty()) throw TrainError("evaluation set is empty");
  long n_labels = initial.config.n_labels;
  for (const auto& ex : train_set)
    if (ex.label < 0 || ex.label >= n_labels)
      throw TrainError("training label " + std::to_string(ex.label) +
                       " out of range [0, " + std::to_string(n_labels) + ")");

  TrainResult result;
  result.final_params = initial.clone();
  result.best_params = initial.clone();
  result.best_eval_accuracy = -1.0;

  Parameters& params = result.final_params;
  AdamWState state = AdamWState::for_params(params);
  Rng rng(config.seed);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (long epoch = 1; epoch <= config.epochs && !result.diverged; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    long correct = 0;

    std::size_t done = 0;
    while (done < order.size()) {
      std::size_t take = std::min<std::size_t>(
          static_cast<std::size_t>(config.batch_size), order.size() - done);
      std::vector<tokenizer::EncodedPair> pairs;
      std::vector<int> labels;
      pairs.reserve(take);
      labels.reserve(take);
      for (std::size_t i = 0; i < take; ++i) {
        const auto& ex = train_set[order[done + i]];
        pairs.push_back(ex.pair);
        labels.push_back(ex.label);
      }
      Batch batch = Batch::from_pairs(pairs, labels);
      Tensor logits =
          model::logits_forward(batch, params, rng, /*training=*/true);
      Tensor loss = cross_entropy_loss(logits, labels, config.class_weights);
      if (!std::isfinite(loss.item())) {
        result.diverged = true;
        break;
      }
      loss_sum += loss.item() * static_cast<double>(take);

      const auto& lv = logits.values();
      std::size_t nl = static_cast<std::size_t>(n_labels);
      for (std::size_t i = 0; i < take; ++i) {
        const double* row = lv.data() + i * nl;
        std::size_t argmax = 0;
        for (std::size_t j = 1; j < nl; ++j)
          if (row[j] > row[argmax]) argmax = j;
        if (static_cast<int>(argmax) == labels[i]) ++correct;
      }

      loss.backward();
      adamw_step(params, state, config);
      params.zero_grads();
      done += take;
    }
    if (result.diverged) break;

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train_set.size());
    record.train_accuracy =
        static_cast<double>(correct) / static_cast<double>(train_set.size());
    SplitStats eval_stats = evaluate(eval_set, params, config);
    record.eval_loss = eval_stats.mean_loss;
    record.eval_accuracy = eval_stats.accuracy;
    result.history.epochs.push_back(record);

    if (record.eval_accuracy > result.best_eval_accuracy) {
      result.best_eval_accuracy = record.eval_accuracy;
      result.best_epoch = epoch;
      result.best_params = params.clone();
    }
  }
  return result;
}

}  // namespace absa::train
