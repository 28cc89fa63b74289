#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "absa/model.hpp"
#include "absa/tensor.hpp"
#include "absa/tokenizer.hpp"

using namespace absa;
using tensor::Shape;
using tensor::Tensor;

namespace {

model::ModelConfig tiny_config() {
  model::ModelConfig c;
  c.layers = 1;
  c.heads = 1;
  c.hidden = 2;
  c.feed_forward = 3;
  c.vocab_size = 6;
  c.max_len = 8;
  c.n_labels = 7;
  c.dropout = 0.0;
  return c;
}

model::Batch tiny_batch() {
  model::Batch b;
  b.batch_size = 1;
  b.seq_len = 3;
  b.token_ids = {2, 5, 4};
  b.segment_ids = {0, 0, 1};
  b.attention_mask = {1, 1, 1};
  return b;
}

// Plain-loop reimplementation of the forward pass for one layer, one head.
// Everything is computed with scalar arithmetic so the encoder has an
// independent oracle.
std::vector<double> manual_logits(const model::Parameters& params,
                                  const model::Batch& batch) {
  const long H = params.config.hidden;
  const long n = batch.seq_len;
  const auto& T = params.at("embeddings.token").values();
  const auto& P = params.at("embeddings.position").values();
  const auto& S = params.at("embeddings.segment").values();

  auto layer_norm = [H](std::vector<double>& rows, const std::vector<double>& gamma,
                        const std::vector<double>& beta) {
    const std::size_t d = static_cast<std::size_t>(H);
    for (std::size_t r = 0; r < rows.size() / d; ++r) {
      double* row = rows.data() + r * d;
      double mu = 0.0;
      for (std::size_t j = 0; j < d; ++j) mu += row[j];
      mu /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + 1e-12);
      for (std::size_t j = 0; j < d; ++j) {
        row[j] = gamma[j] * ((row[j] - mu) * inv) + beta[j];
      }
    }
  };
  // x (rows, in) times W (in, out) plus bias (out).
  auto affine = [](const std::vector<double>& x, long in, long out,
                   const std::vector<double>& w, const std::vector<double>& b) {
    const std::size_t rows = x.size() / static_cast<std::size_t>(in);
    std::vector<double> y(rows * static_cast<std::size_t>(out));
    for (std::size_t r = 0; r < rows; ++r) {
      for (long o = 0; o < out; ++o) {
        double acc = b[static_cast<std::size_t>(o)];
        for (long i = 0; i < in; ++i) {
          acc += x[r * static_cast<std::size_t>(in) + static_cast<std::size_t>(i)] *
                 w[static_cast<std::size_t>(i * out + o)];
        }
        y[r * static_cast<std::size_t>(out) + static_cast<std::size_t>(o)] = acc;
      }
    }
    return y;
  };

  // Embeddings + layer norm.
  std::vector<double> x(static_cast<std::size_t>(n * H));
  for (long i = 0; i < n; ++i) {
    const long tok = batch.token_ids[static_cast<std::size_t>(i)];
    const long seg = batch.segment_ids[static_cast<std::size_t>(i)];
    for (long h = 0; h < H; ++h) {
      x[static_cast<std::size_t>(i * H + h)] =
          T[static_cast<std::size_t>(tok * H + h)] +
          P[static_cast<std::size_t>(i * H + h)] +
          S[static_cast<std::size_t>(seg * H + h)];
    }
  }
  layer_norm(x, params.at("embeddings.norm.scale").values(),
             params.at("embeddings.norm.shift").values());

  // Single attention layer, single head (head dim == hidden).
  const std::string p = "layer.0.";
  auto q = affine(x, H, H, params.at(p + "attention.query.weight").values(),
                  params.at(p + "attention.query.bias").values());
  auto k = affine(x, H, H, params.at(p + "attention.key.weight").values(),
                  params.at(p + "attention.key.bias").values());
  auto v = affine(x, H, H, params.at(p + "attention.value.weight").values(),
                  params.at(p + "attention.value.bias").values());

  std::vector<double> context(static_cast<std::size_t>(n * H), 0.0);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(H));
  for (long i = 0; i < n; ++i) {
    std::vector<double> scores(static_cast<std::size_t>(n));
    double mx = -1e300;
    for (long j = 0; j < n; ++j) {
      double dot = 0.0;
      for (long h = 0; h < H; ++h) {
        dot += q[static_cast<std::size_t>(i * H + h)] *
               k[static_cast<std::size_t>(j * H + h)];
      }
      dot *= inv_sqrt_d;
      if (batch.attention_mask[static_cast<std::size_t>(j)] == 0) dot += -1e30;
      scores[static_cast<std::size_t>(j)] = dot;
      mx = std::max(mx, dot);
    }
    double denom = 0.0;
    for (double& s : scores) {
      s = std::exp(s - mx);
      denom += s;
    }
    for (long j = 0; j < n; ++j) {
      const double w = scores[static_cast<std::size_t>(j)] / denom;
      for (long h = 0; h < H; ++h) {
        context[static_cast<std::size_t>(i * H + h)] +=
            w * v[static_cast<std::size_t>(j * H + h)];
      }
    }
  }
  auto attn_out =
      affine(context, H, H, params.at(p + "attention.output.weight").values(),
             params.at(p + "attention.output.bias").values());
  for (std::size_t i = 0; i < x.size(); ++i) attn_out[i] += x[i];
  layer_norm(attn_out, params.at(p + "attention.norm.scale").values(),
             params.at(p + "attention.norm.shift").values());

  const long ff = params.config.feed_forward;
  auto hidden = affine(attn_out, H, ff, params.at(p + "ffn.in.weight").values(),
                       params.at(p + "ffn.in.bias").values());
  for (double& h : hidden) h = 0.5 * h * (1.0 + std::erf(h / std::sqrt(2.0)));
  auto ffn_out = affine(hidden, ff, H, params.at(p + "ffn.out.weight").values(),
                        params.at(p + "ffn.out.bias").values());
  for (std::size_t i = 0; i < attn_out.size(); ++i) ffn_out[i] += attn_out[i];
  layer_norm(ffn_out, params.at(p + "ffn.norm.scale").values(),
             params.at(p + "ffn.norm.shift").values());

  // Classifier over position 0.
  std::vector<double> cls(ffn_out.begin(), ffn_out.begin() + H);
  return affine(cls, H, params.config.n_labels,
                params.at("classifier.weight").values(),
                params.at("classifier.bias").values());
}

std::string scratch_path(const std::string& name) {
  std::filesystem::create_directories(ABSA_SCRATCH_DIR);
  return std::string(ABSA_SCRATCH_DIR) + "/" + name;
}

}  // namespace

TEST_CASE("published configuration lands within 5% of 110M parameters") {
  const model::ModelConfig base = model::ModelConfig::base(30522);
  const long long count = model::param_count(base);
  CHECK(count == 108897031);
  CHECK(std::abs(static_cast<double>(count) - 110e6) / 110e6 <= 0.05);
}

TEST_CASE("toy parameter count matches an independent closed-form tally") {
  const model::ModelConfig toy = model::ModelConfig::toy(4000);
  // Tallied shape by shape, written out independently of param_count.
  long long expected = 0;
  expected += 4000LL * 64 + 128LL * 64 + 2LL * 64;  // three embedding tables
  expected += 64 + 64;                              // embedding norm
  for (int layer = 0; layer < 2; ++layer) {
    expected += 4LL * (64 * 64 + 64);  // q, k, v, output projections
    expected += 64 + 64;               // attention norm
    expected += 64LL * 256 + 256;      // ffn in
    expected += 256LL * 64 + 64;       // ffn out
    expected += 64 + 64;               // ffn norm
  }
  expected += 64LL * 7 + 7;  // classifier
  CHECK(model::param_count(toy) == expected);

  // And the materialized parameters carry exactly that many scalars.
  const model::Parameters params = model::Parameters::init(toy, 1);
  CHECK(params.scalar_count() == static_cast<std::size_t>(expected));
}

TEST_CASE("config validation rejects bad dimensions") {
  model::ModelConfig c = tiny_config();
  c.hidden = 3;
  c.heads = 2;
  CHECK_THROWS_AS(c.validate(), model::ModelError);
  c = tiny_config();
  c.max_len = 4;
  CHECK_THROWS_AS(c.validate(), model::ModelError);
  c = tiny_config();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), model::ModelError);
  c = tiny_config();
  c.vocab_size = 0;
  CHECK_THROWS_AS(c.validate(), model::ModelError);
}

TEST_CASE("initialization is seeded and shaped correctly") {
  const model::ModelConfig toy = model::ModelConfig::toy(100);
  const model::Parameters a = model::Parameters::init(toy, 42);
  const model::Parameters b = model::Parameters::init(toy, 42);
  const model::Parameters c = model::Parameters::init(toy, 43);
  REQUIRE(a.names.size() == 5 + 16 * 2 + 2);
  CHECK(a.names == b.names);

  bool any_differs = false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    CHECK(a.tensors[i].values() == b.tensors[i].values());
    if (a.tensors[i].values() != c.tensors[i].values()) any_differs = true;
  }
  CHECK(any_differs);

  // Norm scales are ones, biases zeros, weights truncated at two sigmas.
  for (double v : a.at("embeddings.norm.scale").values()) CHECK(v == 1.0);
  for (double v : a.at("layer.1.ffn.norm.scale").values()) CHECK(v == 1.0);
  for (double v : a.at("classifier.bias").values()) CHECK(v == 0.0);
  for (double v : a.at("layer.0.attention.query.bias").values()) CHECK(v == 0.0);
  bool any_nonzero = false;
  for (double v : a.at("embeddings.token").values()) {
    CHECK(std::abs(v) <= 0.04);
    if (v != 0.0) any_nonzero = true;
  }
  CHECK(any_nonzero);
  CHECK_THROWS_AS(a.at("no.such.tensor"), model::ModelError);
}

TEST_CASE("batch construction trims shared padding") {
  const tokenizer::Vocabulary vocab = tokenizer::Vocabulary::build({"a b c d"}, 15);
  const auto p1 = tokenizer::encode_pair("a b c d", "a", vocab, 32);
  const auto p2 = tokenizer::encode_pair("a", "b", vocab, 32);
  const model::Batch batch = model::Batch::from_pairs({p1, p2}, {3, 5});
  CHECK(batch.batch_size == 2);
  CHECK(batch.seq_len == p1.true_length);  // longest true length, not 32
  CHECK(batch.labels == std::vector<int>{3, 5});
  // The shorter pair is padded out to seq_len.
  CHECK(batch.token_ids.size() == static_cast<std::size_t>(2 * batch.seq_len));
  CHECK(batch.attention_mask[static_cast<std::size_t>(batch.seq_len) +
                             static_cast<std::size_t>(p2.true_length)] == 0);

  CHECK_THROWS_AS(model::Batch::from_pairs({}), model::ModelError);
  CHECK_THROWS_AS(model::Batch::from_pairs({p1, p2}, {1}), model::ModelError);
  const auto p3 = tokenizer::encode_pair("a", "b", vocab, 16);
  CHECK_THROWS_AS(model::Batch::from_pairs({p1, p3}), model::ModelError);
}

TEST_CASE("embed produces layer-normalized rows of the right shape") {
  const model::ModelConfig c = tiny_config();
  const model::Parameters params = model::Parameters::init(c, 7);
  const model::Batch batch = tiny_batch();
  tensor::Rng rng(0);
  const Tensor x = model::embed(batch, params, rng, /*training=*/false);
  REQUIRE(x.shape() == Shape{1, 3, 2});
  // Rows have zero mean and unit variance before scale/shift; with the
  // initial gamma=1, beta=0 that survives verbatim.
  for (int row = 0; row < 3; ++row) {
    const double a = x.values()[static_cast<std::size_t>(2 * row)];
    const double b = x.values()[static_cast<std::size_t>(2 * row + 1)];
    CHECK(std::abs(a + b) <= 1e-9);
    CHECK(std::abs(a * a + b * b - 2.0) <= 1e-6);
  }

  model::Batch too_long = batch;
  too_long.seq_len = 9;
  too_long.token_ids.assign(9, 0);
  too_long.segment_ids.assign(9, 0);
  too_long.attention_mask.assign(9, 1);
  CHECK_THROWS_AS(model::embed(too_long, params, rng, false), model::ModelError);
}

TEST_CASE("encoder forward matches a plain-loop reimplementation") {
  const model::ModelConfig c = tiny_config();
  const model::Parameters params = model::Parameters::init(c, 99);
  const model::Batch batch = tiny_batch();

  tensor::Rng rng(0);
  const Tensor got = model::logits_forward(batch, params, rng, /*training=*/false);
  REQUIRE(got.shape() == Shape{1, 7});

  const std::vector<double> want = manual_logits(params, batch);
  REQUIRE(want.size() == 7);
  for (int i = 0; i < 7; ++i) {
    CHECK(got.values()[static_cast<std::size_t>(i)] ==
          doctest::Approx(want[static_cast<std::size_t>(i)]).epsilon(1e-9));
  }
}

TEST_CASE("the encoder input shape is validated") {
  const model::ModelConfig c = tiny_config();
  const model::Parameters params = model::Parameters::init(c, 1);
  const model::Batch batch = tiny_batch();
  tensor::Rng rng(0);
  CHECK_THROWS_AS(
      model::encoder_forward(Tensor::zeros({1, 3, 5}), batch, params, rng, false),
      model::ModelError);
}

TEST_CASE("an all-zero classifier yields the uniform distribution") {
  const model::ModelConfig c = tiny_config();
  const model::Parameters zeros = model::Parameters::structure(c);
  const model::ClassifierOutput out = model::predict(tiny_batch(), zeros);
  REQUIRE(out.probabilities.shape() == Shape{1, 7});
  for (double p : out.probabilities.values()) {
    CHECK(p == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  }
  double sum = 0.0;
  for (double p : out.probabilities.values()) sum += p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("logits are bitwise independent of padding content") {
  const model::ModelConfig c = model::ModelConfig::toy(40);
  const model::Parameters params = model::Parameters::init(c, 5);
  const tokenizer::Vocabulary vocab =
      tokenizer::Vocabulary::build({"a b c d e f g h", "a c e g"}, 30);

  const auto long_pair = tokenizer::encode_pair("a b c d e f g h", "a c", vocab, 24);
  const auto short_pair = tokenizer::encode_pair("a b", "c", vocab, 24);
  model::Batch batch = model::Batch::from_pairs({long_pair, short_pair});

  model::Batch perturbed = batch;
  for (std::size_t i = 0; i < perturbed.token_ids.size(); ++i) {
    if (perturbed.attention_mask[i] == 0) {
      perturbed.token_ids[i] = 7;   // arbitrary real token instead of [PAD]
      perturbed.segment_ids[i] = 1;
    }
  }
  REQUIRE(perturbed.token_ids != batch.token_ids);

  const auto a = model::predict(batch, params);
  const auto b = model::predict(perturbed, params);
  // Bitwise equality, not approximate: masked attention weights are exact
  // zeros, so padding rewrites cannot reach any logit.
  CHECK(a.logits.values() == b.logits.values());
  CHECK(a.probabilities.values() == b.probabilities.values());
}

TEST_CASE("padding positions contribute exactly zero gradient") {
  const model::ModelConfig c = model::ModelConfig::toy(40);
  model::Parameters params = model::Parameters::init(c, 5);
  const tokenizer::Vocabulary vocab =
      tokenizer::Vocabulary::build({"a b c d e f g h", "a c e g"}, 30);
  const auto long_pair = tokenizer::encode_pair("a b c d e f", "a c", vocab, 24);
  const auto short_pair = tokenizer::encode_pair("a b", "c", vocab, 24);
  model::Batch batch = model::Batch::from_pairs({long_pair, short_pair});
  REQUIRE(batch.seq_len > short_pair.true_length);  // real padding exists

  tensor::Rng rng(0);
  const Tensor logits = model::logits_forward(batch, params, rng, /*training=*/true);
  Tensor loss = tensor::cross_entropy(logits, {0, 1}, nullptr);
  loss.backward();

  // The [PAD] token row is gathered only at masked positions, so its
  // gradient must be exactly zero in every coordinate.
  const Tensor& token_table = params.at("embeddings.token");
  REQUIRE(token_table.has_grad());
  const auto& grad = token_table.grad();
  for (long h = 0; h < c.hidden; ++h) {
    CHECK(grad[static_cast<std::size_t>(tokenizer::kPadId * c.hidden + h)] == 0.0);
  }
  // A row that is used at real positions must receive gradient.
  const int used = batch.token_ids[1];
  double used_norm = 0.0;
  for (long h = 0; h < c.hidden; ++h) {
    used_norm += std::abs(grad[static_cast<std::size_t>(used * c.hidden + h)]);
  }
  CHECK(used_norm > 0.0);
}

TEST_CASE("checkpoints round-trip exactly") {
  const model::ModelConfig c = tiny_config();
  const model::Parameters params = model::Parameters::init(c, 11);
  const std::string path = scratch_path("roundtrip.ckpt");
  model::save_checkpoint(path, params, 0xdeadbeefcafef00dULL, "-3,-2,-1,0,1,2,3");

  const model::Checkpoint loaded = model::load_checkpoint(path);
  CHECK(loaded.vocab_fingerprint == 0xdeadbeefcafef00dULL);
  CHECK(loaded.label_map == "-3,-2,-1,0,1,2,3");
  CHECK(loaded.params.config.layers == c.layers);
  CHECK(loaded.params.config.heads == c.heads);
  CHECK(loaded.params.config.hidden == c.hidden);
  CHECK(loaded.params.config.feed_forward == c.feed_forward);
  CHECK(loaded.params.config.vocab_size == c.vocab_size);
  CHECK(loaded.params.config.max_len == c.max_len);
  CHECK(loaded.params.config.n_labels == c.n_labels);
  CHECK(loaded.params.config.dropout == c.dropout);
  REQUIRE(loaded.params.names == params.names);
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    CHECK(loaded.params.tensors[i].values() == params.tensors[i].values());
    CHECK(loaded.params.tensors[i].shape() == params.tensors[i].shape());
  }

  // Loaded parameters drive the forward pass identically.
  const auto before = model::predict(tiny_batch(), params);
  const auto after = model::predict(tiny_batch(), loaded.params);
  CHECK(before.logits.values() == after.logits.values());
}

TEST_CASE("denormal and extreme values survive the byte round-trip") {
  const model::ModelConfig c = tiny_config();
  model::Parameters params = model::Parameters::init(c, 3);
  auto& vals = params.at("classifier.bias").values();
  vals[0] = 5e-324;         // smallest subnormal
  vals[1] = -1.7976931348623157e308;
  vals[2] = 0.0;
  vals[3] = -0.0;
  vals[4] = 1.0 / 3.0;
  const std::string path = scratch_path("extreme.ckpt");
  model::save_checkpoint(path, params, 1, "-3,-2,-1,0,1,2,3");
  const model::Checkpoint loaded = model::load_checkpoint(path);
  const auto& got = loaded.params.at("classifier.bias").values();
  CHECK(got[0] == 5e-324);
  CHECK(got[1] == -1.7976931348623157e308);
  CHECK(got[2] == 0.0);
  CHECK(std::signbit(got[3]));
  CHECK(got[4] == 1.0 / 3.0);
}

TEST_CASE("checkpoint loading rejects damaged files") {
  CHECK_THROWS_AS(model::load_checkpoint(scratch_path("missing.ckpt")),
                  model::CheckpointError);

  const std::string bad_magic = scratch_path("bad_magic.ckpt");
  {
    std::ofstream out(bad_magic, std::ios::binary);
    out << "NOT-A-CHECKPOINT\n";
  }
  CHECK_THROWS_AS(model::load_checkpoint(bad_magic), model::CheckpointError);

  // Truncating the data section must fail loudly, not load garbage.
  const model::ModelConfig c = tiny_config();
  const model::Parameters params = model::Parameters::init(c, 2);
  const std::string whole = scratch_path("whole.ckpt");
  model::save_checkpoint(whole, params, 1, "-3,-2,-1,0,1,2,3");
  std::ifstream in(whole, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  in.close();
  const std::string truncated = scratch_path("truncated.ckpt");
  {
    std::ofstream out(truncated, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 16));
  }
  CHECK_THROWS_AS(model::load_checkpoint(truncated), model::CheckpointError);
}

TEST_CASE("clone detaches storage but preserves values") {
  const model::ModelConfig c = tiny_config();
  const model::Parameters params = model::Parameters::init(c, 8);
  model::Parameters copy = params.clone();
  CHECK(copy.names == params.names);
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    CHECK(copy.tensors[i].values() == params.tensors[i].values());
  }
  copy.at("classifier.bias").values()[0] = 123.0;
  CHECK(params.at("classifier.bias").values()[0] != 123.0);
}
