#include "absa/model.hpp"

#include <algorithm>
#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace absa::model {

using tensor::Shape;
using tensor::Tensor;

namespace {

// Additive pre-softmax bias for masked positions. exp(-1e30 - rowmax)
// underflows to exactly 0.0, so masked attention probabilities are exact
// zeros and padding cannot leak into unmasked outputs even at the last bit.
constexpr double kMaskBias = -1e30;

std::string layer_prefix(long i) {
  return "layer." + std::to_string(i) + ".";
}

}  // namespace

ModelConfig ModelConfig::toy(long vocab_size) {
  ModelConfig c;
  c.layers = 2;
  c.heads = 4;
  c.hidden = 64;
  c.feed_forward = 256;
  c.vocab_size = vocab_size;
  c.max_len = 128;
  return c;
}

ModelConfig ModelConfig::base(long vocab_size) {
  ModelConfig c;
  c.layers = 12;
  c.heads = 12;
  c.hidden = 768;
  c.feed_forward = 3072;
  c.vocab_size = vocab_size;
  c.max_len = 512;
  return c;
}

void ModelConfig::validate() const {
  if (layers < 0) throw ModelError("layers must be non-negative");
  if (heads < 1 || hidden < 1)
    throw ModelError("heads and hidden size must be positive");
  if (hidden % heads != 0)
    throw ModelError("hidden size " + std::to_string(hidden) +
                     " is not divisible by " + std::to_string(heads) +
                     " heads");
  if (feed_forward < 1) throw ModelError("feed-forward size must be positive");
  if (vocab_size < 1) throw ModelError("vocab_size must be positive");
  if (max_len < 8)
    throw ModelError("max_len must be at least 8, got " +
                     std::to_string(max_len));
  if (type_vocab != 2) throw ModelError("type_vocab must be 2");
  if (n_labels < 2) throw ModelError("n_labels must be at least 2");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ModelError("dropout must lie in [0, 1)");
}

long long param_count(const ModelConfig& c) {
  c.validate();
  long long h = c.hidden;
  long long dff = c.feed_forward;
  long long embeddings =
      c.vocab_size * h + c.max_len * h + c.type_vocab * h + 2 * h;
  long long per_layer = 4 * h * h + 4 * h      // attention projections
                        + 2 * h * dff + dff + h  // feed-forward
                        + 2 * (2 * h);            // two layer-norms
  long long classifier = c.n_labels * h + c.n_labels;
  return embeddings + c.layers * per_layer + classifier;
}

Tensor& Parameters::at(const std::string& name) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return tensors[i];
  throw ModelError("no parameter named \"" + name + "\"");
}

const Tensor& Parameters::at(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return tensors[i];
  throw ModelError("no parameter named \"" + name + "\"");
}

namespace {

enum class InitKind { kWeight, kBias, kNormScale };

struct Spec {
  std::string name;
  Shape shape;
  InitKind kind;
};

std::vector<Spec> layout(const ModelConfig& c) {
  std::vector<Spec> specs;
  auto weight = [&](std::string name, Shape shape) {
    specs.push_back({std::move(name), std::move(shape), InitKind::kWeight});
  };
  auto bias = [&](std::string name, Shape shape) {
    specs.push_back({std::move(name), std::move(shape), InitKind::kBias});
  };
  auto norm = [&](const std::string& name) {
    specs.push_back({name + ".scale", {c.hidden}, InitKind::kNormScale});
    specs.push_back({name + ".shift", {c.hidden}, InitKind::kBias});
  };

  weight("embeddings.token", {c.vocab_size, c.hidden});
  weight("embeddings.position", {c.max_len, c.hidden});
  weight("embeddings.segment", {c.type_vocab, c.hidden});
  norm("embeddings.norm");
  for (long i = 0; i < c.layers; ++i) {
    std::string p = layer_prefix(i);
    for (const char* proj : {"query", "key", "value", "output"}) {
      weight(p + "attention." + proj + ".weight", {c.hidden, c.hidden});
      bias(p + "attention." + proj + ".bias", {c.hidden});
    }
    norm(p + "attention.norm");
    weight(p + "ffn.in.weight", {c.hidden, c.feed_forward});
    bias(p + "ffn.in.bias", {c.feed_forward});
    weight(p + "ffn.out.weight", {c.feed_forward, c.hidden});
    bias(p + "ffn.out.bias", {c.hidden});
    norm(p + "ffn.norm");
  }
  weight("classifier.weight", {c.hidden, c.n_labels});
  bias("classifier.bias", {c.n_labels});
  return specs;
}

}  // namespace

Parameters Parameters::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  tensor::Rng rng(seed);
  Parameters params;
  params.config = config;
  for (auto& spec : layout(config)) {
    Tensor t = Tensor::zeros(spec.shape, /*requires_grad=*/true);
    switch (spec.kind) {
      case InitKind::kWeight:
        for (auto& v : t.values()) v = rng.trunc_normal(0.02);
        break;
      case InitKind::kBias:
        break;  // zeros
      case InitKind::kNormScale:
        for (auto& v : t.values()) v = 1.0;
        break;
    }
    params.names.push_back(spec.name);
    params.tensors.push_back(std::move(t));
  }
  return params;
}

Parameters Parameters::structure(const ModelConfig& config) {
  config.validate();
  Parameters params;
  params.config = config;
  for (auto& spec : layout(config)) {
    params.names.push_back(spec.name);
    params.tensors.push_back(
        Tensor::zeros(spec.shape, /*requires_grad=*/true));
  }
  return params;
}

Parameters Parameters::clone() const {
  Parameters out;
  out.config = config;
  out.names = names;
  out.tensors.reserve(tensors.size());
  for (const auto& t : tensors)
    out.tensors.push_back(
        Tensor::from(t.shape(), t.values(), /*requires_grad=*/true));
  return out;
}

std::size_t Parameters::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

void Parameters::zero_grads() {
  for (auto& t : tensors) t.zero_grad();
}

Batch Batch::from_pairs(const std::vector<tokenizer::EncodedPair>& pairs,
                        std::vector<int> labels) {
  if (pairs.empty()) throw ModelError("cannot build a batch from zero pairs");
  if (!labels.empty() && labels.size() != pairs.size())
    throw ModelError("batch labels do not match the number of pairs");
  std::size_t full = pairs.front().ids.size();
  int longest = 0;
  for (const auto& p : pairs) {
    if (p.ids.size() != full)
      throw ModelError("all pairs in a batch must share max_len");
    longest = std::max(longest, p.true_length);
  }
  Batch b;
  b.batch_size = static_cast<long>(pairs.size());
  b.seq_len = longest;
  std::size_t n = static_cast<std::size_t>(longest);
  b.token_ids.reserve(pairs.size() * n);
  b.segment_ids.reserve(pairs.size() * n);
  b.attention_mask.reserve(pairs.size() * n);
  for (const auto& p : pairs) {
    b.token_ids.insert(b.token_ids.end(), p.ids.begin(), p.ids.begin() + n);
    b.segment_ids.insert(b.segment_ids.end(), p.segment_ids.begin(),
                         p.segment_ids.begin() + n);
    b.attention_mask.insert(b.attention_mask.end(), p.attention_mask.begin(),
                            p.attention_mask.begin() + n);
  }
  b.labels = std::move(labels);
  return b;
}

tensor::Tensor embed(const Batch& batch, const Parameters& params,
                     tensor::Rng& rng, bool training) {
  const ModelConfig& c = params.config;
  long B = batch.batch_size;
  long n = batch.seq_len;
  if (n > c.max_len)
    throw ModelError("sequence length " + std::to_string(n) +
                     " exceeds the position table (" +
                     std::to_string(c.max_len) + ")");
  std::vector<int> positions(static_cast<std::size_t>(B * n));
  for (long b = 0; b < B; ++b)
    for (long i = 0; i < n; ++i)
      positions[static_cast<std::size_t>(b * n + i)] = static_cast<int>(i);

  Tensor tok = tensor::embedding(params.at("embeddings.token"),
                                 batch.token_ids, B, n);
  Tensor pos =
      tensor::embedding(params.at("embeddings.position"), positions, B, n);
  Tensor seg = tensor::embedding(params.at("embeddings.segment"),
                                 batch.segment_ids, B, n);
  Tensor summed = tensor::add(tensor::add(tok, pos), seg);
  Tensor normed =
      tensor::layer_norm(summed, params.at("embeddings.norm.scale"),
                         params.at("embeddings.norm.shift"));
  return tensor::dropout(normed, c.dropout, rng, training);
}

namespace {

// (B*A, n, n) additive bias: 0 over real tokens, kMaskBias over padding keys.
Tensor attention_bias(const Batch& batch, long heads) {
  long B = batch.batch_size;
  long n = batch.seq_len;
  Tensor bias =
      Tensor::zeros({B * heads, n, n}, /*requires_grad=*/false);
  auto& v = bias.values();
  std::size_t un = static_cast<std::size_t>(n);
  for (long b = 0; b < B; ++b) {
    const int* mask = batch.attention_mask.data() + b * n;
    for (long a = 0; a < heads; ++a) {
      double* plane = v.data() + static_cast<std::size_t>((b * heads + a)) *
                                     un * un;
      for (std::size_t i = 0; i < un; ++i)
        for (std::size_t j = 0; j < un; ++j)
          if (mask[j] == 0) plane[i * un + j] = kMaskBias;
    }
  }
  return bias;
}

Tensor split_heads(const Tensor& x, long B, long n, long A, long d) {
  Tensor r = tensor::reshape(x, {B, n, A, d});
  Tensor p = tensor::permute(r, {0, 2, 1, 3});  // (B, A, n, d)
  return tensor::reshape(p, {B * A, n, d});
}

Tensor merge_heads(const Tensor& x, long B, long n, long A, long d) {
  Tensor r = tensor::reshape(x, {B, A, n, d});
  Tensor p = tensor::permute(r, {0, 2, 1, 3});  // (B, n, A, d)
  return tensor::reshape(p, {B, n, A * d});
}

}  // namespace

tensor::Tensor encoder_forward(const tensor::Tensor& x_in, const Batch& batch,
                               const Parameters& params, tensor::Rng& rng,
                               bool training) {
  const ModelConfig& c = params.config;
  long B = batch.batch_size;
  long n = batch.seq_len;
  long A = c.heads;
  long d = c.head_dim();
  if (x_in.shape() != Shape{B, n, c.hidden})
    throw ModelError("encoder input must be (batch, seq, hidden)");

  Tensor bias = attention_bias(batch, A);
  Tensor x = x_in;
  for (long layer = 0; layer < c.layers; ++layer) {
    std::string p = layer_prefix(layer);
    Tensor q = tensor::linear(x, params.at(p + "attention.query.weight"),
                              params.at(p + "attention.query.bias"));
    Tensor k = tensor::linear(x, params.at(p + "attention.key.weight"),
                              params.at(p + "attention.key.bias"));
    Tensor v = tensor::linear(x, params.at(p + "attention.value.weight"),
                              params.at(p + "attention.value.bias"));
    Tensor qh = split_heads(q, B, n, A, d);
    Tensor kh = split_heads(k, B, n, A, d);
    Tensor vh = split_heads(v, B, n, A, d);

    Tensor scores = tensor::scale(tensor::bmm(qh, tensor::transpose_last2(kh)),
                                  1.0 / std::sqrt(static_cast<double>(d)));
    Tensor probs = tensor::softmax_lastdim(tensor::add(scores, bias));
    probs = tensor::dropout(probs, c.dropout, rng, training);
    Tensor context = merge_heads(tensor::bmm(probs, vh), B, n, A, d);

    Tensor attn_out =
        tensor::linear(context, params.at(p + "attention.output.weight"),
                       params.at(p + "attention.output.bias"));
    attn_out = tensor::dropout(attn_out, c.dropout, rng, training);
    x = tensor::layer_norm(tensor::add(x, attn_out),
                           params.at(p + "attention.norm.scale"),
                           params.at(p + "attention.norm.shift"));

    Tensor ffn = tensor::gelu(tensor::linear(x, params.at(p + "ffn.in.weight"),
                                             params.at(p + "ffn.in.bias")));
    ffn = tensor::linear(ffn, params.at(p + "ffn.out.weight"),
                         params.at(p + "ffn.out.bias"));
    ffn = tensor::dropout(ffn, c.dropout, rng, training);
    x = tensor::layer_norm(tensor::add(x, ffn),
                           params.at(p + "ffn.norm.scale"),
                           params.at(p + "ffn.norm.shift"));
  }
  return x;
}

ClassifierOutput classify(const tensor::Tensor& encoded,
                          const Parameters& params) {
  Tensor cls = tensor::select_position(encoded, 0);
  Tensor logits = tensor::linear(cls, params.at("classifier.weight"),
                                 params.at("classifier.bias"));
  return ClassifierOutput{logits, tensor::softmax_lastdim(logits)};
}

tensor::Tensor logits_forward(const Batch& batch, const Parameters& params,
                              tensor::Rng& rng, bool training) {
  Tensor x = embed(batch, params, rng, training);
  Tensor enc = encoder_forward(x, batch, params, rng, training);
  return classify(enc, params).logits;
}

ClassifierOutput predict(const Batch& batch, const Parameters& params) {
  tensor::Rng rng(0);  // dropout disabled: never drawn from
  Tensor x = embed(batch, params, rng, /*training=*/false);
  Tensor enc = encoder_forward(x, batch, params, rng, /*training=*/false);
  return classify(enc, params);
}

// --- checkpoints -------------------------------------------------------------

namespace {

constexpr const char* kMagic = "ABSA-CKPT v1";

void write_f64_le(std::string& out, double x) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double read_f64_le(const std::string& data, std::size_t pos) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(
                static_cast<unsigned char>(data[pos + i]))
            << (8 * i);
  return std::bit_cast<double>(bits);
}

std::string shape_to_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_checkpoint(const std::string& path, const Parameters& params,
                     std::uint64_t vocab_fingerprint,
                     const std::string& label_map) {
  const ModelConfig& c = params.config;
  std::string header;
  header += kMagic;
  header += "\n[config]\n";
  header += "layers=" + std::to_string(c.layers) + "\n";
  header += "heads=" + std::to_string(c.heads) + "\n";
  header += "hidden=" + std::to_string(c.hidden) + "\n";
  header += "feed_forward=" + std::to_string(c.feed_forward) + "\n";
  header += "vocab_size=" + std::to_string(c.vocab_size) + "\n";
  header += "max_len=" + std::to_string(c.max_len) + "\n";
  header += "type_vocab=" + std::to_string(c.type_vocab) + "\n";
  header += "n_labels=" + std::to_string(c.n_labels) + "\n";
  header += "dropout=" + format_double(c.dropout) + "\n";
  header += "vocab_hash=" + std::to_string(vocab_fingerprint) + "\n";
  header += "label_map=" + label_map + "\n";
  header += "[manifest]\n";
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.names.size(); ++i) {
    header += params.names[i] + " " +
              shape_to_text(params.tensors[i].shape()) + " " +
              std::to_string(offset) + "\n";
    offset += params.tensors[i].size() * 8;
  }
  header += "[data]\n";

  std::string data;
  data.reserve(offset);
  for (const auto& t : params.tensors)
    for (double v : t.values()) write_f64_le(data, v);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw CheckpointError("cannot open checkpoint for writing: " + path);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw CheckpointError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string blob = std::move(buf).str();

  auto fail = [&path](const std::string& why) -> CheckpointError {
    return CheckpointError("checkpoint " + path + ": " + why);
  };

  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    std::size_t eol = blob.find('\n', pos);
    if (eol == std::string::npos) throw fail("truncated header");
    std::string line = blob.substr(pos, eol - pos);
    pos = eol + 1;
    return line;
  };

  if (next_line() != kMagic)
    throw fail("not an ABSA-CKPT v1 container");
  if (next_line() != "[config]") throw fail("missing [config] section");

  std::unordered_map<std::string, std::string> kv;
  std::string line;
  while ((line = next_line()) != "[manifest]") {
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw fail("malformed config line \"" + line + "\"");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto config_field = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw fail("config key \"" + key + "\" missing");
    return it->second;
  };

  ModelConfig c;
  try {
    c.layers = std::stol(config_field("layers"));
    c.heads = std::stol(config_field("heads"));
    c.hidden = std::stol(config_field("hidden"));
    c.feed_forward = std::stol(config_field("feed_forward"));
    c.vocab_size = std::stol(config_field("vocab_size"));
    c.max_len = std::stol(config_field("max_len"));
    c.type_vocab = std::stol(config_field("type_vocab"));
    c.n_labels = std::stol(config_field("n_labels"));
    c.dropout = std::stod(config_field("dropout"));
  } catch (const std::logic_error&) {
    throw fail("non-numeric config value");
  }

  Checkpoint ckpt;
  try {
    ckpt.vocab_fingerprint = std::stoull(config_field("vocab_hash"));
  } catch (const std::logic_error&) {
    throw fail("non-numeric vocab_hash");
  }
  ckpt.label_map = config_field("label_map");
  ckpt.params = Parameters::structure(c);

  struct Entry {
    std::string shape_text;
    std::size_t offset;
  };
  std::vector<Entry> manifest;
  while ((line = next_line()) != "[data]") {
    std::istringstream row(line);
    std::string name, shape_text;
    std::size_t offset;
    if (!(row >> name >> shape_text >> offset))
      throw fail("malformed manifest line \"" + line + "\"");
    std::size_t idx = manifest.size();
    if (idx >= ckpt.params.names.size() || name != ckpt.params.names[idx])
      throw fail("manifest entry \"" + name +
                 "\" does not match the expected parameter \"" +
                 (idx < ckpt.params.names.size() ? ckpt.params.names[idx]
                                                 : std::string("<none>")) +
                 "\"");
    if (shape_text != shape_to_text(ckpt.params.tensors[idx].shape()))
      throw fail("parameter \"" + name + "\" has shape " + shape_text +
                 " but the config implies " +
                 shape_to_text(ckpt.params.tensors[idx].shape()));
    manifest.push_back({std::move(shape_text), offset});
  }
  if (manifest.size() != ckpt.params.names.size())
    throw fail("manifest lists " + std::to_string(manifest.size()) +
               " tensors; the config implies " +
               std::to_string(ckpt.params.names.size()));

  std::size_t data_start = pos;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    auto& t = ckpt.params.tensors[i];
    std::size_t begin = data_start + manifest[i].offset;
    std::size_t bytes = t.size() * 8;
    if (begin + bytes > blob.size())
      throw fail("data section truncated at parameter \"" +
                 ckpt.params.names[i] + "\"");
    auto& vals = t.values();
    for (std::size_t j = 0; j < t.size(); ++j)
      vals[j] = read_f64_le(blob, begin + j * 8);
  }
  return ckpt;
}

}  // namespace absa::model
