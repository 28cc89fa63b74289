// Reverse-mode autodiff over dense 64-bit float tensors, plus the
// deterministic random-number source used everywhere a seed appears.
//
// A Tensor is a cheap shared handle onto a graph node. Operations build the
// graph; calling backward() on a traced scalar populates gradients on every
// traced ancestor. Graphs are single-use: rebuild the forward pass for each
// differentiation.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace absa::tensor {

using Shape = std::vector<long>;

class AutodiffError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Deterministic random source. All drawing routines are hand-specified on
// top of mt19937_64 raw output so that streams are bit-identical across
// standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1): top 53 bits of the raw draw.
  double uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller (one fresh pair per call, cosine branch).
  double normal();

  // Normal(0, sigma) redrawn until within 2 sigma of zero.
  double trunc_normal(double sigma);

  // Uniform integer in [0, n); n must be positive.
  std::size_t uniform_int(std::size_t n);

  // Fisher-Yates using uniform_int; deterministic per seed.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;  // empty handle; most operations reject it

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor constant(const Shape& shape, double value);
  static Tensor from(const Shape& shape, std::vector<double> values,
                     bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;  // element count

  std::vector<double>& values();
  const std::vector<double>& values() const;

  bool requires_grad() const;
  // Gradient buffer; throws if backward has not populated one.
  const std::vector<double>& grad() const;
  bool has_grad() const;
  void zero_grad();  // drops the gradient buffer

  double item() const;  // scalar tensors only

  // Reverse-mode differentiation from a traced scalar. Errors: non-scalar,
  // untraced tensor, or a second call on the same graph.
  void backward();

  detail::Node* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node)
      : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op(Shape shape, std::vector<double> values,
                        std::vector<Tensor> parents,
                        std::function<void(detail::Node&)> backprop);
};

// --- elementwise and structural operations ---------------------------------

Tensor add(const Tensor& a, const Tensor& b);       // identical shapes
// b's shape must be a suffix of a's; b broadcasts over the leading axes
// (bias addition). Gradient of b sums over the broadcast axes.
Tensor add_bias(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);       // identical shapes
Tensor scale(const Tensor& a, double factor);
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor permute(const Tensor& a, const std::vector<int>& axes);
Tensor transpose_last2(const Tensor& a);

// --- contractions -----------------------------------------------------------

// (..., k) x (k, n) -> (..., n): every leading position of `a` is a row.
Tensor matmul(const Tensor& a, const Tensor& w);
// (B, m, k) x (B, k, n) -> (B, m, n).
Tensor bmm(const Tensor& a, const Tensor& b);
// matmul(a, w) + bias broadcast; bias shape (n).
Tensor linear(const Tensor& a, const Tensor& w, const Tensor& bias);

// --- neural-net primitives --------------------------------------------------

// Normalizes over the last axis; gamma/beta shape = (last axis).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-12);
Tensor gelu(const Tensor& x);  // exact form: 0.5 x (1 + erf(x / sqrt 2))
Tensor softmax_lastdim(const Tensor& x);
// Gathers rows of `table` (V, H) by id; output shape (batch, seq, H).
// ids.size() must equal batch*seq; every id must be in [0, V).
Tensor embedding(const Tensor& table, const std::vector<int>& ids, long batch,
                 long seq);
// x (B, n, H) -> (B, H), the row at sequence position `index`.
Tensor select_position(const Tensor& x, long index);
// Inverted dropout; identity when !training or p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);
Tensor sum(const Tensor& x);  // scalar

// Fused softmax + negative log likelihood, meaned over the batch. logits
// (B, C); labels in [0, C); class_weights (optional, length C) scales each
// example by the weight of its true class.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                     const std::vector<double>* class_weights = nullptr);

}  // namespace absa::tensor
