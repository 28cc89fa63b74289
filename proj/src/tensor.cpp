#include "absa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>
#include <utility>

namespace absa::tensor {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  bool traced = false;
  bool backward_done = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
  }
};

}  // namespace detail

using detail::Node;

namespace {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (long d : shape) {
    if (d <= 0) throw AutodiffError("tensor dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

}  // namespace

// Builds an op node. Parents are retained only when the result is traced;
// backprop lambdas read parent and output values through the Node&.
Tensor make_op(Shape shape, std::vector<double> values,
               std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backprop) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  for (const auto& p : parents) {
    if (!p.defined())
      throw AutodiffError("operation applied to an empty tensor handle");
    if (p.node_->traced) node->traced = true;
  }
  if (node->traced) {
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node_);
    node->backprop = std::move(backprop);
  }
  return Tensor(std::move(node));
}

// --- Rng --------------------------------------------------------------------

double Rng::normal() {
  // Box-Muller, cosine branch; 1 - u keeps the log argument in (0, 1].
  double u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  return r * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
}

double Rng::trunc_normal(double sigma) {
  if (sigma <= 0.0) return 0.0;
  for (;;) {
    double x = sigma * normal();
    if (std::abs(x) <= 2.0 * sigma) return x;
  }
}

std::size_t Rng::uniform_int(std::size_t n) {
  if (n == 0) throw AutodiffError("uniform_int: n must be positive");
  // Rejection keeps the draw exactly uniform with no modulo bias.
  std::uint64_t bound = std::numeric_limits<std::uint64_t>::max() -
                        std::numeric_limits<std::uint64_t>::max() % n;
  for (;;) {
    std::uint64_t x = next();
    if (x < bound) return static_cast<std::size_t>(x % n);
  }
}

// --- Tensor core ------------------------------------------------------------

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->values.assign(shape_size(shape), 0.0);
  node->requires_grad = requires_grad;
  node->traced = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::constant(const Shape& shape, double value) {
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->values.assign(shape_size(shape), value);
  return Tensor(std::move(node));
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values,
                    bool requires_grad) {
  if (values.size() != shape_size(shape))
    throw AutodiffError("from: " + std::to_string(values.size()) +
                        " values do not fill shape " + shape_str(shape));
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  node->traced = requires_grad;
  return Tensor(std::move(node));
}

namespace {
void require_defined(const Tensor& t, const char* what) {
  if (!t.defined())
    throw AutodiffError(std::string(what) + " on an empty tensor handle");
}
}  // namespace

const Shape& Tensor::shape() const {
  require_defined(*this, "shape()");
  return node_->shape;
}

std::size_t Tensor::size() const {
  require_defined(*this, "size()");
  return node_->values.size();
}

std::vector<double>& Tensor::values() {
  require_defined(*this, "values()");
  return node_->values;
}

const std::vector<double>& Tensor::values() const {
  require_defined(*this, "values()");
  return node_->values;
}

bool Tensor::requires_grad() const {
  require_defined(*this, "requires_grad()");
  return node_->requires_grad;
}

bool Tensor::has_grad() const {
  require_defined(*this, "has_grad()");
  return !node_->grad.empty();
}

const std::vector<double>& Tensor::grad() const {
  require_defined(*this, "grad()");
  if (node_->grad.empty())
    throw AutodiffError("gradient requested before backward populated it");
  return node_->grad;
}

void Tensor::zero_grad() {
  require_defined(*this, "zero_grad()");
  node_->grad.clear();
}

double Tensor::item() const {
  require_defined(*this, "item()");
  if (node_->values.size() != 1)
    throw AutodiffError("item(): tensor of shape " + shape_str(node_->shape) +
                        " is not a scalar");
  return node_->values[0];
}

void Tensor::backward() {
  require_defined(*this, "backward()");
  if (node_->values.size() != 1)
    throw AutodiffError("backward requires a scalar; tensor has shape " +
                        shape_str(node_->shape));
  if (!node_->traced)
    throw AutodiffError(
        "backward on an untraced tensor: no differentiable inputs reach it");
  if (node_->backward_done)
    throw AutodiffError(
        "backward already ran on this graph; rebuild the forward pass before "
        "differentiating again");
  node_->backward_done = true;

  // Postorder DFS over traced ancestors: parents land before children, so
  // reverse order processes each node before any node it feeds gradient to.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx].get();
      ++idx;
      if (p->traced && !seen.contains(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backprop) continue;
    n->ensure_grad();
    n->backprop(*n);
  }
}

// --- elementwise and structural operations ----------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  if (a.shape() != b.shape())
    throw AutodiffError("add: shape mismatch " + shape_str(a.shape()) +
                        " vs " + shape_str(b.shape()));
  std::vector<double> out(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (int k : {0, 1}) {
      Node& p = *self.parents[static_cast<std::size_t>(k)];
      if (!p.traced) continue;
      p.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        p.grad[i] += self.grad[i];
    }
  });
}

Tensor add_bias(const Tensor& a, const Tensor& b) {
  require_defined(a, "add_bias");
  require_defined(b, "add_bias");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (bs.size() > as.size() ||
      !std::equal(bs.rbegin(), bs.rend(), as.rbegin()))
    throw AutodiffError("add_bias: " + shape_str(bs) +
                        " is not a trailing slice of " + shape_str(as));
  std::size_t bn = b.size();
  std::vector<double> out(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i % bn];
  return make_op(as, std::move(out), {a, b}, [bn](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.traced) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pa.grad[i] += self.grad[i];
    }
    if (pb.traced) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pb.grad[i % bn] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  if (a.shape() != b.shape())
    throw AutodiffError("mul: shape mismatch " + shape_str(a.shape()) +
                        " vs " + shape_str(b.shape()));
  std::vector<double> out(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.traced) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pa.grad[i] += self.grad[i] * pb.values[i];
    }
    if (pb.traced) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pb.grad[i] += self.grad[i] * pa.values[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  require_defined(a, "scale");
  std::vector<double> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return make_op(a.shape(), std::move(out), {a}, [factor](Node& self) {
    Node& p = *self.parents[0];
    if (!p.traced) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p.grad[i] += self.grad[i] * factor;
  });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  require_defined(a, "reshape");
  if (shape_size(shape) != a.size())
    throw AutodiffError("reshape: " + shape_str(a.shape()) +
                        " cannot become " + shape_str(shape));
  return make_op(shape, a.values(), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.traced) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p.grad[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& a, const std::vector<int>& axes) {
  require_defined(a, "permute");
  const Shape& as = a.shape();
  std::size_t rank = as.size();
  if (axes.size() != rank)
    throw AutodiffError("permute: got " + std::to_string(axes.size()) +
                        " axes for rank " + std::to_string(rank));
  std::vector<bool> used(rank, false);
  for (int ax : axes) {
    if (ax < 0 || static_cast<std::size_t>(ax) >= rank ||
        used[static_cast<std::size_t>(ax)])
      throw AutodiffError("permute: axes are not a permutation");
    used[static_cast<std::size_t>(ax)] = true;
  }

  Shape out_shape(rank);
  for (std::size_t d = 0; d < rank; ++d)
    out_shape[d] = as[static_cast<std::size_t>(axes[d])];

  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t d = rank; d-- > 1;)
    in_strides[d - 1] =
        in_strides[d] * static_cast<std::size_t>(as[d]);

  // src[out_flat] = in_flat, reused verbatim by the backward pass.
  auto src = std::make_shared<std::vector<std::size_t>>(a.size());
  std::vector<std::size_t> coord(rank, 0);  // output odometer
  for (std::size_t of = 0; of < a.size(); ++of) {
    std::size_t in_flat = 0;
    for (std::size_t d = 0; d < rank; ++d)
      in_flat += coord[d] * in_strides[static_cast<std::size_t>(axes[d])];
    (*src)[of] = in_flat;
    for (std::size_t d = rank; d-- > 0;) {
      if (++coord[d] < static_cast<std::size_t>(out_shape[d])) break;
      coord[d] = 0;
    }
  }

  std::vector<double> out(a.size());
  const auto& av = a.values();
  for (std::size_t of = 0; of < out.size(); ++of) out[of] = av[(*src)[of]];
  return make_op(std::move(out_shape), std::move(out), {a},
                 [src](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.traced) return;
                   p.ensure_grad();
                   for (std::size_t of = 0; of < self.grad.size(); ++of)
                     p.grad[(*src)[of]] += self.grad[of];
                 });
}

Tensor transpose_last2(const Tensor& a) {
  require_defined(a, "transpose_last2");
  std::size_t rank = a.shape().size();
  if (rank < 2)
    throw AutodiffError("transpose_last2 requires rank >= 2, got " +
                        shape_str(a.shape()));
  std::vector<int> axes(rank);
  for (std::size_t d = 0; d < rank; ++d) axes[d] = static_cast<int>(d);
  std::swap(axes[rank - 1], axes[rank - 2]);
  return permute(a, axes);
}

// --- contractions -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& w) {
  require_defined(a, "matmul");
  require_defined(w, "matmul");
  const Shape& as = a.shape();
  const Shape& ws = w.shape();
  if (ws.size() != 2)
    throw AutodiffError("matmul: weight must be rank 2, got " +
                        shape_str(ws));
  if (as.empty() || as.back() != ws[0])
    throw AutodiffError("matmul: inner dimensions disagree, " +
                        shape_str(as) + " x " + shape_str(ws));
  std::size_t k = static_cast<std::size_t>(ws[0]);
  std::size_t n = static_cast<std::size_t>(ws[1]);
  std::size_t m = a.size() / k;

  std::vector<double> out(m * n, 0.0);
  const auto& av = a.values();
  const auto& wv = w.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* wrow = wv.data() + p * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * wrow[j];
    }

  Shape out_shape = as;
  out_shape.back() = static_cast<long>(n);
  return make_op(std::move(out_shape), std::move(out), {a, w},
                 [m, k, n](Node& self) {
                   Node& pa = *self.parents[0];
                   Node& pw = *self.parents[1];
                   const auto& g = self.grad;
                   if (pa.traced) {
                     pa.ensure_grad();
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t p = 0; p < k; ++p) {
                         double acc = 0.0;
                         const double* grow = g.data() + i * n;
                         const double* wrow = pw.values.data() + p * n;
                         for (std::size_t j = 0; j < n; ++j)
                           acc += grow[j] * wrow[j];
                         pa.grad[i * k + p] += acc;
                       }
                   }
                   if (pw.traced) {
                     pw.ensure_grad();
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t p = 0; p < k; ++p) {
                         double aip = pa.values[i * k + p];
                         if (aip == 0.0) continue;
                         const double* grow = g.data() + i * n;
                         double* wgrow = pw.grad.data() + p * n;
                         for (std::size_t j = 0; j < n; ++j)
                           wgrow[j] += aip * grow[j];
                       }
                   }
                 });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require_defined(a, "bmm");
  require_defined(b, "bmm");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[1])
    throw AutodiffError("bmm: incompatible shapes " + shape_str(as) + " x " +
                        shape_str(bs));
  std::size_t batches = static_cast<std::size_t>(as[0]);
  std::size_t m = static_cast<std::size_t>(as[1]);
  std::size_t k = static_cast<std::size_t>(as[2]);
  std::size_t n = static_cast<std::size_t>(bs[2]);

  std::vector<double> out(batches * m * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t t = 0; t < batches; ++t) {
    const double* A = av.data() + t * m * k;
    const double* B = bv.data() + t * k * n;
    double* C = out.data() + t * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        double aip = A[i * k + p];
        if (aip == 0.0) continue;
        const double* brow = B + p * n;
        double* crow = C + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
  }

  Shape out_shape{as[0], as[1], bs[2]};
  return make_op(
      std::move(out_shape), std::move(out), {a, b},
      [batches, m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const auto& g = self.grad;
        if (pa.traced) pa.ensure_grad();
        if (pb.traced) pb.ensure_grad();
        for (std::size_t t = 0; t < batches; ++t) {
          const double* A = pa.values.data() + t * m * k;
          const double* B = pb.values.data() + t * k * n;
          const double* G = g.data() + t * m * n;
          if (pa.traced) {
            double* dA = pa.grad.data() + t * m * k;
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t p = 0; p < k; ++p) {
                double acc = 0.0;
                const double* grow = G + i * n;
                const double* brow = B + p * n;
                for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                dA[i * k + p] += acc;
              }
          }
          if (pb.traced) {
            double* dB = pb.grad.data() + t * k * n;
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t p = 0; p < k; ++p) {
                double aip = A[i * k + p];
                if (aip == 0.0) continue;
                const double* grow = G + i * n;
                double* brow = dB + p * n;
                for (std::size_t j = 0; j < n; ++j) brow[j] += aip * grow[j];
              }
          }
        }
      });
}

Tensor linear(const Tensor& a, const Tensor& w, const Tensor& bias) {
  return add_bias(matmul(a, w), bias);
}

// --- neural-net primitives ----------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  require_defined(x, "layer_norm");
  require_defined(gamma, "layer_norm");
  require_defined(beta, "layer_norm");
  const Shape& xs = x.shape();
  if (xs.empty())
    throw AutodiffError("layer_norm needs at least one axis");
  long d_long = xs.back();
  std::size_t d = static_cast<std::size_t>(d_long);
  if (gamma.shape() != Shape{d_long} || beta.shape() != Shape{d_long})
    throw AutodiffError("layer_norm: scale/shift must have shape (" +
                        std::to_string(d_long) + ")");
  std::size_t rows = x.size() / d;

  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double c = row[j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      double xh = (row[j] - mu) * inv;
      (*xhat)[r * d + j] = xh;
      out[r * d + j] = gv[j] * xh + bv[j];
    }
  }

  return make_op(
      xs, std::move(out), {x, gamma, beta},
      [xhat, inv_std, rows, d](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        const auto& g = self.grad;
        if (pg.traced) {
          pg.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j)
              pg.grad[j] += g[r * d + j] * (*xhat)[r * d + j];
        }
        if (pb.traced) {
          pb.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) pb.grad[j] += g[r * d + j];
        }
        if (px.traced) {
          px.ensure_grad();
          std::vector<double> dxhat(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              dxhat[j] = g[r * d + j] * pg.values[j];
              m1 += dxhat[j];
              m2 += dxhat[j] * (*xhat)[r * d + j];
            }
            m1 /= static_cast<double>(d);
            m2 /= static_cast<double>(d);
            double inv = (*inv_std)[r];
            for (std::size_t j = 0; j < d; ++j)
              px.grad[r * d + j] +=
                  inv * (dxhat[j] - m1 - (*xhat)[r * d + j] * m2);
          }
        }
      });
}

Tensor gelu(const Tensor& x) {
  require_defined(x, "gelu");
  static constexpr double kInvSqrt2 = 0.7071067811865475244008443621048490393;
  static constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599343818685;
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * kInvSqrt2));
  return make_op(x.shape(), std::move(out), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.traced) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      double v = p.values[i];
      double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      p.grad[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor softmax_lastdim(const Tensor& x) {
  require_defined(x, "softmax_lastdim");
  const Shape& xs = x.shape();
  if (xs.empty()) throw AutodiffError("softmax needs at least one axis");
  std::size_t d = static_cast<std::size_t>(xs.back());
  std::size_t rows = x.size() / d;
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double m = row[0];
    for (std::size_t j = 1; j < d; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double e = std::exp(row[j] - m);
      out[r * d + j] = e;
      s += e;
    }
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] /= s;
  }
  return make_op(xs, std::move(out), {x}, [rows, d](Node& self) {
    Node& p = *self.parents[0];
    if (!p.traced) return;
    p.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* prob = self.values.data() + r * d;
      const double* g = self.grad.data() + r * d;
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += g[j] * prob[j];
      for (std::size_t j = 0; j < d; ++j)
        p.grad[r * d + j] += prob[j] * (g[j] - dot);
    }
  });
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids, long batch,
                 long seq) {
  require_defined(table, "embedding");
  const Shape& ts = table.shape();
  if (ts.size() != 2)
    throw AutodiffError("embedding table must be rank 2, got " +
                        shape_str(ts));
  if (batch <= 0 || seq <= 0 ||
      ids.size() != static_cast<std::size_t>(batch) *
                        static_cast<std::size_t>(seq))
    throw AutodiffError("embedding: ids do not fill (" +
                        std::to_string(batch) + ", " + std::to_string(seq) +
                        ")");
  long v = ts[0];
  std::size_t h = static_cast<std::size_t>(ts[1]);
  for (int id : ids)
    if (id < 0 || id >= v)
      throw AutodiffError("embedding: id " + std::to_string(id) +
                          " is out of table range [0, " + std::to_string(v) +
                          ")");
  std::vector<double> out(ids.size() * h);
  const auto& tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * h, h,
                out.data() + i * h);
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  return make_op(Shape{batch, seq, ts[1]}, std::move(out), {table},
                 [ids_copy, h](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.traced) return;
                   p.ensure_grad();
                   for (std::size_t i = 0; i < ids_copy->size(); ++i) {
                     double* dst =
                         p.grad.data() +
                         static_cast<std::size_t>((*ids_copy)[i]) * h;
                     const double* src = self.grad.data() + i * h;
                     for (std::size_t j = 0; j < h; ++j) dst[j] += src[j];
                   }
                 });
}

Tensor select_position(const Tensor& x, long index) {
  require_defined(x, "select_position");
  const Shape& xs = x.shape();
  if (xs.size() != 3)
    throw AutodiffError("select_position expects (B, n, H), got " +
                        shape_str(xs));
  if (index < 0 || index >= xs[1])
    throw AutodiffError("select_position: index " + std::to_string(index) +
                        " out of range for sequence length " +
                        std::to_string(xs[1]));
  std::size_t b = static_cast<std::size_t>(xs[0]);
  std::size_t n = static_cast<std::size_t>(xs[1]);
  std::size_t h = static_cast<std::size_t>(xs[2]);
  std::size_t at = static_cast<std::size_t>(index);
  std::vector<double> out(b * h);
  const auto& xv = x.values();
  for (std::size_t i = 0; i < b; ++i)
    std::copy_n(xv.data() + (i * n + at) * h, h, out.data() + i * h);
  return make_op(Shape{xs[0], xs[2]}, std::move(out), {x},
                 [b, n, h, at](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.traced) return;
                   p.ensure_grad();
                   for (std::size_t i = 0; i < b; ++i) {
                     double* dst = p.grad.data() + (i * n + at) * h;
                     const double* src = self.grad.data() + i * h;
                     for (std::size_t j = 0; j < h; ++j) dst[j] += src[j];
                   }
                 });
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  require_defined(x, "dropout");
  if (p < 0.0 || p >= 1.0)
    throw AutodiffError("dropout probability must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  auto mask = std::make_shared<std::vector<double>>(x.size());
  double keep_scale = 1.0 / (1.0 - p);
  for (auto& m : *mask) m = rng.uniform() >= p ? keep_scale : 0.0;
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * (*mask)[i];
  return make_op(x.shape(), std::move(out), {x}, [mask](Node& self) {
    Node& parent = *self.parents[0];
    if (!parent.traced) return;
    parent.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      parent.grad[i] += self.grad[i] * (*mask)[i];
  });
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_op(Shape{1}, {total}, {x}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.traced) return;
    p.ensure_grad();
    for (auto& g : p.grad) g += self.grad[0];
  });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                     const std::vector<double>* class_weights) {
  require_defined(logits, "cross_entropy");
  const Shape& ls = logits.shape();
  if (ls.size() != 2)
    throw AutodiffError("cross_entropy expects (B, C) logits, got " +
                        shape_str(ls));
  std::size_t b = static_cast<std::size_t>(ls[0]);
  std::size_t c = static_cast<std::size_t>(ls[1]);
  if (labels.size() != b)
    throw AutodiffError("cross_entropy: " + std::to_string(labels.size()) +
                        " labels for batch of " + std::to_string(b));
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw AutodiffError("cross_entropy: label " + std::to_string(y) +
                          " out of range [0, " + std::to_string(c) + ")");
  if (class_weights && class_weights->size() != c)
    throw AutodiffError("cross_entropy: expected " + std::to_string(c) +
                        " class weights, got " +
                        std::to_string(class_weights->size()));

  auto probs = std::make_shared<std::vector<double>>(b * c);
  auto weights = std::make_shared<std::vector<double>>(
      class_weights ? *class_weights : std::vector<double>(c, 1.0));
  auto labels_copy = std::make_shared<std::vector<int>>(labels);

  const auto& lv = logits.values();
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = lv.data() + i * c;
    double m = row[0];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      double e = std::exp(row[j] - m);
      (*probs)[i * c + j] = e;
      s += e;
    }
    for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] /= s;
    double lse = m + std::log(s);
    std::size_t y = static_cast<std::size_t>(labels[i]);
    total += (*weights)[y] * (lse - row[y]);
  }
  total /= static_cast<double>(b);

  return make_op(
      Shape{1}, {total}, {logits},
      [probs, weights, labels_copy, b, c](Node& self) {
        Node& p = *self.parents[0];
        if (!p.traced) return;
        p.ensure_grad();
        double g0 = self.grad[0] / static_cast<double>(b);
        for (std::size_t i = 0; i < b; ++i) {
          std::size_t y = static_cast<std::size_t>((*labels_copy)[i]);
          double w = (*weights)[y] * g0;
          for (std::size_t j = 0; j < c; ++j) {
            double delta = (*probs)[i * c + j] - (j == y ? 1.0 : 0.0);
            p.grad[i * c + j] += w * delta;
          }
        }
      });
}

}  // namespace absa::tensor
