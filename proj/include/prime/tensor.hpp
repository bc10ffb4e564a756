#pragma once

// Dense float64 tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a shared graph node. Operations build new
// nodes that remember their inputs and a backward rule; `backward(loss)`
// walks the graph in reverse topological order. Leaf gradients accumulate
// across calls until `zero_grad()`; intermediate gradients are recomputed on
// every call.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace prime {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass touches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                       std::to_string(shape_numel(shape)) + " values, got " +
                       std::to_string(values.size()));
    }
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->data = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto count = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(count, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double value) {
    auto count = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(count, value));
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from(Shape{}, {v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node().shape; }
  std::size_t dim(std::size_t i) const { return node().shape.at(i); }
  std::size_t rank() const { return node().shape.size(); }
  std::size_t numel() const { return node().data.size(); }
  bool is_scalar() const { return numel() == 1; }

  std::span<const double> data() const { return node().data; }
  double operator[](std::size_t i) const { return node().data[i]; }

  double item() const {
    if (!is_scalar()) throw ContractError("item: tensor of shape " + shape_str(shape()) + " is not scalar");
    return node().data[0];
  }

  bool requires_grad() const { return node().requires_grad; }
  bool has_grad() const { return !node().grad.empty(); }
  // Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const { return node().grad; }
  void zero_grad() { node().grad.clear(); }

  // A new leaf sharing no graph history; values are copied.
  Tensor detach() const { return from(shape(), node().data, false); }

  Tensor reshape(Shape new_shape) const;

  // Graph plumbing, used by the operations below.
  const std::shared_ptr<detail::Node>& impl() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  detail::Node& node() const {
    if (!node_) throw ContractError("tensor: use of undefined tensor");
    return *node_;
  }

  std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline Tensor make_result(Shape shape, std::vector<double> values,
                          std::vector<Tensor> inputs,
                          std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(values);
  for (const auto& t : inputs) {
    if (t.requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) {
    for (auto& t : inputs) n->parents.push_back(t.impl());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Elementwise binary op with scalar-only broadcasting. `fwd(x, y)` gives the
// value, `dx(x, y)` and `dy(x, y)` the partial derivatives.
template <class Fwd, class Dx, class Dy>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, Dx dx, Dy dy) {
  const bool a_scalar = a.is_scalar() && !b.is_scalar();
  const bool b_scalar = b.is_scalar() && !a.is_scalar();
  if (!a_scalar && !b_scalar) require_same_shape(op, a, b);

  const Shape out_shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(out_shape);
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = fwd(ad[a_scalar ? 0 : i], bd[b_scalar ? 0 : i]);
  }
  return make_result(out_shape, std::move(out), {a, b}, [=](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto& g = self.grad;
    if (pa.requires_grad) {
      auto& ga = pa.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        double x = pa.data[a_scalar ? 0 : i], y = pb.data[b_scalar ? 0 : i];
        ga[a_scalar ? 0 : i] += g[i] * dx(x, y);
      }
    }
    if (pb.requires_grad) {
      auto& gb = pb.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        double x = pa.data[a_scalar ? 0 : i], y = pb.data[b_scalar ? 0 : i];
        gb[b_scalar ? 0 : i] += g[i] * dy(x, y);
      }
    }
  });
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  const std::size_t n = a.numel();
  auto ad = a.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[i]);
  return make_result(a.shape(), std::move(out), {a}, [=](Node& self) {
    auto& p = *self.parents[0];
    auto& gp = p.grad_buffer();
    for (std::size_t i = 0; i < n; ++i) gp[i] += self.grad[i] * deriv(p.data[i], self.data[i]);
  });
}

}  // namespace detail

inline Tensor Tensor::reshape(Shape new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(shape()) + " as " + shape_str(new_shape));
  }
  return detail::make_result(std::move(new_shape), node().data, {*this}, [](detail::Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i];
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

// Multiplication by a constant that does not take part in differentiation.
inline Tensor scale(const Tensor& a, double c) {
  return detail::unary(
      a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sum(const Tensor& a) {
  auto d = a.data();
  double s = std::accumulate(d.begin(), d.end(), 0.0);
  return detail::make_result(Shape{}, {s}, {a}, [](detail::Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    for (auto& v : gp) v += self.grad[0];
  });
}

// Sum of |a_i - b_i|. The subgradient of |.| at 0 is taken as 0.
inline Tensor l1_sum(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("l1_sum", a, b);
  auto ad = a.data();
  auto bd = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < ad.size(); ++i) s += std::abs(ad[i] - bd[i]);
  return detail::make_result(Shape{}, {s}, {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const double g = self.grad[0];
    const std::size_t n = pa.data.size();
    auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
    if (pa.requires_grad) {
      auto& ga = pa.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g * sign(pa.data[i] - pb.data[i]);
    }
    if (pb.requires_grad) {
      auto& gb = pb.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gb[i] -= g * sign(pa.data[i] - pb.data[i]);
    }
  });
}

// [m,k] x [k,n] -> [m,n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * bd[p * n + j];
    }
  return detail::make_result(Shape{m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto& g = self.grad;
    if (pa.requires_grad) {
      auto& ga = pa.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * pb.data[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (pb.requires_grad) {
      auto& gb = pb.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = pa.data[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
        }
    }
  });
}

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// NCHW convolution (cross-correlation). `weight` is [out, in, kh, kw];
// `bias`, if defined, is [out].
inline Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias = {},
                     Conv2dOptions opt = {}) {
  if (x.rank() != 4 || weight.rank() != 4 || x.dim(1) != weight.dim(1)) {
    throw ShapeError("conv2d: shape mismatch " + shape_str(x.shape()) + " vs " +
                     shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != weight.dim(0))) {
    throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()) + " vs weight " +
                     shape_str(weight.shape()));
  }
  if (opt.stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = weight.dim(0), KH = weight.dim(2), KW = weight.dim(3);
  const std::size_t s = opt.stride, p = opt.padding;
  if (H + 2 * p < KH || W + 2 * p < KW) {
    throw ShapeError("conv2d: kernel " + shape_str(weight.shape()) + " larger than padded input " +
                     shape_str(x.shape()));
  }
  const std::size_t OH = (H + 2 * p - KH) / s + 1, OW = (W + 2 * p - KW) / s + 1;

  // Calls f(out_index, in_index, weight_index) for every contributing triple.
  auto for_each_tap = [=](auto&& f) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t o = 0; o < O; ++o)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t ky = 0; ky < KH; ++ky)
            for (std::size_t kx = 0; kx < KW; ++kx) {
              const std::size_t wi = ((o * C + c) * KH + ky) * KW + kx;
              for (std::size_t oy = 0; oy < OH; ++oy) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - static_cast<std::ptrdiff_t>(p);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                const std::size_t out_row = ((n * O + o) * OH + oy) * OW;
                const std::size_t in_row = ((n * C + c) * H + static_cast<std::size_t>(iy)) * W;
                for (std::size_t ox = 0; ox < OW; ++ox) {
                  const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kx) - static_cast<std::ptrdiff_t>(p);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                  f(out_row + ox, in_row + static_cast<std::size_t>(ix), wi);
                }
              }
            }
  };

  auto xd = x.data();
  auto wd = weight.data();
  std::vector<double> out(N * O * OH * OW, 0.0);
  if (bias.defined()) {
    auto bd = bias.data();
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t o = 0; o < O; ++o)
        std::fill_n(out.begin() + static_cast<std::ptrdiff_t>((n * O + o) * OH * OW), OH * OW, bd[o]);
  }
  for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t wi) { out[oi] += wd[wi] * xd[ii]; });

  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return detail::make_result(
      Shape{N, O, OH, OW}, std::move(out), std::move(inputs),
      [=](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        const auto& g = self.grad;
        if (px.requires_grad) {
          auto& gx = px.grad_buffer();
          for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t wi) { gx[ii] += pw.data[wi] * g[oi]; });
        }
        if (pw.requires_grad) {
          auto& gw = pw.grad_buffer();
          for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t wi) { gw[wi] += px.data[ii] * g[oi]; });
        }
        if (has_bias && self.parents[2]->requires_grad) {
          auto& gb = self.parents[2]->grad_buffer();
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < O; ++o)
              for (std::size_t i = 0; i < OH * OW; ++i) gb[o] += g[(n * O + o) * OH * OW + i];
        }
      });
}

// Non-overlapping k x k mean pooling over the spatial dims of NCHW input.
inline Tensor avg_pool(const Tensor& x, std::size_t k) {
  if (x.rank() != 4 || k == 0 || x.dim(2) % k != 0 || x.dim(3) % k != 0) {
    throw ShapeError("avg_pool: input " + shape_str(x.shape()) + " not divisible by window " +
                     std::to_string(k));
  }
  const std::size_t planes = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t OH = H / k, OW = W / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  auto xd = x.data();
  std::vector<double> out(planes * OH * OW, 0.0);
  for (std::size_t pl = 0; pl < planes; ++pl)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx)
        out[(pl * OH + y / k) * OW + xx / k] += xd[(pl * H + y) * W + xx] * inv;
  return detail::make_result(Shape{x.dim(0), x.dim(1), OH, OW}, std::move(out), {x},
                             [=](detail::Node& self) {
                               auto& gx = self.parents[0]->grad_buffer();
                               for (std::size_t pl = 0; pl < planes; ++pl)
                                 for (std::size_t y = 0; y < H; ++y)
                                   for (std::size_t xx = 0; xx < W; ++xx)
                                     gx[(pl * H + y) * W + xx] += self.grad[(pl * OH + y / k) * OW + xx / k] * inv;
                             });
}

// Nearest-neighbour upsampling by an integer factor.
inline Tensor upsample(const Tensor& x, std::size_t factor) {
  if (x.rank() != 4 || factor == 0) {
    throw ShapeError("upsample: expected NCHW input, got " + shape_str(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t OH = H * factor, OW = W * factor;
  auto xd = x.data();
  std::vector<double> out(planes * OH * OW);
  for (std::size_t pl = 0; pl < planes; ++pl)
    for (std::size_t y = 0; y < OH; ++y)
      for (std::size_t xx = 0; xx < OW; ++xx)
        out[(pl * OH + y) * OW + xx] = xd[(pl * H + y / factor) * W + xx / factor];
  return detail::make_result(Shape{x.dim(0), x.dim(1), OH, OW}, std::move(out), {x},
                             [=](detail::Node& self) {
                               auto& gx = self.parents[0]->grad_buffer();
                               for (std::size_t pl = 0; pl < planes; ++pl)
                                 for (std::size_t y = 0; y < OH; ++y)
                                   for (std::size_t xx = 0; xx < OW; ++xx)
                                     gx[(pl * H + y / factor) * W + xx / factor] += self.grad[(pl * OH + y) * OW + xx];
                             });
}

// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
inline void backward(const Tensor& loss) {
  if (!loss.is_scalar()) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{loss.impl().get(), 0}};
  seen.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  }
  loss.impl()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
  }
}

}  // namespace prime
