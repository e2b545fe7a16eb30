#include "scanents/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace scanents::ad {

namespace {

thread_local bool g_recording = true;

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> value) {
  auto n = std::make_shared<Node>();
  if (shape_numel(shape) != static_cast<int64_t>(value.size()))
    throw ShapeMismatch("node value size does not match shape " + shape_str(shape));
  n->shape = std::move(shape);
  n->value = std::move(value);
  return n;
}

struct AxisSplit {
  int64_t outer;
  int64_t len;
  int64_t inner;
};

AxisSplit split_at(const Shape& shape, int axis) {
  if (axis < 0) axis += static_cast<int>(shape.size());
  if (axis < 0 || axis >= static_cast<int>(shape.size()))
    throw ShapeMismatch("axis out of range for shape " + shape_str(shape));
  AxisSplit s{1, shape[axis], 1};
  for (int i = 0; i < axis; ++i) s.outer *= shape[i];
  for (size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void require_rank2(const Tensor& t, const char* who) {
  if (t.rank() != 2) throw ShapeMismatch(std::string(who) + ": expected rank-2 tensor");
}

enum class Broadcast { kSame, kScalar, kRow };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.numel() == 1) return Broadcast::kScalar;
  if (a.rank() == 2 && b.rank() == 1 && b.dim(0) == a.dim(1)) return Broadcast::kRow;
  throw ShapeMismatch(std::string(who) + ": incompatible shapes " + shape_str(a.shape()) +
                      " and " + shape_str(b.shape()));
}

double stable_softplus(double x) {
  // log(1 + e^x) without overflow.
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d <= 0) throw ShapeMismatch("non-positive dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream out;
  out << "[";
  for (size_t i = 0; i < s.size(); ++i) out << (i ? "x" : "") << s[i];
  out << "]";
  return out.str();
}

// Builds the output tensor and, while recording, wires parents and the
// backward rule. `fn` reads self.grad and accumulates into parent grads.
Tensor make_op(Shape shape, std::vector<double> value, const std::vector<Tensor>& parents,
               std::function<void(Node&)> fn) {
  auto out = new_node(std::move(shape), std::move(value));
  if (NoGradGuard::recording()) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    if (needs) {
      out->requires_grad = true;
      for (const auto& p : parents) out->parents.push_back(p.node_);
      out->backward_fn = std::move(fn);
    }
  }
  return Tensor(std::move(out));
}

NoGradGuard::NoGradGuard() : prev_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = prev_; }
bool NoGradGuard::recording() { return g_recording; }

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(new_node(std::move(shape), std::move(values)));
}

Tensor Tensor::constant(Shape shape, double fill) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)), fill);
  return Tensor(new_node(std::move(shape), std::move(v)));
}

Tensor Tensor::scalar(double v) { return constant(Shape{1}, std::vector<double>{v}); }

Tensor Tensor::leaf(Shape shape, std::vector<double> values) {
  auto n = new_node(std::move(shape), std::move(values));
  n->requires_grad = true;
  n->is_leaf = true;
  return Tensor(std::move(n));
}

const Shape& Tensor::shape() const {
  if (!node_) throw Error("undefined tensor");
  return node_->shape;
}

int64_t Tensor::numel() const { return static_cast<int64_t>(values().size()); }
int64_t Tensor::rank() const { return static_cast<int64_t>(shape().size()); }

int64_t Tensor::dim(int i) const {
  const auto& s = shape();
  if (i < 0) i += static_cast<int>(s.size());
  if (i < 0 || i >= static_cast<int>(s.size())) throw ShapeMismatch("dim index out of range");
  return s[i];
}

const std::vector<double>& Tensor::values() const {
  if (!node_) throw Error("undefined tensor");
  return node_->value;
}

std::vector<double>& Tensor::mutable_values() {
  if (!node_) throw Error("undefined tensor");
  if (!node_->parents.empty()) throw Error("only leaf tensors may be mutated");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw NotScalar("item() on tensor of shape " + shape_str(shape()));
  return values()[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw Error("gradient not materialized; run backward() first");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.assign(node_->value.size(), 0.0);
}

void Tensor::backward() const {
  if (numel() != 1) throw NotScalar("backward() requires a scalar loss");
  if (!node_->requires_grad) return;

  // Iterative postorder DFS over requires-grad parents.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

// -- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw ShapeMismatch("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (int64_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  Node* an = a.node();
  Node* bn = b.node();
  return make_op({m, n}, std::move(out), {a, b}, [an, bn, m, k, n](Node& self) {
    const auto& g = self.grad;
    if (an->requires_grad) {
      an->ensure_grad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (int64_t j = 0; j < n; ++j) acc += g[i * n + j] * bn->value[p * n + j];
          an->grad[i * k + p] += acc;
        }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int64_t p = 0; p < k; ++p)
        for (int64_t i = 0; i < m; ++i) {
          const double apv = an->value[i * k + p];
          if (apv == 0.0) continue;
          for (int64_t j = 0; j < n; ++j) bn->grad[p * n + j] += apv * g[i * n + j];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const int64_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(static_cast<size_t>(m * n));
  const auto& av = a.values();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  Node* an = a.node();
  return make_op({n, m}, std::move(out), {a}, [an, m, n](Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int64_t j = 0; j < n; ++j)
      for (int64_t i = 0; i < m; ++i) an->grad[i * n + j] += self.grad[j * m + i];
  });
}

namespace {

// Shared add/mul implementation over the three broadcast kinds.
Tensor binary_broadcast(const Tensor& a, const Tensor& b, bool is_mul, const char* who) {
  const Broadcast kind = broadcast_kind(a, b, who);
  const auto& av = a.values();
  const auto& bv = b.values();
  const int64_t n = a.numel();
  const int64_t cols = kind == Broadcast::kRow ? a.dim(1) : 0;
  std::vector<double> out(static_cast<size_t>(n));
  auto bval = [&](int64_t i) {
    switch (kind) {
      case Broadcast::kSame: return bv[i];
      case Broadcast::kScalar: return bv[0];
      case Broadcast::kRow: return bv[i % cols];
    }
    return 0.0;
  };
  for (int64_t i = 0; i < n; ++i) out[i] = is_mul ? av[i] * bval(i) : av[i] + bval(i);
  Node* an = a.node();
  Node* bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn, kind, cols, n, is_mul](Node& self) {
    auto bval = [&](int64_t i) {
      switch (kind) {
        case Broadcast::kSame: return bn->value[i];
        case Broadcast::kScalar: return bn->value[0];
        case Broadcast::kRow: return bn->value[i % cols];
      }
      return 0.0;
    };
    if (an->requires_grad) {
      an->ensure_grad();
      for (int64_t i = 0; i < n; ++i) an->grad[i] += self.grad[i] * (is_mul ? bval(i) : 1.0);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int64_t i = 0; i < n; ++i) {
        const double contrib = self.grad[i] * (is_mul ? an->value[i] : 1.0);
        switch (kind) {
          case Broadcast::kSame: bn->grad[i] += contrib; break;
          case Broadcast::kScalar: bn->grad[0] += contrib; break;
          case Broadcast::kRow: bn->grad[i % cols] += contrib; break;
        }
      }
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_broadcast(a, b, false, "add"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_broadcast(a, b, true, "mul"); }

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }

Tensor div(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() && b.numel() != 1)
    throw ShapeMismatch("div: incompatible shapes " + shape_str(a.shape()) + " and " +
                        shape_str(b.shape()));
  const bool scalar_b = b.numel() == 1 && a.shape() != b.shape();
  const auto& av = a.values();
  const auto& bv = b.values();
  const int64_t n = a.numel();
  std::vector<double> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) out[i] = av[i] / (scalar_b ? bv[0] : bv[i]);
  Node* an = a.node();
  Node* bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn, n, scalar_b](Node& self) {
    for (int64_t i = 0; i < n; ++i) {
      const double bi = scalar_b ? bn->value[0] : bn->value[i];
      if (an->requires_grad) {
        an->ensure_grad();
        an->grad[i] += self.grad[i] / bi;
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        const double db = -self.grad[i] * an->value[i] / (bi * bi);
        bn->grad[scalar_b ? 0 : i] += db;
      }
    }
  });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double s) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * s;
  Node* an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an, s](Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += s * self.grad[i];
  });
}

namespace {

// y = f(x) with derivative expressed in terms of x and y.
Tensor unary_op(const Tensor& a, double (*f)(double), double (*dfdx)(double, double)) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  Node* an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an, dfdx](Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      an->grad[i] += self.grad[i] * dfdx(an->value[i], self.value[i]);
  });
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sqrt(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor softmax(const Tensor& a, int axis) {
  const AxisSplit sp = split_at(a.shape(), axis);
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (int64_t o = 0; o < sp.outer; ++o) {
    for (int64_t in = 0; in < sp.inner; ++in) {
      const int64_t base = o * sp.len * sp.inner + in;
      double mx = -HUGE_VAL;
      for (int64_t l = 0; l < sp.len; ++l) mx = std::max(mx, av[base + l * sp.inner]);
      double z = 0.0;
      for (int64_t l = 0; l < sp.len; ++l) {
        const double e = std::exp(av[base + l * sp.inner] - mx);
        out[base + l * sp.inner] = e;
        z += e;
      }
      for (int64_t l = 0; l < sp.len; ++l) out[base + l * sp.inner] /= z;
    }
  }
  Node* an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an, sp](Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int64_t o = 0; o < sp.outer; ++o) {
      for (int64_t in = 0; in < sp.inner; ++in) {
        const int64_t base = o * sp.len * sp.inner + in;
        double dot = 0.0;
        for (int64_t l = 0; l < sp.len; ++l) {
          const int64_t ix = base + l * sp.inner;
          dot += self.grad[ix] * self.value[ix];
        }
        for (int64_t l = 0; l < sp.len; ++l) {
          const int64_t ix = base + l * sp.inner;
          an->grad[ix] += self.value[ix] * (self.grad[ix] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& a, double eps) {
  const AxisSplit sp = split_at(a.shape(), -1);
  const auto& av = a.values();
  std::vector<double> out(av.size());
  std::vector<double> inv_std(static_cast<size_t>(sp.outer));
  for (int64_t o = 0; o < sp.outer; ++o) {
    const int64_t base = o * sp.len;
    double mu = 0.0;
    for (int64_t l = 0; l < sp.len; ++l) mu += av[base + l];
    mu /= static_cast<double>(sp.len);
    double var = 0.0;
    for (int64_t l = 0; l < sp.len; ++l) {
      const double d = av[base + l] - mu;
      var += d * d;
    }
    var /= static_cast<double>(sp.len);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[o] = inv;
    for (int64_t l = 0; l < sp.len; ++l) out[base + l] = (av[base + l] - mu) * inv;
  }
  Node* an = a.node();
  return make_op(a.shape(), std::move(out), {a},
                 [an, sp, inv_std = std::move(inv_std)](Node& self) {
                   if (!an->requires_grad) return;
                   an->ensure_grad();
                   for (int64_t o = 0; o < sp.outer; ++o) {
                     const int64_t base = o * sp.len;
                     const double len = static_cast<double>(sp.len);
                     double mean_g = 0.0;
                     double mean_gy = 0.0;
                     for (int64_t l = 0; l < sp.len; ++l) {
                       mean_g += self.grad[base + l];
                       mean_gy += self.grad[base + l] * self.value[base + l];
                     }
                     mean_g /= len;
                     mean_gy /= len;
                     for (int64_t l = 0; l < sp.len; ++l) {
                       an->grad[base + l] +=
                           inv_std[o] * (self.grad[base + l] - mean_g -
                                         self.value[base + l] * mean_gy);
                     }
                   }
                 });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeMismatch("concat of zero tensors");
  const Shape& first = parts[0].shape();
  int ax = axis < 0 ? axis + static_cast<int>(first.size()) : axis;
  if (ax < 0 || ax >= static_cast<int>(first.size()))
    throw ShapeMismatch("concat: axis out of range");
  Shape out_shape = first;
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    if (p.rank() != static_cast<int64_t>(first.size()))
      throw ShapeMismatch("concat: rank mismatch");
    for (size_t i = 0; i < first.size(); ++i) {
      if (static_cast<int>(i) != ax && p.shape()[i] != first[i])
        throw ShapeMismatch("concat: incompatible shapes");
    }
    out_shape[ax] += p.shape()[ax];
  }
  const AxisSplit sp = split_at(out_shape, ax);
  std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)));
  std::vector<int64_t> lens;
  for (const auto& p : parts) lens.push_back(p.shape()[ax]);
  int64_t offset = 0;
  for (size_t pi = 0; pi < parts.size(); ++pi) {
    const auto& pv = parts[pi].values();
    for (int64_t o = 0; o < sp.outer; ++o) {
      for (int64_t l = 0; l < lens[pi]; ++l) {
        for (int64_t in = 0; in < sp.inner; ++in) {
          out[(o * sp.len + offset + l) * sp.inner + in] =
              pv[(o * lens[pi] + l) * sp.inner + in];
        }
      }
    }
    offset += lens[pi];
  }
  std::vector<Node*> pnodes;
  for (const auto& p : parts) pnodes.push_back(p.node());
  return make_op(out_shape, std::move(out), parts,
                 [pnodes, lens, sp](Node& self) {
                   int64_t offset = 0;
                   for (size_t pi = 0; pi < pnodes.size(); ++pi) {
                     Node* pn = pnodes[pi];
                     if (pn->requires_grad) {
                       pn->ensure_grad();
                       for (int64_t o = 0; o < sp.outer; ++o)
                         for (int64_t l = 0; l < lens[pi]; ++l)
                           for (int64_t in = 0; in < sp.inner; ++in)
                             pn->grad[(o * lens[pi] + l) * sp.inner + in] +=
                                 self.grad[(o * sp.len + offset + l) * sp.inner + in];
                     }
                     offset += lens[pi];
                   }
                 });
}

Tensor slice(const Tensor& a, int axis, int64_t start, int64_t end) {
  const AxisSplit sp = split_at(a.shape(), axis);
  int ax = axis < 0 ? axis + static_cast<int>(a.shape().size()) : axis;
  if (start < 0 || start >= end || end > sp.len)
    throw ShapeMismatch("slice: bad range [" + std::to_string(start) + "," +
                        std::to_string(end) + ") for axis length " + std::to_string(sp.len));
  Shape out_shape = a.shape();
  out_shape[ax] = end - start;
  const int64_t olen = end - start;
  std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)));
  const auto& av = a.values();
  for (int64_t o = 0; o < sp.outer; ++o)
    for (int64_t l = 0; l < olen; ++l)
      for (int64_t in = 0; in < sp.inner; ++in)
        out[(o * olen + l) * sp.inner + in] = av[(o * sp.len + start + l) * sp.inner + in];
  Node* an = a.node();
  return make_op(out_shape, std::move(out), {a}, [an, sp, start, olen](Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int64_t o = 0; o < sp.outer; ++o)
      for (int64_t l = 0; l < olen; ++l)
        for (int64_t in = 0; in < sp.inner; ++in)
          an->grad[(o * sp.len + start + l) * sp.inner + in] +=
              self.grad[(o * olen + l) * sp.inner + in];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeMismatch("reshape: element count mismatch " + shape_str(a.shape()) + " -> " +
                        shape_str(shape));
  Node* an = a.node();
  return make_op(std::move(shape), a.values(), {a}, [an](Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  Node* an = a.node();
  return make_op({1}, {acc}, {a}, [an](Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (double& g : an->grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double k = static_cast<double>(a.numel());
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  Node* an = a.node();
  return make_op({1}, {acc / k}, {a}, [an, k](Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (double& g : an->grad) g += self.grad[0] / k;
  });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int64_t>& ids) {
  require_rank2(table, "embedding_lookup");
  const int64_t v = table.dim(0), d = table.dim(1);
  for (int64_t id : ids) {
    if (id < 0 || id >= v)
      throw ShapeMismatch("embedding_lookup: id " + std::to_string(id) + " outside table of " +
                          std::to_string(v) + " rows");
  }
  const int64_t n = static_cast<int64_t>(ids.size());
  if (n == 0) throw ShapeMismatch("embedding_lookup: empty id list");
  std::vector<double> out(static_cast<size_t>(n * d));
  const auto& tv = table.values();
  for (int64_t i = 0; i < n; ++i)
    std::copy_n(&tv[ids[i] * d], d, &out[i * d]);
  Node* tn = table.node();
  return make_op({n, d}, std::move(out), {table}, [tn, ids, d](Node& self) {
    if (!tn->requires_grad) return;
    tn->ensure_grad();
    for (size_t i = 0; i < ids.size(); ++i)
      for (int64_t j = 0; j < d; ++j) tn->grad[ids[i] * d + j] += self.grad[i * d + j];
  });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape())
    throw ShapeMismatch("bce_with_logits: logits " + shape_str(logits.shape()) +
                        " vs targets " + shape_str(targets.shape()));
  const auto& x = logits.values();
  const auto& y = targets.values();
  for (double t : y) {
    if (t != 0.0 && t != 1.0)
      throw NonBinaryTarget("bce_with_logits: target " + std::to_string(t));
  }
  const int64_t k = logits.numel();
  double acc = 0.0;
  for (int64_t i = 0; i < k; ++i) acc += std::max(x[i], 0.0) - x[i] * y[i] +
                                         std::log1p(std::exp(-std::abs(x[i])));
  Node* xn = logits.node();
  Node* yn = targets.node();
  // Targets are a constant input; they sit in the parent list only so the
  // backward closure can read them.
  return make_op({1}, {acc / static_cast<double>(k)}, {logits, targets}, [xn, yn, k](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double g = self.grad[0] / static_cast<double>(k);
    for (int64_t i = 0; i < k; ++i) {
      const double s = 1.0 / (1.0 + std::exp(-xn->value[i]));
      xn->grad[i] += g * (s - yn->value[i]);
    }
  });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int64_t>& targets) {
  Tensor rows = logits.rank() == 1 ? reshape(logits, {1, logits.dim(0)}) : logits;
  require_rank2(rows, "cross_entropy");
  const int64_t n = rows.dim(0), c = rows.dim(1);
  if (static_cast<int64_t>(targets.size()) != n)
    throw ShapeMismatch("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                        std::to_string(n) + " rows");
  for (int64_t t : targets) {
    if (t < 0 || t >= c) throw ShapeMismatch("cross_entropy: target index out of range");
  }
  const auto& x = rows.values();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double mx = -HUGE_VAL;
    for (int64_t j = 0; j < c; ++j) mx = std::max(mx, x[i * c + j]);
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) z += std::exp(x[i * c + j] - mx);
    acc += mx + std::log(z) - x[i * c + targets[i]];
  }
  Node* xn = rows.node();
  return make_op({1}, {acc / static_cast<double>(n)}, {rows}, [xn, targets, n, c](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double g = self.grad[0] / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
      double mx = -HUGE_VAL;
      for (int64_t j = 0; j < c; ++j) mx = std::max(mx, xn->value[i * c + j]);
      double z = 0.0;
      for (int64_t j = 0; j < c; ++j) z += std::exp(xn->value[i * c + j] - mx);
      for (int64_t j = 0; j < c; ++j) {
        const double p = std::exp(xn->value[i * c + j] - mx) / z;
        xn->grad[i * c + j] += g * (p - (j == targets[i] ? 1.0 : 0.0));
      }
    }
  });
}

std::pair<Tensor, Tensor> scaled_dot_attention(const Tensor& q, const Tensor& k,
                                               const Tensor& v) {
  require_rank2(q, "scaled_dot_attention");
  require_rank2(k, "scaled_dot_attention");
  require_rank2(v, "scaled_dot_attention");
  if (q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0))
    throw ShapeMismatch("scaled_dot_attention: Q " + shape_str(q.shape()) + ", K " +
                        shape_str(k.shape()) + ", V " + shape_str(v.shape()));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt_d);
  Tensor weights = softmax(scores, 1);
  Tensor out = matmul(weights, v);
  return {out, scores};
}

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h, const Tensor& c,
                                    const LstmWeights& w) {
  require_rank2(x, "lstm_cell");
  require_rank2(h, "lstm_cell");
  const int64_t hidden = h.dim(1);
  if (w.w_ih.dim(1) != 4 * hidden || w.w_hh.dim(0) != hidden || w.w_hh.dim(1) != 4 * hidden ||
      w.bias.dim(0) != 4 * hidden || c.dim(1) != hidden)
    throw ShapeMismatch("lstm_cell: inconsistent weight shapes");
  Tensor z = add(add(matmul(x, w.w_ih), matmul(h, w.w_hh)), w.bias);
  Tensor gi = sigmoid(slice(z, 1, 0, hidden));
  Tensor gf = sigmoid(slice(z, 1, hidden, 2 * hidden));
  Tensor gg = tanh(slice(z, 1, 2 * hidden, 3 * hidden));
  Tensor go = sigmoid(slice(z, 1, 3 * hidden, 4 * hidden));
  Tensor c2 = add(mul(gf, c), mul(gi, gg));
  Tensor h2 = mul(go, tanh(c2));
  return {h2, c2};
}

// -- parameters ----------------------------------------------------------------

Tensor ParamStore::create(const std::string& name, Shape shape, std::vector<double> init) {
  if (has(name)) throw Error("duplicate parameter name: " + name);
  Tensor t = Tensor::leaf(std::move(shape), std::move(init));
  entries_.push_back({name, t});
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw Error("unknown parameter: " + name);
}

bool ParamStore::has(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

int64_t ParamStore::total_size() const {
  int64_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

std::vector<double> glorot_uniform(const Shape& shape, Rng& rng) {
  const int64_t fan_in = shape.size() >= 1 ? shape[0] : 1;
  const int64_t fan_out = shape.size() >= 2 ? shape[1] : 1;
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> out(static_cast<size_t>(shape_numel(shape)));
  for (auto& v : out) v = rng.uniform(-limit, limit);
  return out;
}

std::vector<double> uniform_init(int64_t n, double lo, double hi, Rng& rng) {
  std::vector<double> out(static_cast<size_t>(n));
  for (auto& v : out) v = rng.uniform(lo, hi);
  return out;
}

}  // namespace scanents::ad
