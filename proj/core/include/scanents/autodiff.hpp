#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "scanents/error.hpp"
#include "scanents/rng.hpp"

// Minimal reverse-mode automatic differentiation over dense row-major
// tensors. Graphs are built per forward pass (define-by-run); every operation
// allocates a fresh node, records its parents and a backward rule, and never
// mutates its inputs. Rank is at most 3 and broadcasting is limited to
// trailing-dimension vector/scalar cases, which keeps each backward rule
// short enough to audit.
namespace scanents::ad {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Node;

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor constant(Shape shape, double fill);
  static Tensor scalar(double v);
  // A leaf that participates in gradient computation.
  static Tensor leaf(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int64_t numel() const;
  int64_t rank() const;
  int64_t dim(int i) const;
  const std::vector<double>& values() const;
  // Leaves only; the optimizer and finite differencing go through here.
  std::vector<double>& mutable_values();
  double item() const;  // throws NotScalar unless numel() == 1

  bool requires_grad() const;
  bool has_grad() const;
  const std::vector<double>& grad() const;  // throws Error when not materialized
  void zero_grad();

  // Reverse pass from a scalar. Gradients accumulate into every reachable
  // node that requires them; call once per graph.
  void backward() const;

  Node* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;

  friend Tensor make_op(Shape, std::vector<double>, const std::vector<Tensor>&,
                        std::function<void(Node&)>);
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until materialized
  bool requires_grad = false;
  bool is_leaf = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// Disables graph recording in scope; forwards run value-only. Used for
// evaluation and for finite-difference probes.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  static bool recording();

 private:
  bool prev_;
};

// -- elementwise and linear algebra -------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// add/mul accept equal shapes, a scalar right operand, or a rank-1 right
// operand matching the last dimension of a rank-2 left operand.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor softmax(const Tensor& a, int axis);
// Non-affine layer normalization over the last axis.
Tensor layer_norm(const Tensor& a, double eps = 1e-5);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int64_t start, int64_t end);
Tensor reshape(const Tensor& a, Shape shape);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Rows of `table` gathered by index.
Tensor embedding_lookup(const Tensor& table, const std::vector<int64_t>& ids);

// Mean binary cross entropy on logits, evaluated in the stable
// max(x,0) - x*y + log1p(exp(-|x|)) form. Targets must be 0/1 and are treated
// as constants.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

// Mean negative log softmax over rows; `targets` holds one class index per
// row. Rank-1 logits are treated as a single row.
Tensor cross_entropy(const Tensor& logits, const std::vector<int64_t>& targets);

// Returns {attended output, pre-softmax scores Q·Kᵀ/√d}. The scores tensor
// stays connected to the graph so losses may supervise it directly.
std::pair<Tensor, Tensor> scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

struct LstmWeights {
  Tensor w_ih;  // [input × 4·hidden], gate order i, f, g, o
  Tensor w_hh;  // [hidden × 4·hidden]
  Tensor bias;  // [4·hidden]
};

// One LSTM step over a [1×input] row; returns {h', c'}.
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h, const Tensor& c,
                                    const LstmWeights& w);

// -- parameters ----------------------------------------------------------------
struct Parameter {
  std::string name;
  Tensor tensor;
};

class ParamStore {
 public:
  Tensor create(const std::string& name, Shape shape, std::vector<double> init);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::vector<Parameter>& entries() const { return entries_; }
  std::vector<Parameter>& entries() { return entries_; }
  void zero_grad();
  int64_t total_size() const;

 private:
  std::vector<Parameter> entries_;
};

// Deterministic initializers.
std::vector<double> glorot_uniform(const Shape& shape, Rng& rng);
std::vector<double> uniform_init(int64_t n, double lo, double hi, Rng& rng);

}  // namespace scanents::ad
