// Reverse-mode differentiation over dense float64 tensors.
//
// Tensors are stored as a flat Eigen vector plus a shape. The last dimension
// is the channel axis; every op that needs a matrix view treats a tensor as
// (product of leading dims) x channels, row-major.
#pragma once

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dgan {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Shape = std::vector<Index>;
using Rng = std::mt19937_64;

Index numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Tensor {
  Shape shape;
  Vector data;

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, Vector d);

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor constant(Shape s, double v);
  static Tensor normal(Shape s, double stddev, Rng& rng);

  Index size() const { return data.size(); }
  Index channels() const { return shape.empty() ? 1 : shape.back(); }
  Index leading() const { return channels() == 0 ? 0 : size() / channels(); }

  Eigen::Map<RowMatrix> matrix() { return {data.data(), leading(), channels()}; }
  Eigen::Map<const RowMatrix> matrix() const { return {data.data(), leading(), channels()}; }

  double item() const;
};

/// Trainable tensor (or non-trainable buffer such as running statistics).
struct Parameter {
  Tensor value;
  Vector grad;
  bool trainable = true;

  void zero_grad() { grad = Vector::Zero(value.size()); }
};

/// Name-ordered parameter collection; iteration order is deterministic.
using ParamSet = std::map<std::string, Parameter>;

class Graph;

/// Handle to a node of a Graph.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  bool valid() const { return graph != nullptr && id >= 0; }
};

/// Tape of nodes recorded in creation order. Backward walks it in reverse.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Vector& out_grad)>;

  Var constant(Tensor t);
  /// Leaf bound to a parameter; its gradient is added to p.grad by backward().
  /// When trainable is false the leaf is a constant.
  Var parameter(Parameter& p, bool trainable = true);

  /// Records a node computed from parents. backward receives d(root)/d(node).
  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);

  /// Seeds d(root)/d(root) = 1 (root must be a scalar) and propagates.
  void backward(Var root);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  /// g += delta on node id, if that node takes gradients.
  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& delta) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = delta;
    else
      n.grad += delta;
  }
  Vector* grad_slot(int id);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Vector grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
};

/// Forward-pass switches shared by every layer.
struct Context {
  Graph& graph;
  bool training = false;
  Rng* rng = nullptr;          // dropout masks; unused when dropout is off
  bool trainable = true;       // false freezes parameters encountered below
  bool update_stats = true;    // batch-norm running statistics
  bool dropout_enabled = true;
  /// Replaces the layer momentum for running-statistic updates when set.
  std::optional<double> stats_momentum = std::nullopt;

  Var param(Parameter& p) const { return graph.parameter(p, trainable); }
};

namespace ops {

Var detach(Var a);
Var reshape(Var a, Shape shape);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// x + b with b of shape (channels) broadcast over every row.
Var add_bias(Var x, Var b);
/// (rows x k) * (k x n); the result keeps x's leading dims.
Var matmul(Var x, Var w);

Var sigmoid(Var a);
Var tanh(Var a);
Var leaky_relu(Var a, double slope);
Var exp(Var a);
Var square(Var a);

Var sum(Var a);
Var mean(Var a);
/// Per-row Euclidean norm of a (rows x k) tensor -> (rows, 1). The gradient
/// at a zero row is taken as zero.
Var row_norm(Var a);
/// Per-row sum -> (rows, 1).
Var row_sum(Var a);

Var concat_channels(std::span<const Var> parts);
Var slice_channels(Var a, Index offset, Index count);
/// Stacks along a new leading axis: n tensors of shape S -> (n, S...).
Var stack(std::span<const Var> parts);
/// Inverse of stack for one entry: (n, S...) -> S.
Var unstack(Var a, Index i);
/// Swaps the two leading axes: (a, b, rest...) -> (b, a, rest...).
Var swap_leading(Var a);
/// (B, W) -> (B, rows, cols, W), the code repeated at every cell.
Var tile_spatial(Var code, Index rows, Index cols);

/// 3x3 same-padded cross-correlation. x: (N, H, W, C), kernel: (9*C, M)
/// with taps ordered (dy, dx, c).
Var conv2d(Var x, Var kernel);
/// 3x3x3 same-padded cross-correlation over (D, H, W) of a time-major
/// volume x: (D, B, H, W, C); kernel (27*C, M) with taps (dz, dy, dx, c).
Var conv3d(Var x, Var kernel);

/// Fused LSTM gate math. preact: (N, 4C) in gate order input, forget,
/// output, candidate; c_prev: (N, C). Returns (N, 2C) = [h, c].
Var lstm_gates(Var preact, Var c_prev);

/// Normalizes each channel over all leading positions. In inference mode the
/// running statistics are used instead of batch moments.
Var batch_norm(const Context& ctx, Var x, Parameter& gamma, Parameter& beta, Parameter& running_mean,
               Parameter& running_var, double momentum, double eps);

/// Inverted dropout; identity when not training or p == 0.
Var dropout(const Context& ctx, Var x, double p);

}  // namespace ops

}  // namespace dgan
