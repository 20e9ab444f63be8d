// Central finite-difference verification of analytic gradients.
#pragma once

#include "dgan/tensor.hpp"

#include <functional>
#include <vector>

namespace dgan {

struct GradCheckResult {
  double max_rel_error = 0.0;
  Index worst_index = -1;
  double analytic = 0.0;  // at worst_index
  double numeric = 0.0;
};

/// Compares `analytic` against (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for
/// every coordinate i. The per-coordinate error is |a - n| / (|n| + 1e-12);
/// coordinates whose absolute discrepancy is at most abs_tol count as exact.
/// Throws std::runtime_error if two evaluations of f at x disagree.
GradCheckResult grad_check(const std::function<double(const Vector&)>& f, const Vector& x,
                           const Vector& analytic, double eps = 1e-5, double abs_tol = 1e-10);

/// Flattened view over a selection of parameters, for checking graph code.
class ParamVector {
 public:
  explicit ParamVector(std::vector<Parameter*> params);

  Vector values() const;
  Vector grads() const;
  void assign(const Vector& x);
  void zero_grads();
  Index size() const { return size_; }

 private:
  std::vector<Parameter*> params_;
  Index size_ = 0;
};

/// Every trainable parameter of the given sets, in name order.
std::vector<Parameter*> trainable_params(std::initializer_list<ParamSet*> sets);

/// Builds the graph with `loss`, backpropagates, and runs grad_check over the
/// selected parameters.
GradCheckResult check_graph_gradient(const std::function<Var(Graph&)>& loss, std::vector<Parameter*> params,
                                     double eps = 1e-5, double abs_tol = 1e-10);

}  // namespace dgan
