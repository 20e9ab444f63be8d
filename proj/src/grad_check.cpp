#include "dgan/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace dgan {

GradCheckResult grad_check(const std::function<double(const Vector&)>& f, const Vector& x,
                           const Vector& analytic, double eps, double abs_tol) {
  if (analytic.size() != x.size()) throw std::invalid_argument("grad_check: gradient size mismatch");
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  const double f0 = f(x);
  const double f1 = f(x);
  if (f0 != f1) throw std::runtime_error("grad_check: function is not deterministic");

  GradCheckResult res;
  Vector probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = f(probe);
    probe[i] = x[i] - eps;
    const double down = f(probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * eps);
    const double diff = std::abs(analytic[i] - numeric);
    const double rel = diff <= abs_tol ? 0.0 : diff / (std::abs(numeric) + 1e-12);
    if (rel > res.max_rel_error || res.worst_index < 0) {
      res.max_rel_error = std::max(res.max_rel_error, rel);
      res.worst_index = i;
      res.analytic = analytic[i];
      res.numeric = numeric;
    }
  }
  return res;
}

ParamVector::ParamVector(std::vector<Parameter*> params) : params_(std::move(params)) {
  for (auto* p : params_) size_ += p->value.size();
}

Vector ParamVector::values() const {
  Vector v(size_);
  Index off = 0;
  for (auto* p : params_) {
    v.segment(off, p->value.size()) = p->value.data;
    off += p->value.size();
  }
  return v;
}

Vector ParamVector::grads() const {
  Vector v(size_);
  Index off = 0;
  for (auto* p : params_) {
    const Index n = p->value.size();
    if (p->grad.size() == n)
      v.segment(off, n) = p->grad;
    else
      v.segment(off, n).setZero();
    off += n;
  }
  return v;
}

void ParamVector::assign(const Vector& x) {
  if (x.size() != size_) throw std::invalid_argument("ParamVector: size mismatch");
  Index off = 0;
  for (auto* p : params_) {
    p->value.data = x.segment(off, p->value.size());
    off += p->value.size();
  }
}

void ParamVector::zero_grads() {
  for (auto* p : params_) p->zero_grad();
}

std::vector<Parameter*> trainable_params(std::initializer_list<ParamSet*> sets) {
  std::vector<Parameter*> out;
  for (auto* s : sets)
    for (auto& [name, p] : *s)
      if (p.trainable) out.push_back(&p);
  return out;
}

GradCheckResult check_graph_gradient(const std::function<Var(Graph&)>& loss, std::vector<Parameter*> params,
                                     double eps, double abs_tol) {
  ParamVector pv(std::move(params));
  const Vector x0 = pv.values();
  pv.zero_grads();
  {
    Graph g;
    g.backward(loss(g));
  }
  const Vector analytic = pv.grads();
  auto f = [&](const Vector& x) {
    pv.assign(x);
    Graph g;
    return loss(g).value().item();
  };
  GradCheckResult res = grad_check(f, x0, analytic, eps, abs_tol);
  pv.assign(x0);
  return res;
}

}  // namespace dgan
