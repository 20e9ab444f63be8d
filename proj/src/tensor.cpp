#include "dgan/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dgan {

Index numel(const Shape& shape) {
  Index n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape s) : shape(std::move(s)), data(Vector::Zero(numel(shape))) {}

Tensor::Tensor(Shape s, Vector d) : shape(std::move(s)), data(std::move(d)) {
  if (numel(shape) != data.size())
    throw std::invalid_argument("tensor: data size does not match shape " + shape_string(shape));
}

Tensor Tensor::constant(Shape s, double v) {
  Tensor t(std::move(s));
  t.data.setConstant(v);
  return t;
}

Tensor Tensor::normal(Shape s, double stddev, Rng& rng) {
  Tensor t(std::move(s));
  std::normal_distribution<double> dist(0.0, stddev);
  for (Index i = 0; i < t.size(); ++i) t.data[i] = dist(rng);
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw std::logic_error("tensor: item() on non-scalar " + shape_string(shape));
  return data[0];
}

const Tensor& Var::value() const { return graph->value(id); }

Var Graph::constant(Tensor t) { return record(std::move(t), {}, nullptr); }

Var Graph::parameter(Parameter& p, bool trainable) {
  Node n;
  n.value = p.value;
  n.requires_grad = trainable;
  n.param = trainable ? &p : nullptr;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Graph::record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
  if (!value.data.allFinite())
    throw std::domain_error("non-finite value produced by op, shape " + shape_string(value.shape));
  Node n;
  n.value = std::move(value);
  for (const auto& p : parents) {
    if (p.graph != this) throw std::logic_error("graph: parent belongs to another graph");
    n.requires_grad = n.requires_grad || requires_grad(p.id);
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Vector* Graph::grad_slot(int id) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return nullptr;
  if (n.grad.size() == 0) n.grad = Vector::Zero(n.value.size());
  return &n.grad;
}

void Graph::backward(Var root) {
  if (root.graph != this) throw std::logic_error("graph: root belongs to another graph");
  auto& r = nodes_[static_cast<std::size_t>(root.id)];
  if (r.value.size() != 1) throw std::logic_error("graph: backward root must be a scalar");
  if (!r.requires_grad) return;
  r.grad = Vector::Ones(1);
  for (int id = root.id; id >= 0; --id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    // Callbacks only touch parents (lower ids), so n.grad is stable here.
    if (n.backward) n.backward(*this, n.grad);
    if (n.param != nullptr) {
      if (n.param->grad.size() != n.grad.size()) n.param->zero_grad();
      n.param->grad += n.grad;
    }
  }
}

namespace ops {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

void same_shape(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
}

template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor y(x.shape, x.data.unaryExpr(fwd));
  const int ia = a.id;
  const Var parents[] = {a};
  return a.graph->record(std::move(y), parents, [ia, deriv](Graph& g, const Vector& gy) {
    const Vector& x = g.value(ia).data;
    Vector dx(x.size());
    for (Index i = 0; i < x.size(); ++i) dx[i] = gy[i] * deriv(x[i]);
    g.accumulate(ia, dx);
  });
}

double sigmoid_scalar(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Var detach(Var a) { return a.graph->constant(a.value()); }

Var reshape(Var a, Shape shape) {
  require(numel(shape) == a.value().size(),
          "reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape) + " changes size");
  const int ia = a.id;
  const Var parents[] = {a};
  return a.graph->record(Tensor(std::move(shape), a.value().data), parents,
                         [ia](Graph& g, const Vector& gy) { g.accumulate(ia, gy); });
}

Var add(Var a, Var b) {
  same_shape(a, b, "add");
  const int ia = a.id, ib = b.id;
  const Var parents[] = {a, b};
  return a.graph->record(Tensor(a.shape(), a.value().data + b.value().data), parents,
                         [ia, ib](Graph& g, const Vector& gy) {
                           g.accumulate(ia, gy);
                           g.accumulate(ib, gy);
                         });
}

Var sub(Var a, Var b) {
  same_shape(a, b, "sub");
  const int ia = a.id, ib = b.id;
  const Var parents[] = {a, b};
  return a.graph->record(Tensor(a.shape(), a.value().data - b.value().data), parents,
                         [ia, ib](Graph& g, const Vector& gy) {
                           g.accumulate(ia, gy);
                           g.accumulate(ib, -gy);
                         });
}

Var mul(Var a, Var b) {
  same_shape(a, b, "mul");
  const int ia = a.id, ib = b.id;
  const Var parents[] = {a, b};
  return a.graph->record(Tensor(a.shape(), a.value().data.cwiseProduct(b.value().data)), parents,
                         [ia, ib](Graph& g, const Vector& gy) {
                           g.accumulate(ia, gy.cwiseProduct(g.value(ib).data));
                           g.accumulate(ib, gy.cwiseProduct(g.value(ia).data));
                         });
}

Var scale(Var a, double s) {
  const int ia = a.id;
  const Var parents[] = {a};
  return a.graph->record(Tensor(a.shape(), a.value().data * s), parents,
                         [ia, s](Graph& g, const Vector& gy) { g.accumulate(ia, gy * s); });
}

Var add_scalar(Var a, double s) {
  const int ia = a.id;
  const Var parents[] = {a};
  return a.graph->record(Tensor(a.shape(), a.value().data.array() + s), parents,
                         [ia](Graph& g, const Vector& gy) { g.accumulate(ia, gy); });
}

Var add_bias(Var x, Var b) {
  const Tensor& xv = x.value();
  require(b.value().size() == xv.channels(),
          "add_bias: bias " + shape_string(b.shape()) + " vs input " + shape_string(xv.shape));
  Tensor y = xv;
  y.matrix().rowwise() += b.value().data.transpose();
  const int ix = x.id, ib = b.id;
  const Index rows = xv.leading(), cols = xv.channels();
  const Var parents[] = {x, b};
  return x.graph->record(std::move(y), parents, [ix, ib, rows, cols](Graph& g, const Vector& gy) {
    g.accumulate(ix, gy);
    Eigen::Map<const RowMatrix> G(gy.data(), rows, cols);
    g.accumulate(ib, G.colwise().sum().transpose());
  });
}

Var matmul(Var x, Var w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require(wv.shape.size() == 2 && wv.shape[0] == xv.channels(),
          "matmul: " + shape_string(xv.shape) + " x " + shape_string(wv.shape));
  Shape out_shape = xv.shape;
  out_shape.back() = wv.shape[1];
  Tensor y(out_shape);
  Eigen::Map<const RowMatrix> W(wv.data.data(), wv.shape[0], wv.shape[1]);
  y.matrix().noalias() = xv.matrix() * W;
  const int ix = x.id, iw = w.id;
  const Var parents[] = {x, w};
  return x.graph->record(std::move(y), parents, [ix, iw](Graph& g, const Vector& gy) {
    const Tensor& xv = g.value(ix);
    const Tensor& wv = g.value(iw);
    const Index n = wv.shape[1];
    Eigen::Map<const RowMatrix> G(gy.data(), xv.leading(), n);
    Eigen::Map<const RowMatrix> W(wv.data.data(), wv.shape[0], n);
    if (g.requires_grad(ix)) {
      RowMatrix dx = G * W.transpose();
      g.accumulate(ix, Eigen::Map<const Vector>(dx.data(), dx.size()));
    }
    if (g.requires_grad(iw)) {
      RowMatrix dw = xv.matrix().transpose() * G;
      g.accumulate(iw, Eigen::Map<const Vector>(dw.data(), dw.size()));
    }
  });
}

Var sigmoid(Var a) {
  return unary(a, sigmoid_scalar, [](double v) {
    const double s = sigmoid_scalar(v);
    return s * (1.0 - s);
  });
}

Var tanh(Var a) {
  return unary(a, [](double v) { return std::tanh(v); },
               [](double v) {
                 const double t = std::tanh(v);
                 return 1.0 - t * t;
               });
}

Var leaky_relu(Var a, double slope) {
  return unary(a, [slope](double v) { return v >= 0.0 ? v : slope * v; },
               [slope](double v) { return v >= 0.0 ? 1.0 : slope; });
}

Var exp(Var a) {
  return unary(a, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

Var square(Var a) {
  return unary(a, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Var sum(Var a) {
  const int ia = a.id;
  const Index n = a.value().size();
  const Var parents[] = {a};
  return a.graph->record(Tensor({1}, Vector::Constant(1, a.value().data.sum())), parents,
                         [ia, n](Graph& g, const Vector& gy) { g.accumulate(ia, Vector::Constant(n, gy[0])); });
}

Var mean(Var a) {
  const Index n = a.value().size();
  require(n > 0, "mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var row_sum(Var a) {
  const Tensor& av = a.value();
  const Index rows = av.leading(), cols = av.channels();
  Tensor y({rows, 1}, av.matrix().rowwise().sum());
  const int ia = a.id;
  const Var parents[] = {a};
  return a.graph->record(std::move(y), parents, [ia, rows, cols](Graph& g, const Vector& gy) {
    RowMatrix d = gy.replicate(1, cols);
    g.accumulate(ia, Eigen::Map<const Vector>(d.data(), d.size()));
  });
}

Var row_norm(Var a) {
  const Tensor& av = a.value();
  const Index rows = av.leading(), cols = av.channels();
  Vector norms = av.matrix().rowwise().norm();
  const int ia = a.id;
  const Var parents[] = {a};
  return a.graph->record(Tensor({rows, 1}, norms), parents, [ia, rows, cols, norms](Graph& g, const Vector& gy) {
    const Tensor& av = g.value(ia);
    RowMatrix d(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      if (norms[r] > 0.0)
        d.row(r) = av.matrix().row(r) * (gy[r] / norms[r]);
      else
        d.row(r).setZero();
    }
    g.accumulate(ia, Eigen::Map<const Vector>(d.data(), d.size()));
  });
}

Var concat_channels(std::span<const Var> parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const Index rows = parts[0].value().leading();
  Shape shape = parts[0].shape();
  Index total = 0;
  for (const auto& p : parts) {
    require(p.value().leading() == rows, "concat_channels: leading size mismatch");
    total += p.value().channels();
  }
  shape.back() = total;
  Tensor y(shape);
  auto Y = y.matrix();
  std::vector<std::pair<int, Index>> spans;
  Index off = 0;
  for (const auto& p : parts) {
    const Index c = p.value().channels();
    Y.middleCols(off, c) = p.value().matrix();
    spans.emplace_back(p.id, c);
    off += c;
  }
  return parts[0].graph->record(std::move(y), parts, [spans, rows, total](Graph& g, const Vector& gy) {
    Eigen::Map<const RowMatrix> G(gy.data(), rows, total);
    Index off = 0;
    for (const auto& [id, c] : spans) {
      if (g.requires_grad(id)) {
        RowMatrix d = G.middleCols(off, c);
        g.accumulate(id, Eigen::Map<const Vector>(d.data(), d.size()));
      }
      off += c;
    }
  });
}

Var slice_channels(Var a, Index offset, Index count) {
  const Tensor& av = a.value();
  require(offset >= 0 && count >= 0 && offset + count <= av.channels(), "slice_channels: out of range");
  Shape shape = av.shape;
  shape.back() = count;
  const Index rows = av.leading(), cols = av.channels();
  RowMatrix s = av.matrix().middleCols(offset, count);
  Tensor y(shape, Eigen::Map<const Vector>(s.data(), s.size()));
  const int ia = a.id;
  const Var parents[] = {a};
  return a.graph->record(std::move(y), parents, [ia, rows, cols, offset, count](Graph& g, const Vector& gy) {
    RowMatrix d = RowMatrix::Zero(rows, cols);
    d.middleCols(offset, count) = Eigen::Map<const RowMatrix>(gy.data(), rows, count);
    g.accumulate(ia, Eigen::Map<const Vector>(d.data(), d.size()));
  });
}

Var stack(std::span<const Var> parts) {
  require(!parts.empty(), "stack: no inputs");
  const Shape inner = parts[0].shape();
  const Index block = numel(inner);
  Shape shape{static_cast<Index>(parts.size())};
  shape.insert(shape.end(), inner.begin(), inner.end());
  Tensor y(shape);
  std::vector<int> ids;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    require(parts[i].shape() == inner, "stack: shape mismatch");
    y.data.segment(static_cast<Index>(i) * block, block) = parts[i].value().data;
    ids.push_back(parts[i].id);
  }
  return parts[0].graph->record(std::move(y), parts, [ids, block](Graph& g, const Vector& gy) {
    for (std::size_t i = 0; i < ids.size(); ++i)
      g.accumulate(ids[i], gy.segment(static_cast<Index>(i) * block, block));
  });
}

Var unstack(Var a, Index i) {
  const Tensor& av = a.value();
  require(av.shape.size() >= 2 && i >= 0 && i < av.shape[0], "unstack: index out of range");
  Shape inner(av.shape.begin() + 1, av.shape.end());
  const Index block = numel(inner);
  const Index total = av.size();
  Tensor y(inner, av.data.segment(i * block, block));
  const int ia = a.id;
  const Var parents[] = {a};
  return a.graph->record(std::move(y), parents, [ia, i, block, total](Graph& g, const Vector& gy) {
    Vector d = Vector::Zero(total);
    d.segment(i * block, block) = gy;
    g.accumulate(ia, d);
  });
}

Var swap_leading(Var a) {
  const Tensor& av = a.value();
  require(av.shape.size() >= 2, "swap_leading: need at least 2 dims");
  const Index n0 = av.shape[0], n1 = av.shape[1];
  const Index block = av.size() / (n0 * n1);
  Shape shape = av.shape;
  std::swap(shape[0], shape[1]);
  Tensor y(shape);
  for (Index i = 0; i < n0; ++i)
    for (Index j = 0; j < n1; ++j)
      y.data.segment((j * n0 + i) * block, block) = av.data.segment((i * n1 + j) * block, block);
  const int ia = a.id;
  const Var parents[] = {a};
  return a.graph->record(std::move(y), parents, [ia, n0, n1, block](Graph& g, const Vector& gy) {
    Vector d(gy.size());
    for (Index i = 0; i < n0; ++i)
      for (Index j = 0; j < n1; ++j)
        d.segment((i * n1 + j) * block, block) = gy.segment((j * n0 + i) * block, block);
    g.accumulate(ia, d);
  });
}

Var tile_spatial(Var code, Index rows, Index cols) {
  const Tensor& cv = code.value();
  require(cv.shape.size() == 2, "tile_spatial: code must be (batch, width)");
  const Index batch = cv.shape[0], width = cv.shape[1], cells = rows * cols;
  Tensor y({batch, rows, cols, width});
  for (Index b = 0; b < batch; ++b)
    for (Index k = 0; k < cells; ++k) y.data.segment((b * cells + k) * width, width) = cv.data.segment(b * width, width);
  const int ic = code.id;
  const Var parents[] = {code};
  return code.graph->record(std::move(y), parents, [ic, batch, width, cells](Graph& g, const Vector& gy) {
    Vector d = Vector::Zero(batch * width);
    for (Index b = 0; b < batch; ++b)
      for (Index k = 0; k < cells; ++k) d.segment(b * width, width) += gy.segment((b * cells + k) * width, width);
    g.accumulate(ic, d);
  });
}

namespace {

// Patch matrix for a 3x3 same-padded 2D convolution over (N, H, W, C).
RowMatrix im2col2d(const Vector& x, Index N, Index H, Index W, Index C) {
  RowMatrix cols = RowMatrix::Zero(N * H * W, 9 * C);
  for (Index n = 0; n < N; ++n)
    for (Index y = 0; y < H; ++y)
      for (Index xx = 0; xx < W; ++xx) {
        double* dst = cols.row((n * H + y) * W + xx).data();
        for (Index dy = 0; dy < 3; ++dy) {
          const Index sy = y + dy - 1;
          if (sy < 0 || sy >= H) continue;
          for (Index dx = 0; dx < 3; ++dx) {
            const Index sx = xx + dx - 1;
            if (sx < 0 || sx >= W) continue;
            const double* src = x.data() + ((n * H + sy) * W + sx) * C;
            std::copy(src, src + C, dst + (dy * 3 + dx) * C);
          }
        }
      }
  return cols;
}

void col2im2d(const RowMatrix& cols, Vector& dx, Index N, Index H, Index W, Index C) {
  for (Index n = 0; n < N; ++n)
    for (Index y = 0; y < H; ++y)
      for (Index xx = 0; xx < W; ++xx) {
        const double* src = cols.row((n * H + y) * W + xx).data();
        for (Index dy = 0; dy < 3; ++dy) {
          const Index sy = y + dy - 1;
          if (sy < 0 || sy >= H) continue;
          for (Index ddx = 0; ddx < 3; ++ddx) {
            const Index sx = xx + ddx - 1;
            if (sx < 0 || sx >= W) continue;
            double* dst = dx.data() + ((n * H + sy) * W + sx) * C;
            const double* s = src + (dy * 3 + ddx) * C;
            for (Index c = 0; c < C; ++c) dst[c] += s[c];
          }
        }
      }
}

// Time-major volume (D, B, H, W, C); padding applies to D, H, W only.
RowMatrix im2col3d(const Vector& x, Index D, Index B, Index H, Index W, Index C) {
  RowMatrix cols = RowMatrix::Zero(D * B * H * W, 27 * C);
  for (Index d = 0; d < D; ++d)
    for (Index b = 0; b < B; ++b)
      for (Index y = 0; y < H; ++y)
        for (Index xx = 0; xx < W; ++xx) {
          double* dst = cols.row(((d * B + b) * H + y) * W + xx).data();
          for (Index dz = 0; dz < 3; ++dz) {
            const Index sd = d + dz - 1;
            if (sd < 0 || sd >= D) continue;
            for (Index dy = 0; dy < 3; ++dy) {
              const Index sy = y + dy - 1;
              if (sy < 0 || sy >= H) continue;
              for (Index dx = 0; dx < 3; ++dx) {
                const Index sx = xx + dx - 1;
                if (sx < 0 || sx >= W) continue;
                const double* src = x.data() + (((sd * B + b) * H + sy) * W + sx) * C;
                std::copy(src, src + C, dst + ((dz * 3 + dy) * 3 + dx) * C);
              }
            }
          }
        }
  return cols;
}

void col2im3d(const RowMatrix& cols, Vector& gx, Index D, Index B, Index H, Index W, Index C) {
  for (Index d = 0; d < D; ++d)
    for (Index b = 0; b < B; ++b)
      for (Index y = 0; y < H; ++y)
        for (Index xx = 0; xx < W; ++xx) {
          const double* src = cols.row(((d * B + b) * H + y) * W + xx).data();
          for (Index dz = 0; dz < 3; ++dz) {
            const Index sd = d + dz - 1;
            if (sd < 0 || sd >= D) continue;
            for (Index dy = 0; dy < 3; ++dy) {
              const Index sy = y + dy - 1;
              if (sy < 0 || sy >= H) continue;
              for (Index dx = 0; dx < 3; ++dx) {
                const Index sx = xx + dx - 1;
                if (sx < 0 || sx >= W) continue;
                double* dst = gx.data() + (((sd * B + b) * H + sy) * W + sx) * C;
                const double* s = src + ((dz * 3 + dy) * 3 + dx) * C;
                for (Index c = 0; c < C; ++c) dst[c] += s[c];
              }
            }
          }
        }
}

}  // namespace

Var conv2d(Var x, Var kernel) {
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  require(xv.shape.size() == 4, "conv2d: input must be (N, H, W, C), got " + shape_string(xv.shape));
  const Index N = xv.shape[0], H = xv.shape[1], W = xv.shape[2], C = xv.shape[3];
  require(kv.shape.size() == 2 && kv.shape[0] == 9 * C,
          "conv2d: kernel " + shape_string(kv.shape) + " does not match " + std::to_string(C) + " input channels");
  const Index M = kv.shape[1];
  RowMatrix cols = im2col2d(xv.data, N, H, W, C);
  Tensor y({N, H, W, M}, Vector(N * H * W * M));
  Eigen::Map<const RowMatrix> K(kv.data.data(), 9 * C, M);
  y.matrix().noalias() = cols * K;
  const int ix = x.id, ik = kernel.id;
  const Var parents[] = {x, kernel};
  return x.graph->record(std::move(y), parents,
                         [ix, ik, cols = std::move(cols), N, H, W, C, M](Graph& g, const Vector& gy) {
                           Eigen::Map<const RowMatrix> G(gy.data(), N * H * W, M);
                           if (g.requires_grad(ik)) {
                             RowMatrix dk = cols.transpose() * G;
                             g.accumulate(ik, Eigen::Map<const Vector>(dk.data(), dk.size()));
                           }
                           if (g.requires_grad(ix)) {
                             const Tensor& kv = g.value(ik);
                             Eigen::Map<const RowMatrix> K(kv.data.data(), 9 * C, M);
                             RowMatrix dcols = G * K.transpose();
                             col2im2d(dcols, *g.grad_slot(ix), N, H, W, C);
                           }
                         });
}

Var conv3d(Var x, Var kernel) {
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  require(xv.shape.size() == 5, "conv3d: input must be (D, B, H, W, C), got " + shape_string(xv.shape));
  const Index D = xv.shape[0], B = xv.shape[1], H = xv.shape[2], W = xv.shape[3], C = xv.shape[4];
  require(kv.shape.size() == 2 && kv.shape[0] == 27 * C,
          "conv3d: kernel " + shape_string(kv.shape) + " does not match " + std::to_string(C) + " input channels");
  const Index M = kv.shape[1];
  RowMatrix cols = im2col3d(xv.data, D, B, H, W, C);
  Tensor y({D, B, H, W, M}, Vector(D * B * H * W * M));
  Eigen::Map<const RowMatrix> K(kv.data.data(), 27 * C, M);
  y.matrix().noalias() = cols * K;
  const int ix = x.id, ik = kernel.id;
  const Var parents[] = {x, kernel};
  return x.graph->record(std::move(y), parents,
                         [ix, ik, cols = std::move(cols), D, B, H, W, C, M](Graph& g, const Vector& gy) {
                           Eigen::Map<const RowMatrix> G(gy.data(), D * B * H * W, M);
                           if (g.requires_grad(ik)) {
                             RowMatrix dk = cols.transpose() * G;
                             g.accumulate(ik, Eigen::Map<const Vector>(dk.data(), dk.size()));
                           }
                           if (g.requires_grad(ix)) {
                             const Tensor& kv = g.value(ik);
                             Eigen::Map<const RowMatrix> K(kv.data.data(), 27 * C, M);
                             RowMatrix dcols = G * K.transpose();
                             col2im3d(dcols, *g.grad_slot(ix), D, B, H, W, C);
                           }
                         });
}

Var lstm_gates(Var preact, Var c_prev) {
  const Tensor& av = preact.value();
  const Tensor& cv = c_prev.value();
  const Index C = cv.channels();
  const Index N = cv.leading();
  require(av.channels() == 4 * C && av.leading() == N,
          "lstm_gates: pre-activation " + shape_string(av.shape) + " vs cell " + shape_string(cv.shape));
  Shape shape = cv.shape;
  shape.back() = 2 * C;
  Tensor y(shape);
  // Gate activations kept for backward: [i, f, o, g, tanh(c)].
  RowMatrix act(N, 5 * C);
  auto A = av.matrix();
  auto Cp = cv.matrix();
  auto Y = y.matrix();
  for (Index r = 0; r < N; ++r)
    for (Index k = 0; k < C; ++k) {
      const double i = sigmoid_scalar(A(r, k));
      const double f = sigmoid_scalar(A(r, C + k));
      const double o = sigmoid_scalar(A(r, 2 * C + k));
      const double gg = std::tanh(A(r, 3 * C + k));
      const double c = f * Cp(r, k) + i * gg;
      const double tc = std::tanh(c);
      act(r, k) = i;
      act(r, C + k) = f;
      act(r, 2 * C + k) = o;
      act(r, 3 * C + k) = gg;
      act(r, 4 * C + k) = tc;
      Y(r, k) = o * tc;
      Y(r, C + k) = c;
    }
  const int ia = preact.id, ic = c_prev.id;
  const Var parents[] = {preact, c_prev};
  return preact.graph->record(std::move(y), parents,
                              [ia, ic, act = std::move(act), N, C](Graph& g, const Vector& gy) {
                                Eigen::Map<const RowMatrix> G(gy.data(), N, 2 * C);
                                const auto Cp = g.value(ic).matrix();
                                RowMatrix da(N, 4 * C);
                                RowMatrix dc_prev(N, C);
                                for (Index r = 0; r < N; ++r)
                                  for (Index k = 0; k < C; ++k) {
                                    const double i = act(r, k), f = act(r, C + k), o = act(r, 2 * C + k);
                                    const double gg = act(r, 3 * C + k), tc = act(r, 4 * C + k);
                                    const double dh = G(r, k);
                                    const double dc = G(r, C + k) + dh * o * (1.0 - tc * tc);
                                    da(r, k) = dc * gg * i * (1.0 - i);
                                    da(r, C + k) = dc * Cp(r, k) * f * (1.0 - f);
                                    da(r, 2 * C + k) = dh * tc * o * (1.0 - o);
                                    da(r, 3 * C + k) = dc * i * (1.0 - gg * gg);
                                    dc_prev(r, k) = dc * f;
                                  }
                                g.accumulate(ia, Eigen::Map<const Vector>(da.data(), da.size()));
                                g.accumulate(ic, Eigen::Map<const Vector>(dc_prev.data(), dc_prev.size()));
                              });
}

Var batch_norm(const Context& ctx, Var x, Parameter& gamma, Parameter& beta, Parameter& running_mean,
               Parameter& running_var, double momentum, double eps) {
  require(gamma.value.size() == x.value().channels() && beta.value.size() == x.value().channels(),
          "batch_norm: parameter width mismatch");
  Var vg = ctx.param(gamma);
  Var vb = ctx.param(beta);
  const Tensor& xv = x.value();
  const Index R = xv.leading(), C = xv.channels();
  auto X = xv.matrix();
  Vector mu, var;
  if (ctx.training) {
    mu = X.colwise().mean().transpose();
    var = (X.rowwise() - mu.transpose()).array().square().colwise().mean().transpose();
    if (ctx.update_stats) {
      const double unbias = R > 1 ? static_cast<double>(R) / static_cast<double>(R - 1) : 1.0;
      const double m = ctx.stats_momentum.value_or(momentum);
      running_mean.value.data = m * running_mean.value.data + (1.0 - m) * mu;
      running_var.value.data = m * running_var.value.data + (1.0 - m) * unbias * var;
    }
  } else {
    mu = running_mean.value.data;
    var = running_var.value.data;
  }
  const Vector inv_std = (var.array() + eps).rsqrt().matrix();
  RowMatrix xhat = (X.rowwise() - mu.transpose()).array().rowwise() * inv_std.transpose().array();
  Tensor y(xv.shape);
  y.matrix() = (xhat.array().rowwise() * gamma.value.data.transpose().array()).rowwise() +
               beta.value.data.transpose().array();
  const int ix = x.id, ig = vg.id, ib = vb.id;
  const bool batch_stats = ctx.training;
  const Var parents[] = {x, vg, vb};
  return ctx.graph.record(std::move(y), parents,
                          [ix, ig, ib, R, C, inv_std, batch_stats, xhat = std::move(xhat)](Graph& g,
                                                                                            const Vector& gy) {
                            Eigen::Map<const RowMatrix> G(gy.data(), R, C);
                            const Vector& gam = g.value(ig).data;
                            g.accumulate(ig, (G.array() * xhat.array()).colwise().sum().transpose().matrix());
                            g.accumulate(ib, G.colwise().sum().transpose());
                            if (!g.requires_grad(ix)) return;
                            RowMatrix dxhat = G.array().rowwise() * gam.transpose().array();
                            RowMatrix dx(R, C);
                            if (batch_stats) {
                              const Eigen::RowVectorXd s1 = dxhat.colwise().sum();
                              const Eigen::RowVectorXd s2 = (dxhat.array() * xhat.array()).colwise().sum();
                              const double inv_r = 1.0 / static_cast<double>(R);
                              dx = ((dxhat.array() - (s1 * inv_r).replicate(R, 1).array() -
                                     xhat.array() * (s2 * inv_r).replicate(R, 1).array())
                                        .rowwise() *
                                    inv_std.transpose().array())
                                       .matrix();
                            } else {
                              dx = dxhat.array().rowwise() * inv_std.transpose().array();
                            }
                            g.accumulate(ix, Eigen::Map<const Vector>(dx.data(), dx.size()));
                          });
}

Var dropout(const Context& ctx, Var x, double p) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must lie in [0, 1)");
  if (!ctx.training || !ctx.dropout_enabled || p == 0.0) return x;
  if (ctx.rng == nullptr) throw std::logic_error("dropout: training mode requires an rng");
  std::bernoulli_distribution keep(1.0 - p);
  const Index n = x.value().size();
  Vector mask(n);
  const double s = 1.0 / (1.0 - p);
  for (Index i = 0; i < n; ++i) mask[i] = keep(*ctx.rng) ? s : 0.0;
  Var m = ctx.graph.constant(Tensor(x.shape(), std::move(mask)));
  return mul(x, m);
}

}  // namespace ops

}  // namespace dgan
