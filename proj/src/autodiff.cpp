#include "meshtime/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "meshtime/common.hpp"

namespace meshtime::ad {

namespace kern = kernels::omp;

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) throw ShapeError("matrix data size does not match shape");
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Matrix(value.rows(), value.cols());
  return grad;
}

Tensor Tensor::constant(Matrix m) {
  auto n = std::make_shared<Node>();
  n->value = std::move(m);
  return Tensor(std::move(n));
}

Tensor Tensor::parameter(Matrix m) {
  auto n = std::make_shared<Node>();
  n->value = std::move(m);
  n->requires_grad = true;
  return Tensor(std::move(n));
}

void Tensor::zero_grad() { node_->grad = Matrix(); }

double Tensor::item() const {
  if (node_->value.size() != 1) throw ShapeError("item() needs a 1x1 tensor");
  return node_->value.data()[0];
}

namespace {

std::string shape_str(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

Tensor make(Matrix value, std::vector<std::shared_ptr<Node>> parents, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward = std::move(bw);
  }
  return Tensor(std::move(n));
}

void add_into(Matrix& dst, const Matrix& src) {
  double* d = dst.data();
  const double* s = src.data();
  const std::size_t n = dst.size();
  for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
}

}  // namespace

void backward(const Tensor& loss) {
  require(loss.defined() && loss.value().size() == 1, "backward() needs a 1x1 loss");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer().data()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

Segments Segments::from_ids(std::span<const int> ids, std::size_t num_segments) {
  Segments s;
  s.offsets.assign(num_segments + 1, 0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < num_segments, "segment id out of range");
    require(i == 0 || ids[i] >= ids[i - 1], "segment ids must be sorted");
    ++s.offsets[ids[i] + 1];
  }
  for (std::size_t k = 0; k < num_segments; ++k) s.offsets[k + 1] += s.offsets[k];
  return s;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  require(A.cols() == B.rows(), "matmul " + shape_str(A) + " * " + shape_str(B));
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Matrix C(m, n);
  kern::gemm_nn(m, k, n, A.data(), B.data(), C.data());
  return make(std::move(C), {a.node(), b.node()}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Matrix t(m, k);
      kern::gemm_nt(m, n, k, self.grad.data(), pb.value.data(), t.data());
      add_into(pa.grad_buffer(), t);
    }
    if (pb.requires_grad) {
      Matrix t(k, n);
      kern::gemm_tn(k, m, n, pa.value.data(), self.grad.data(), t.data());
      add_into(pb.grad_buffer(), t);
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.value().same_shape(b.value()), "add " + shape_str(a.value()) + " + " + shape_str(b.value()));
  Matrix C = a.value();
  add_into(C, b.value());
  return make(std::move(C), {a.node(), b.node()}, [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) add_into(p->grad_buffer(), self.grad);
    }
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  const Matrix& A = a.value();
  require(row.rows() == 1 && row.cols() == A.cols(),
          "add_row " + shape_str(A) + " + " + shape_str(row.value()));
  Matrix C = A;
  const std::size_t n = A.cols();
  for (std::size_t i = 0; i < A.rows(); ++i) {
    for (std::size_t j = 0; j < n; ++j) C(i, j) += row.value()(0, j);
  }
  return make(std::move(C), {a.node(), row.node()}, [n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pr = *self.parents[1];
    if (pa.requires_grad) add_into(pa.grad_buffer(), self.grad);
    if (pr.requires_grad) {
      Matrix& g = pr.grad_buffer();
      for (std::size_t i = 0; i < self.grad.rows(); ++i) {
        for (std::size_t j = 0; j < n; ++j) g(0, j) += self.grad(i, j);
      }
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.value().same_shape(b.value()), "mul " + shape_str(a.value()) + " * " + shape_str(b.value()));
  Matrix C = a.value();
  for (std::size_t i = 0; i < C.size(); ++i) C.data()[i] *= b.value().data()[i];
  return make(std::move(C), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const std::size_t n = self.grad.size();
    if (pa.requires_grad) {
      double* g = pa.grad_buffer().data();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad.data()[i] * pb.value.data()[i];
    }
    if (pb.requires_grad) {
      double* g = pb.grad_buffer().data();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad.data()[i] * pa.value.data()[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  Matrix C = a.value();
  for (double& v : C.values()) v *= s;
  return make(std::move(C), {a.node()}, [s](Node& self) {
    double* g = self.parents[0]->grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += s * self.grad.data()[i];
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat of nothing");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::size_t> starts;
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat row mismatch");
    starts.push_back(cols);
    cols += p.cols();
    parents.push_back(p.node());
  }
  Matrix C(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Matrix& P = parts[k].value();
    for (std::size_t i = 0; i < rows; ++i) {
      std::copy(P.data() + i * P.cols(), P.data() + (i + 1) * P.cols(), C.data() + i * cols + starts[k]);
    }
  }
  return make(std::move(C), std::move(parents), [starts, cols](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      Matrix& g = p.grad_buffer();
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) += self.grad.data()[i * cols + starts[k] + j];
      }
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require(begin <= end && end <= a.cols(), "slice out of range");
  const std::size_t rows = a.rows(), w = end - begin;
  Matrix C(rows, w);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < w; ++j) C(i, j) = a.value()(i, begin + j);
  }
  return make(std::move(C), {a.node()}, [begin, w](Node& self) {
    Matrix& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < w; ++j) g(i, begin + j) += self.grad(i, j);
    }
  });
}

Tensor elu(const Tensor& a) {
  Matrix C = a.value();
  for (double& v : C.values()) v = v > 0.0 ? v : std::expm1(v);
  return make(std::move(C), {a.node()}, [](Node& self) {
    double* g = self.parents[0]->grad_buffer().data();
    const double* x = self.parents[0]->value.data();
    const double* y = self.value.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad.data()[i] * (x[i] > 0.0 ? 1.0 : y[i] + 1.0);
  });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  Matrix C = a.value();
  for (double& v : C.values()) v = v > 0.0 ? v : slope * v;
  return make(std::move(C), {a.node()}, [slope](Node& self) {
    double* g = self.parents[0]->grad_buffer().data();
    const double* x = self.parents[0]->value.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad.data()[i] * (x[i] > 0.0 ? 1.0 : slope);
  });
}

Tensor exp(const Tensor& a) {
  Matrix C = a.value();
  for (double& v : C.values()) v = std::exp(v);
  return make(std::move(C), {a.node()}, [](Node& self) {
    double* g = self.parents[0]->grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad.data()[i] * self.value.data()[i];
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return make(Matrix(1, 1, s), {a.node()}, [](Node& self) {
    const double g0 = self.grad.data()[0];
    for (double& g : self.parents[0]->grad_buffer().values()) g += g0;
  });
}

Tensor segment_softmax(const Tensor& a, const Segments& seg) {
  require(seg.total() == a.rows(), "segment_softmax: segments cover " + std::to_string(seg.total()) +
                                       " rows, tensor has " + std::to_string(a.rows()));
  const std::size_t cols = a.cols();
  Matrix C(a.rows(), cols);
  kern::segment_softmax(seg.offsets, cols, a.value().data(), C.data());
  return make(std::move(C), {a.node()}, [offsets = seg.offsets, cols](Node& self) {
    kern::segment_softmax_backward(offsets, cols, self.value.data(), self.grad.data(),
                                   self.parents[0]->grad_buffer().data());
  });
}

Tensor segment_sum(const Tensor& a, const Segments& seg) {
  require(seg.total() == a.rows(), "segment_sum: segments do not cover the tensor rows");
  const std::size_t cols = a.cols();
  Matrix C(seg.count(), cols);
  kern::segment_sum(seg.offsets, cols, a.value().data(), C.data());
  return make(std::move(C), {a.node()}, [offsets = seg.offsets, cols](Node& self) {
    Matrix& g = self.parents[0]->grad_buffer();
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
      for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
        for (std::size_t c = 0; c < cols; ++c) g(r, c) += self.grad(s, c);
      }
    }
  });
}

Tensor elementwise_max(std::span<const Tensor> parts) {
  require(!parts.empty(), "max of nothing");
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& p : parts) {
    require(p.value().same_shape(parts[0].value()), "elementwise_max shape mismatch");
    parents.push_back(p.node());
  }
  Matrix C = parts[0].value();
  std::vector<std::uint16_t> arg(C.size(), 0);
  for (std::size_t k = 1; k < parts.size(); ++k) {
    const double* x = parts[k].value().data();
    for (std::size_t i = 0; i < C.size(); ++i) {
      if (x[i] > C.data()[i]) {
        C.data()[i] = x[i];
        arg[i] = static_cast<std::uint16_t>(k);
      }
    }
  }
  return make(std::move(C), std::move(parents), [arg = std::move(arg)](Node& self) {
    for (std::size_t i = 0; i < arg.size(); ++i) {
      Node& p = *self.parents[arg[i]];
      if (p.requires_grad) p.grad_buffer().data()[i] += self.grad.data()[i];
    }
  });
}

Tensor mse_masked(const Tensor& pred, const Tensor& target, std::span<const std::uint8_t> mask) {
  require(pred.value().same_shape(target.value()), "mse shape mismatch");
  require(mask.size() == pred.rows(), "mse mask length mismatch");
  std::size_t count = 0;
  for (auto m : mask) count += m ? 1 : 0;
  require(count > 0, "mse mask selects no rows");
  const std::size_t cols = pred.cols();
  const double norm = 1.0 / static_cast<double>(count * cols);
  double s = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = pred.value()(i, c) - target.value()(i, c);
      s += d * d;
    }
  }
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  return make(Matrix(1, 1, s * norm), {pred.node(), target.node()}, [m = std::move(m), cols, norm](Node& self) {
    Node& p = *self.parents[0];
    Node& t = *self.parents[1];
    const double g0 = self.grad.data()[0] * 2.0 * norm;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (!m[i]) continue;
      for (std::size_t c = 0; c < cols; ++c) {
        const double d = g0 * (p.value(i, c) - t.value(i, c));
        if (p.requires_grad) p.grad_buffer()(i, c) += d;
        if (t.requires_grad) t.grad_buffer()(i, c) -= d;
      }
    }
  });
}

Tensor gather_rows(const Tensor& a, std::span<const int> rows) {
  const std::size_t cols = a.cols();
  Matrix C(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && static_cast<std::size_t>(rows[i]) < a.rows(), "gather index out of range");
    std::copy(a.value().data() + rows[i] * cols, a.value().data() + (rows[i] + 1) * cols, C.data() + i * cols);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return make(std::move(C), {a.node()}, [idx = std::move(idx), cols](Node& self) {
    Matrix& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t c = 0; c < cols; ++c) g(idx[i], c) += self.grad(i, c);
    }
  });
}

Tensor head_dot(const Tensor& x, const Tensor& att, std::size_t heads) {
  require(heads > 0 && att.rows() == heads && x.cols() == heads * att.cols(),
          "head_dot " + shape_str(x.value()) + " . " + shape_str(att.value()));
  const std::size_t n = x.rows(), dim = att.cols();
  Matrix C(n, heads);
  kern::head_dot(n, heads, dim, x.value().data(), att.value().data(), C.data());
  return make(std::move(C), {x.node(), att.node()}, [n, heads, dim](Node& self) {
    Node& px = *self.parents[0];
    Node& pa = *self.parents[1];
    const std::size_t w = heads * dim;
    if (px.requires_grad) {
      double* g = px.grad_buffer().data();
      const double* a = pa.value.data();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t h = 0; h < heads; ++h) {
          const double go = self.grad(i, h);
          for (std::size_t d = 0; d < dim; ++d) g[i * w + h * dim + d] += go * a[h * dim + d];
        }
      }
    }
    if (pa.requires_grad) {
      double* g = pa.grad_buffer().data();
      const double* xv = px.value.data();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t h = 0; h < heads; ++h) {
          const double go = self.grad(i, h);
          for (std::size_t d = 0; d < dim; ++d) g[h * dim + d] += go * xv[i * w + h * dim + d];
        }
      }
    }
  });
}

Tensor attention_aggregate(const Tensor& alpha, const Tensor& x, const kernels::EdgeIndex& ix,
                           std::size_t heads) {
  require(heads > 0 && alpha.rows() == ix.num_edges() && alpha.cols() == heads,
          "attention weights must be edges x heads");
  require(x.rows() == ix.num_nodes && x.cols() % heads == 0, "attention input rows must match nodes");
  const std::size_t dim = x.cols() / heads;
  Matrix C(ix.num_nodes, x.cols());
  kern::attention_aggregate(ix, heads, dim, alpha.value().data(), x.value().data(), C.data());
  // The index is owned by the caller and must outlive backward().
  const kernels::EdgeIndex* ixp = &ix;
  return make(std::move(C), {alpha.node(), x.node()}, [ixp, heads, dim](Node& self) {
    Node& pa = *self.parents[0];
    Node& px = *self.parents[1];
    Matrix ga(pa.value.rows(), pa.value.cols());
    Matrix gx(px.value.rows(), px.value.cols());
    kern::attention_aggregate_backward(*ixp, heads, dim, pa.value.data(), px.value.data(), self.grad.data(),
                                       ga.data(), gx.data());
    if (pa.requires_grad) add_into(pa.grad_buffer(), ga);
    if (px.requires_grad) add_into(px.grad_buffer(), gx);
  });
}

void Adam::step(std::span<Tensor> params) {
  for (const auto& p : params) {
    for (double g : p.grad().values()) {
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in optimizer step");
    }
  }
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const auto& p : params) {
      m_.emplace_back(p.rows(), p.cols());
      v_.emplace_back(p.rows(), p.cols());
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& w = params[k].value();
    const Matrix& grad = params[k].grad();
    require(m_[k].same_shape(w), "optimizer state shape mismatch");
    double* m = m_[k].data();
    double* v = v_[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = (grad.empty() ? 0.0 : grad.data()[i]) + cfg_.weight_decay * w.data()[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w.data()[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace meshtime::ad
