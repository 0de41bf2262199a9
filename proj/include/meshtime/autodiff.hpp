#pragma once

// Minimal reverse-mode autodiff over 2-D row-major double matrices.
//
// A Tensor is a handle to a tape node. Ops build new nodes that keep their
// parents alive and register a backward closure; backward(loss) walks the
// graph in reverse topological order. Gradients only flow into nodes that
// require them.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshtime/kernels.hpp"

namespace meshtime::ad {

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  void fill(double v);

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

struct Node {
  Matrix value;
  Matrix grad;  // allocated on demand
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Matrix& grad_buffer();  // zero-initialized on first use
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor constant(Matrix m);
  static Tensor parameter(Matrix m);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& value() { return node_->value; }
  // Empty matrix when no gradient has reached this node.
  const Matrix& grad() const { return node_->grad; }
  Matrix& grad() { return node_->grad; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad();
  double item() const;  // value of a 1x1 tensor

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Seeds d(loss)/d(loss) = 1 on a 1x1 tensor and accumulates into every
// reachable node that requires a gradient.
void backward(const Tensor& loss);

// Row segments [offsets[s], offsets[s+1]).
struct Segments {
  std::vector<std::size_t> offsets{0};

  std::size_t count() const { return offsets.size() - 1; }
  std::size_t total() const { return offsets.back(); }

  // ids must be non-decreasing and < num_segments; empty segments allowed.
  static Segments from_ids(std::span<const int> ids, std::size_t num_segments);
};

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_row(const Tensor& a, const Tensor& row);  // row is 1 x cols, broadcast over rows
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor elu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor exp(const Tensor& a);
Tensor sum(const Tensor& a);  // 1x1
Tensor segment_softmax(const Tensor& a, const Segments& seg);  // per column within each segment
Tensor segment_sum(const Tensor& a, const Segments& seg);      // count() x cols
Tensor elementwise_max(std::span<const Tensor> parts);        // ties go to the earliest part
// Mean over masked rows of the mean squared column error. 1x1.
Tensor mse_masked(const Tensor& pred, const Tensor& target, std::span<const std::uint8_t> mask);

Tensor gather_rows(const Tensor& a, std::span<const int> rows);
// [rows x heads*dim] . [heads x dim] per head -> [rows x heads]
Tensor head_dot(const Tensor& x, const Tensor& att, std::size_t heads);
// out[d] = sum over edges e into d of alpha[e, h] * x[src[e]] (per head block)
Tensor attention_aggregate(const Tensor& alpha, const Tensor& x, const kernels::EdgeIndex& ix,
                           std::size_t heads);

struct AdamConfig {
  double lr = 7.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;
};

// Adam with coupled L2: g <- g + weight_decay * p before the moment updates.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Throws NumericalError without touching any parameter if a gradient is
  // not finite. Parameters that received no gradient use a zero gradient.
  void step(std::span<Tensor> params);

  const AdamConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return t_; }
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace meshtime::ad
