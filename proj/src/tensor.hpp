#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "util.hpp"

// Minimal dense tensor with reverse-mode automatic differentiation.
// Tensors are shared handles; operations are free functions that record a
// backward closure on an explicit Tape. The tape's creation order is a
// topological order of the graph, so backward() is one reverse sweep.
namespace segcross::ag {

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<size_t> shape, bool requires_grad = false);
  static Tensor from(std::vector<size_t> shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor randu(Rng& rng, std::vector<size_t> shape, double lo, double hi,
                      bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<size_t>& shape() const;
  size_t rank() const { return shape().size(); }
  size_t numel() const;
  // Row/column view of a rank-1 or rank-2 tensor: rank-1 counts as one row.
  size_t rows() const;
  size_t cols() const;

  // Tensors are shared handles: const-ness of the handle does not protect the
  // underlying storage, matching the usual tensor-library convention.
  std::vector<double>& data() const;
  double value() const;  // numel()==1 only

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  // Gradient storage is allocated lazily; grad() of an untouched tensor is a
  // zero vector of matching size.
  std::vector<double>& grad() const;
  bool has_grad() const;
  void zero_grad();

  // Identity of the underlying storage (stable per tensor).
  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    std::vector<size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
  Impl& impl() const;
};

class Tape {
 public:
  // Runs every recorded backward closure once, in reverse creation order,
  // after seeding d(loss)/d(loss) = 1. Loss must be a scalar on this tape.
  void backward(const Tensor& loss);

  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }
  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

// Elementwise, same shape.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double c);
Tensor relu(Tape& tape, const Tensor& a);

// Adds a length-n vector to every row of an [m x n] tensor (bias add). This is
// the only broadcast in the library.
Tensor add_row_vector(Tape& tape, const Tensor& a, const Tensor& bias);

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);

// Concatenation along columns ([m x p] ++ [m x q] -> [m x (p+q)]) and along
// rows (list of [m_i x n] -> [sum(m_i) x n]).
Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b);
Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts);

// Row gather (embedding lookup / row selection / tiling). Backward scatters
// the incoming gradient back into the selected rows.
Tensor gather_rows(Tape& tape, const Tensor& table, const std::vector<size_t>& indices);

// Row-wise softmax, numerically stabilized by max subtraction.
Tensor softmax_rows(Tape& tape, const Tensor& a);

// Row-wise layer normalization with affine gain/bias over the last axis.
Tensor layer_norm_rows(Tape& tape, const Tensor& a, const Tensor& gain,
                       const Tensor& bias, double eps);

struct MaxOverRows {
  Tensor values;                // [1 x d]
  std::vector<size_t> argmax;   // per column; first occurrence wins ties
};
// Columnwise maximum over the rows of a [k x d] tensor. Backward routes the
// gradient of each column only to its argmax row.
MaxOverRows max_over_rows(Tape& tape, const Tensor& a);

Tensor sum_all(Tape& tape, const Tensor& a);
Tensor mean_all(Tape& tape, const Tensor& a);

// Mean of -log softmax(logits)[label] over rows, with an optional weight on
// the positive class (label 1). Weighted form divides by the weight total so
// positive_weight = 1 reduces to the plain mean.
Tensor cross_entropy_mean(Tape& tape, const Tensor& logits,
                          const std::vector<int>& labels,
                          double positive_weight = 1.0);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment optimizer with bias correction. State is keyed by parameter
// position, so the same ordered parameter list must be passed every step.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(std::span<Tensor> params);
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace segcross::ag
