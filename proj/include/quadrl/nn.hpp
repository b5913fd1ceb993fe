#pragma once

#include <random>
#include <vector>

#include <Eigen/Core>

#include "quadrl/simd.hpp"

namespace quadrl::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { Tanh, Identity };

/// Fully connected network with all parameters in one flat vector. Per layer
/// the layout is W (out x in, row-major) followed by b (out), which is also the
/// checkpoint layout and the gradient layout.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> sizes, Activation hidden, Activation output);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  Activation hidden_activation() const { return hidden_; }
  Activation output_activation() const { return output_; }

  Eigen::Index num_params() const { return params_.size(); }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  Eigen::Map<RowMatrix> weight(int layer);
  Eigen::Map<const RowMatrix> weight(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

  /// Xavier-uniform weights, zero biases; the last layer is scaled by
  /// `output_scale` so fresh policies start near the centre of their range.
  void initialize(std::mt19937_64& rng, double output_scale = 1.0);

  /// Post-activation values per layer; entry 0 is the input batch.
  struct Tape {
    std::vector<RowMatrix> activations;
  };

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  /// Batch forward; one sample per row.
  RowMatrix forward(const RowMatrix& x, Tape* tape = nullptr) const;

  /// Backpropagates dL/dY (one row per sample) through a recorded tape,
  /// adding dL/dparams into `grad`. Writes dL/dX when `dx` is non-null.
  void backward(const Tape& tape, const RowMatrix& dy, Eigen::Ref<Eigen::VectorXd> grad,
                RowMatrix* dx = nullptr) const;

 private:
  Eigen::Index weight_offset(int layer) const { return offsets_[layer]; }
  Eigen::Index bias_offset(int layer) const { return offsets_[layer] + sizes_[layer + 1] * sizes_[layer]; }
  Activation activation(int layer) const { return layer + 1 == num_layers() ? output_ : hidden_; }

  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
  Activation hidden_ = Activation::Tanh;
  Activation output_ = Activation::Identity;
  Eigen::VectorXd params_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index n, AdamConfig cfg);

  /// One descent step on `params` with gradient `grad`.
  void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad);
  long steps() const { return t_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }

 private:
  AdamConfig cfg_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long t_ = 0;
};

}  // namespace quadrl::nn
