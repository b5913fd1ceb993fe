#include "quadrl/nn.hpp"

#include <cmath>

#include "quadrl/common.hpp"

namespace quadrl::nn {

Mlp::Mlp(std::vector<int> sizes, Activation hidden, Activation output)
    : sizes_(std::move(sizes)), hidden_(hidden), output_(output) {
  if (sizes_.size() < 2) throw ConfigError("Mlp needs at least an input and an output size");
  Eigen::Index n = 0;
  for (int l = 0; l < num_layers(); ++l) {
    if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw ConfigError("Mlp layer sizes must be positive");
    offsets_.push_back(n);
    n += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  params_ = Eigen::VectorXd::Zero(n);
}

Eigen::Map<RowMatrix> Mlp::weight(int l) {
  return {params_.data() + weight_offset(l), sizes_[l + 1], sizes_[l]};
}
Eigen::Map<const RowMatrix> Mlp::weight(int l) const {
  return {params_.data() + weight_offset(l), sizes_[l + 1], sizes_[l]};
}
Eigen::Map<Eigen::VectorXd> Mlp::bias(int l) { return {params_.data() + bias_offset(l), sizes_[l + 1]}; }
Eigen::Map<const Eigen::VectorXd> Mlp::bias(int l) const {
  return {params_.data() + bias_offset(l), sizes_[l + 1]};
}

void Mlp::initialize(std::mt19937_64& rng, double output_scale) {
  params_.setZero();
  for (int l = 0; l < num_layers(); ++l) {
    double limit = std::sqrt(6.0 / (sizes_[l] + sizes_[l + 1]));
    if (l + 1 == num_layers()) limit *= output_scale;
    std::uniform_real_distribution<double> u(-limit, limit);
    auto W = weight(l);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = u(rng);
  }
}

namespace {
void apply(Activation a, RowMatrix& z) {
  if (a == Activation::Tanh) z = z.array().tanh();
}
}  // namespace

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  RowMatrix row = x.transpose();
  return forward(row).transpose();
}

RowMatrix Mlp::forward(const RowMatrix& x, Tape* tape) const {
  if (x.cols() != input_dim()) throw Error("Mlp::forward: input width mismatch");
  if (tape) {
    tape->activations.resize(num_layers() + 1);
    tape->activations[0] = x;
  }
  RowMatrix a = x;
  for (int l = 0; l < num_layers(); ++l) {
    RowMatrix z = a * weight(l).transpose();
    z.rowwise() += bias(l).transpose();
    apply(activation(l), z);
    a = std::move(z);
    if (tape) tape->activations[l + 1] = a;
  }
  return a;
}

void Mlp::backward(const Tape& tape, const RowMatrix& dy, Eigen::Ref<Eigen::VectorXd> grad, RowMatrix* dx) const {
  const simd::Kernels& k = simd::kernels();
  RowMatrix da = dy;
  RowMatrix dz;
  for (int l = num_layers() - 1; l >= 0; --l) {
    const RowMatrix& out = tape.activations[l + 1];
    if (activation(l) == Activation::Tanh) {
      dz.resize(da.rows(), da.cols());
      k.tanh_backward(da.data(), out.data(), dz.data(), static_cast<std::size_t>(da.size()));
    } else {
      dz = da;
    }
    Eigen::Map<RowMatrix> gW(grad.data() + weight_offset(l), sizes_[l + 1], sizes_[l]);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + bias_offset(l), sizes_[l + 1]);
    gW.noalias() += dz.transpose() * tape.activations[l];
    gb += dz.colwise().sum().transpose();
    if (l > 0 || dx) da = dz * weight(l);
  }
  if (dx) *dx = std::move(da);
}

Adam::Adam(Eigen::Index n, AdamConfig cfg)
    : cfg_(cfg), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

void Adam::step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw Error("Adam::step: size mismatch");
  ++t_;
  simd::AdamCoeffs c;
  c.lr = cfg_.lr;
  c.beta1 = cfg_.beta1;
  c.beta2 = cfg_.beta2;
  c.eps = cfg_.eps;
  c.bias1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  c.bias2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  simd::kernels().adam_update(params.data(), m_.data(), v_.data(), grad.data(), static_cast<std::size_t>(m_.size()),
                              c);
}

}  // namespace quadrl::nn
