#include "quadrl/normalizer.hpp"

#include "quadrl/common.hpp"
#include "quadrl/environment.hpp"
#include "quadrl/simd.hpp"

namespace quadrl {

RunningNormalizer::RunningNormalizer(int dim, double clip)
    : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::VectorXd::Zero(dim)), clip_(clip) {
  if (dim <= 0 || !(clip > 0.0)) throw ConfigError("RunningNormalizer: bad dimension or clip");
}

Eigen::VectorXd RunningNormalizer::variance() const {
  if (count_ < 2.0) return Eigen::VectorXd::Ones(dim());
  return m2_ / count_;
}

void RunningNormalizer::update(const Eigen::VectorXd& x) {
  if (x.size() != mean_.size()) throw Error("RunningNormalizer::update: size mismatch");
  count_ += 1.0;
  const Eigen::VectorXd delta = x - mean_;
  mean_ += delta / count_;
  m2_ += delta.cwiseProduct(x - mean_);
}

void RunningNormalizer::merge(const RunningNormalizer& o) {
  if (o.count_ == 0.0) return;
  if (o.mean_.size() != mean_.size()) throw Error("RunningNormalizer::merge: size mismatch");
  if (count_ == 0.0) {
    count_ = o.count_;
    mean_ = o.mean_;
    m2_ = o.m2_;
    return;
  }
  const double n = count_ + o.count_;
  const Eigen::VectorXd delta = o.mean_ - mean_;
  mean_ += delta * (o.count_ / n);
  m2_ += o.m2_ + delta.cwiseProduct(delta) * (count_ * o.count_ / n);
  count_ = n;
}

Eigen::VectorXd RunningNormalizer::normalize(const Eigen::VectorXd& x) const {
  if (x.size() != mean_.size()) throw Error("RunningNormalizer::normalize: size mismatch");
  const Eigen::VectorXd inv_std = (variance().array() + kVarianceFloor).rsqrt().matrix();
  Eigen::VectorXd out(x.size());
  simd::kernels().normalize_clip(x.data(), mean_.data(), inv_std.data(), clip_, out.data(),
                                 static_cast<std::size_t>(x.size()));
  return out;
}

void RunningNormalizer::set_state(double count, Eigen::VectorXd mean, Eigen::VectorXd m2, double clip) {
  if (mean.size() != m2.size() || count < 0.0 || !(clip > 0.0)) throw Error("RunningNormalizer: bad state");
  count_ = count;
  mean_ = std::move(mean);
  m2_ = std::move(m2);
  clip_ = clip;
}

Eigen::VectorXd Environment::finish_observation(const Eigen::VectorXd& raw) const {
  return normalizer_ ? normalizer_->normalize(raw) : raw;
}

}  // namespace quadrl
