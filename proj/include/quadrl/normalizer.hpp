#pragma once

#include <Eigen/Core>

namespace quadrl {

/// Running per-feature mean and variance (Welford), with the parallel merge
/// of (count, mean, M2) used at worker synchronization points.
class RunningNormalizer {
 public:
  RunningNormalizer() = default;
  explicit RunningNormalizer(int dim, double clip = 10.0);

  int dim() const { return static_cast<int>(mean_.size()); }
  double count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& m2() const { return m2_; }
  double clip() const { return clip_; }
  Eigen::VectorXd variance() const;

  void update(const Eigen::VectorXd& x);
  void merge(const RunningNormalizer& other);
  /// Standard score clipped to +-clip. Identity statistics before any update.
  Eigen::VectorXd normalize(const Eigen::VectorXd& x) const;

  /// Direct state access for checkpoint I/O.
  void set_state(double count, Eigen::VectorXd mean, Eigen::VectorXd m2, double clip);

  static constexpr double kVarianceFloor = 1e-8;

 private:
  double count_ = 0.0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
  double clip_ = 10.0;
};

}  // namespace quadrl
