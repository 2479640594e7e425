#pragma once

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <span>

#include "geoloc/error.hpp"

namespace geoloc {

template <int D>
using VecD = Eigen::Matrix<double, D, 1>;

/// log(cosh(x)) without overflow: |x| + log1p(exp(-2|x|)) - ln 2.
inline double log_cosh(double x) {
  const double a = std::abs(x);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

/// Euclidean loss ||t - t_hat||. Works for 3-D translations and the
/// (c_x, c_y, T_z) regression target alike.
template <int D>
double loss_trans(const VecD<D>& t, const VecD<D>& t_hat) {
  return (t - t_hat).norm();
}

/// d loss_trans / d t_hat; zero at t == t_hat.
template <int D>
VecD<D> loss_trans_grad(const VecD<D>& t, const VecD<D>& t_hat) {
  const VecD<D> diff = t_hat - t;
  const double n = diff.norm();
  if (n == 0.0) return VecD<D>::Zero(diff.size());
  return diff / n;
}

/// Sum over the two components of log cosh(r - r_hat).
inline double loss_rot(const Eigen::Vector2d& r, const Eigen::Vector2d& r_hat) {
  return log_cosh(r[0] - r_hat[0]) + log_cosh(r[1] - r_hat[1]);
}

/// d loss_rot / d r_hat.
inline Eigen::Vector2d loss_rot_grad(const Eigen::Vector2d& r, const Eigen::Vector2d& r_hat) {
  return {-std::tanh(r[0] - r_hat[0]), -std::tanh(r[1] - r_hat[1])};
}

inline constexpr double kDefaultPoseBeta = 0.1;

/// Regression target of the pose head: translation part (normalized
/// center x, normalized center y, scaled depth) and facing direction.
struct PoseTarget {
  Eigen::Vector3d trans = Eigen::Vector3d::Zero();
  Eigen::Vector2d rot = Eigen::Vector2d(0.0, -1.0);
};

inline double loss_pose(const PoseTarget& pose, const PoseTarget& pose_hat, double beta = kDefaultPoseBeta) {
  return loss_rot(pose.rot, pose_hat.rot) + beta * loss_trans<3>(pose.trans, pose_hat.trans);
}

/// L_joint = L_aff + lambda * mean(pose losses); an empty pose list adds nothing.
inline double loss_joint(double affinity_loss, std::span<const double> pose_losses, double lambda) {
  if (pose_losses.empty()) return affinity_loss;
  double sum = 0.0;
  for (double l : pose_losses) sum += l;
  return affinity_loss + lambda * sum / static_cast<double>(pose_losses.size());
}

}  // namespace geoloc
