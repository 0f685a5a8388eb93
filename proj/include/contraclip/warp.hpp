#ifndef CONTRACLIP_WARP_HPP
#define CONTRACLIP_WARP_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "contraclip/errors.hpp"
#include "contraclip/types.hpp"

namespace contraclip {

/// K trainable warping functions over a d-dimensional latent space.
///
/// Path k is the odd scalar field
///   f_k(z) = sum_i exp(-g_i |z - q_i|^2) - exp(-g_i |z + q_i|^2)
/// with supports q_i (columns of supports(k)) and scales g_i = exp(log_scales(k)(i)).
/// Every path carries the same number of supports.
///
/// Flat parameter order is path-major; within a path the N supports come
/// first (support-major, then coordinate), followed by the N log-scales.
template <typename Scalar>
class LatentWarper {
 public:
  using VectorType = VectorX<Scalar>;
  using MatrixType = MatrixX<Scalar>;

  LatentWarper() = default;

  LatentWarper(Index latent_dim, Index num_paths, Index supports_per_path)
      : latent_dim_(latent_dim), supports_per_path_(supports_per_path) {
    if (latent_dim < 1 || num_paths < 1 || supports_per_path < 1) {
      throw InvalidArgument("LatentWarper: sizes must be positive");
    }
    supports_.assign(static_cast<std::size_t>(num_paths),
                     MatrixType::Zero(latent_dim, supports_per_path));
    log_scales_.assign(static_cast<std::size_t>(num_paths),
                       VectorType::Zero(supports_per_path));
  }

  Index latent_dim() const { return latent_dim_; }
  Index num_paths() const { return static_cast<Index>(supports_.size()); }
  Index supports_per_path() const { return supports_per_path_; }

  /// d x N, column i is support q_i of the path.
  const MatrixType& supports(Index path) const { return supports_[checked(path)]; }
  MatrixType& supports(Index path) { return supports_[checked(path)]; }

  const VectorType& log_scales(Index path) const { return log_scales_[checked(path)]; }
  VectorType& log_scales(Index path) { return log_scales_[checked(path)]; }

  Scalar gamma(Index path, Index support) const {
    return std::exp(log_scales(path)(support));
  }

  Index params_per_path() const { return supports_per_path_ * (latent_dim_ + 1); }
  Index parameter_count() const { return num_paths() * params_per_path(); }

  Index support_offset(Index path, Index support) const {
    return path * params_per_path() + support * latent_dim_;
  }
  Index log_scale_offset(Index path, Index support) const {
    return path * params_per_path() + supports_per_path_ * latent_dim_ + support;
  }

  VectorType flatten() const {
    VectorType out(parameter_count());
    for (Index k = 0; k < num_paths(); ++k) {
      for (Index i = 0; i < supports_per_path_; ++i) {
        out.segment(support_offset(k, i), latent_dim_) = supports(k).col(i);
        out(log_scale_offset(k, i)) = log_scales(k)(i);
      }
    }
    return out;
  }

  template <typename Derived>
  void assign(const Eigen::MatrixBase<Derived>& flat) {
    if (flat.size() != parameter_count()) {
      throw DimensionMismatch("LatentWarper::assign: expected " +
                              std::to_string(parameter_count()) + " parameters, got " +
                              std::to_string(flat.size()));
    }
    for (Index k = 0; k < num_paths(); ++k) {
      for (Index i = 0; i < supports_per_path_; ++i) {
        supports(k).col(i) = flat.segment(support_offset(k, i), latent_dim_);
        log_scales(k)(i) = flat(log_scale_offset(k, i));
      }
    }
  }

  bool is_finite() const {
    for (Index k = 0; k < num_paths(); ++k) {
      if (!supports(k).allFinite() || !log_scales(k).allFinite()) return false;
    }
    return true;
  }

  friend bool operator==(const LatentWarper& a, const LatentWarper& b) {
    return a.latent_dim_ == b.latent_dim_ && a.supports_per_path_ == b.supports_per_path_ &&
           a.supports_ == b.supports_ && a.log_scales_ == b.log_scales_;
  }

 private:
  std::size_t checked(Index path) const {
    if (path < 0 || path >= num_paths()) {
      throw InvalidArgument("LatentWarper: path index " + std::to_string(path) +
                            " out of range");
    }
    return static_cast<std::size_t>(path);
  }

  Index latent_dim_ = 0;
  Index supports_per_path_ = 0;
  std::vector<MatrixType> supports_;
  std::vector<VectorType> log_scales_;
};

using LatentWarperd = LatentWarper<double>;

namespace detail {

template <typename Scalar, typename Derived>
void check_latent(const LatentWarper<Scalar>& warper, const Eigen::MatrixBase<Derived>& z) {
  if (z.size() != warper.latent_dim()) {
    throw DimensionMismatch("latent vector has dimension " + std::to_string(z.size()) +
                            ", warper expects " + std::to_string(warper.latent_dim()));
  }
  if (!z.allFinite()) throw NonFinite("latent vector has non-finite entries");
}

}  // namespace detail

template <typename Scalar, typename Derived>
Scalar warp_value(const LatentWarper<Scalar>& warper, Index path,
                  const Eigen::MatrixBase<Derived>& z) {
  detail::check_latent(warper, z);
  const auto& q = warper.supports(path);
  Scalar value(0);
  for (Index i = 0; i < q.cols(); ++i) {
    const Scalar g = warper.gamma(path, i);
    value += std::exp(-g * (z - q.col(i)).squaredNorm()) -
             std::exp(-g * (z + q.col(i)).squaredNorm());
  }
  return value;
}

/// Spatial gradient of warp_value with respect to z.
template <typename Scalar, typename Derived>
VectorX<Scalar> warp_gradient(const LatentWarper<Scalar>& warper, Index path,
                              const Eigen::MatrixBase<Derived>& z) {
  detail::check_latent(warper, z);
  const auto& q = warper.supports(path);
  VectorX<Scalar> grad = VectorX<Scalar>::Zero(z.size());
  for (Index i = 0; i < q.cols(); ++i) {
    const Scalar g = warper.gamma(path, i);
    const VectorX<Scalar> minus = z - q.col(i);
    const VectorX<Scalar> plus = z + q.col(i);
    const Scalar a = std::exp(-g * minus.squaredNorm());
    const Scalar b = std::exp(-g * plus.squaredNorm());
    grad.noalias() -= (Scalar(2) * g) * (a * minus - b * plus);
  }
  return grad;
}

inline constexpr double kDefaultStallTolerance = 1e-8;

/// Normalized warp gradient. Throws Stalled when its norm is below stall_tolerance.
template <typename Scalar, typename Derived>
VectorX<Scalar> unit_direction(const LatentWarper<Scalar>& warper, Index path,
                               const Eigen::MatrixBase<Derived>& z,
                               Scalar stall_tolerance = Scalar(kDefaultStallTolerance)) {
  if (!(stall_tolerance > Scalar(0))) {
    throw InvalidArgument("unit_direction: stall_tolerance must be positive");
  }
  VectorX<Scalar> grad = warp_gradient(warper, path, z);
  const Scalar norm = grad.norm();
  if (!(norm >= stall_tolerance)) {
    throw Stalled("warp gradient norm " + std::to_string(static_cast<double>(norm)) +
                  " below stall tolerance on path " + std::to_string(path));
  }
  return grad / norm;
}

/// Scale at which two supports 2*radius apart still overlap by one half.
inline double default_initial_gamma(double support_radius) {
  return std::numbers::ln2 / (4.0 * support_radius * support_radius);
}

/// Supports uniform on the sphere of the given radius, log-scales at ln(initial_gamma).
template <typename Scalar = double>
LatentWarper<Scalar> init_warper(Index latent_dim, Index num_paths, Index supports_per_path,
                                 std::uint64_t seed, Scalar support_radius = Scalar(1),
                                 Scalar initial_gamma = Scalar(default_initial_gamma(1.0))) {
  if (!(support_radius > Scalar(0)) || !(initial_gamma > Scalar(0))) {
    throw InvalidArgument("init_warper: support_radius and initial_gamma must be positive");
  }
  LatentWarper<Scalar> warper(latent_dim, num_paths, supports_per_path);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Scalar log_gamma = std::log(initial_gamma);
  for (Index k = 0; k < num_paths; ++k) {
    for (Index i = 0; i < supports_per_path; ++i) {
      VectorX<Scalar> v(latent_dim);
      do {
        for (Index j = 0; j < latent_dim; ++j) v(j) = Scalar(normal(rng));
      } while (v.norm() == Scalar(0));
      warper.supports(k).col(i) = support_radius * v / v.norm();
    }
    warper.log_scales(k).setConstant(log_gamma);
  }
  return warper;
}

}  // namespace contraclip

#endif  // CONTRACLIP_WARP_HPP
