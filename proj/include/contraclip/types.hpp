#ifndef CONTRACLIP_TYPES_HPP
#define CONTRACLIP_TYPES_HPP

#include <Eigen/Core>

#include <cmath>
#include <cstdint>

namespace contraclip {

using Index = Eigen::Index;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.allFinite();
}

}  // namespace contraclip

#endif  // CONTRACLIP_TYPES_HPP
