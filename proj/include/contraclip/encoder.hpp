#ifndef CONTRACLIP_ENCODER_HPP
#define CONTRACLIP_ENCODER_HPP

#include <cstdint>
#include <variant>

#include "contraclip/types.hpp"

namespace contraclip {

/// s = A z. With `orthonormal` set, A is semi-orthogonal: orthonormal rows
/// when e <= d, orthonormal columns (an isometric embedding) when e > d.
struct LinearMap {
  Matrix a;
  bool orthonormal = false;
};

/// s = W2 tanh(W1 z + b1).
struct MlpMap {
  Matrix w1;
  Vector b1;
  Matrix w2;
};

/// Differentiable latent -> embedding map with fixed weights.
class SyntheticEncoder {
 public:
  SyntheticEncoder() = default;
  SyntheticEncoder(LinearMap map, std::uint64_t seed);
  SyntheticEncoder(MlpMap map, std::uint64_t seed);

  Index input_dim() const;
  Index output_dim() const;
  bool is_linear() const { return std::holds_alternative<LinearMap>(map_); }
  const LinearMap& linear() const;
  const MlpMap& mlp() const;
  std::uint64_t seed() const { return seed_; }

  Vector encode(const Vector& z) const;
  /// Encodes every column.
  Matrix encode_columns(const Matrix& z) const;
  /// J(z)^T w, the vector-Jacobian product at z.
  Vector vjp(const Vector& z, const Vector& w) const;
  /// J(z) v, the Jacobian-vector product at z.
  Vector jvp(const Vector& z, const Vector& v) const;

  friend bool operator==(const SyntheticEncoder& a, const SyntheticEncoder& b);

 private:
  void check_input(const Vector& z) const;

  std::variant<LinearMap, MlpMap> map_;
  std::uint64_t seed_ = 0;
};

/// Gaussian A, optionally orthonormalized (rows when e <= d, columns otherwise).
SyntheticEncoder make_linear_encoder(Index latent_dim, Index embedding_dim, std::uint64_t seed,
                                     bool orthonormal);

/// One hidden tanh layer, b1 = 0 so that encode(0) = 0.
SyntheticEncoder make_mlp_encoder(Index latent_dim, Index hidden_dim, Index embedding_dim,
                                  std::uint64_t seed);

}  // namespace contraclip

#endif  // CONTRACLIP_ENCODER_HPP
