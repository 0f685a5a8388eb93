#include "contraclip/testbed.hpp"

#include <Eigen/QR>

#include <limits>
#include <random>
#include <string>

#include "contraclip/objective.hpp"

namespace contraclip {

Matrix sample_latents(Index latent_dim, Index count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(latent_dim, count);
  for (Index j = 0; j < count; ++j) {
    for (Index i = 0; i < latent_dim; ++i) z(i, j) = normal(rng);
  }
  return z;
}

std::pair<DipoleBankd, GroundTruth> make_ground_truth_dipoles(const SyntheticEncoder& encoder,
                                                              Index num_dipoles, std::uint64_t seed,
                                                              double separation, double beta,
                                                              std::optional<Vector> centre) {
  const Index d = encoder.input_dim();
  if (num_dipoles < 1 || num_dipoles > d) {
    throw InvalidArgument("make_ground_truth_dipoles: need 1 <= K <= latent dim (K = " +
                          std::to_string(num_dipoles) + ", d = " + std::to_string(d) + ")");
  }
  if (!(separation > 0.0)) throw InvalidArgument("make_ground_truth_dipoles: separation must be > 0");

  Matrix draw = sample_latents(d, num_dipoles, seed);
  if (encoder.is_linear() && encoder.output_dim() < d) {
    // keep directions inside the row space so the encoder is isometric on them
    const Matrix& a = encoder.linear().a;
    if (num_dipoles > a.rows()) {
      throw InvalidArgument("make_ground_truth_dipoles: K exceeds the encoder's row rank");
    }
    draw = a.transpose() * (a * draw);
  }
  Eigen::HouseholderQR<Matrix> qr(draw);
  Matrix u = qr.householderQ() * Matrix::Identity(d, num_dipoles);
  const Matrix r = qr.matrixQR().topRows(num_dipoles);
  for (Index k = 0; k < num_dipoles; ++k) {
    if (r(k, k) < 0.0) u.col(k) = -u.col(k);
  }

  GroundTruth truth;
  truth.directions = u;
  truth.separation = separation;
  truth.centre = centre.value_or(Vector::Zero(d));
  if (truth.centre.size() != d) throw DimensionMismatch("ground-truth centre dimension mismatch");

  DipoleBankd bank;
  bank.embedding_dim = encoder.output_dim();
  bank.beta = beta;
  for (Index k = 0; k < num_dipoles; ++k) {
    const Vector offset = 0.5 * separation * u.col(k);
    bank.dipoles.push_back(make_dipole<double>("d" + std::to_string(k + 1),
                                               encoder.encode(truth.centre - offset),
                                               encoder.encode(truth.centre + offset), beta));
  }
  bank.validate();
  return {std::move(bank), std::move(truth)};
}

Vector oracle_direction(const SyntheticEncoder& encoder, const SemanticDipoled& dipole) {
  if (!encoder.is_linear()) {
    throw InvalidArgument("oracle_direction needs a linear encoder; use brute_force_direction");
  }
  const Matrix& a = encoder.linear().a;
  if (a.rows() != dipole.dim()) throw DimensionMismatch("oracle_direction: dimension mismatch");
  // minimum-norm least squares: A v is the projection of s+ - s- onto A's range,
  // which maximizes the cosine. Equals A^T (s+ - s-) for semi-orthogonal A.
  const Vector t = dipole.s_plus - dipole.s_minus;
  Vector v = a.completeOrthogonalDecomposition().solve(t);
  const double n = v.norm();
  if (!(n > 0.0) || !((a * v).norm() > 1e-12 * t.norm())) throw DegenerateDipole("oracle_direction: pole difference is in A's null space");
  return v / n;
}

Vector brute_force_direction(const SyntheticEncoder& encoder, const Vector& z,
                             const SemanticDipoled& dipole, Index samples, std::uint64_t seed) {
  if (samples < 1) throw InvalidArgument("brute_force_direction: samples must be >= 1");
  const Vector s = encoder.encode(z);
  const Vector target = field_gradient(dipole, s);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Vector best;
  double best_cos = -std::numeric_limits<double>::infinity();
  Vector delta(z.size());
  for (Index n = 0; n < samples; ++n) {
    do {
      for (Index i = 0; i < delta.size(); ++i) delta(i) = normal(rng);
    } while (delta.norm() == 0.0);
    delta.normalize();
    const double c = guarded_cosine(target, encoder.encode(z + kProbeStep * delta) - s);
    if (c > best_cos) {
      best_cos = c;
      best = delta;
    }
  }
  return best;
}

}  // namespace contraclip
