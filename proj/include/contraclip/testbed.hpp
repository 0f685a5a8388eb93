#ifndef CONTRACLIP_TESTBED_HPP
#define CONTRACLIP_TESTBED_HPP

#include <cstdint>
#include <optional>
#include <utility>

#include "contraclip/dipole.hpp"
#include "contraclip/encoder.hpp"

namespace contraclip {

/// Known semantics behind a synthetic bank: dipole k was built by encoding
/// centre -/+ (separation / 2) * directions.col(k).
struct GroundTruth {
  Matrix directions;  // d x K, orthonormal columns
  double separation = 4.0;
  Vector centre;
};

std::pair<DipoleBankd, GroundTruth> make_ground_truth_dipoles(
    const SyntheticEncoder& encoder, Index num_dipoles, std::uint64_t seed, double separation,
    double beta, std::optional<Vector> centre = std::nullopt);

/// Unit latent direction maximizing cos(s+ - s-, A delta), i.e. pinv(A) (s+ - s-)
/// normalized; linear encoders only.
Vector oracle_direction(const SyntheticEncoder& encoder, const SemanticDipoled& dipole);

inline constexpr double kProbeStep = 1e-3;

/// Best of `samples` pseudo-random unit directions d by
/// cos(grad f(encode(z)), encode(z + kProbeStep d) - encode(z)).
Vector brute_force_direction(const SyntheticEncoder& encoder, const Vector& z,
                             const SemanticDipoled& dipole, Index samples, std::uint64_t seed = 0);

/// Deterministic standard-normal latents, one per column.
Matrix sample_latents(Index latent_dim, Index count, std::uint64_t seed);

}  // namespace contraclip

#endif  // CONTRACLIP_TESTBED_HPP
