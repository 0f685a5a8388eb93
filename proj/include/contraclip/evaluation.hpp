#ifndef CONTRACLIP_EVALUATION_HPP
#define CONTRACLIP_EVALUATION_HPP

#include "contraclip/traversal.hpp"

namespace contraclip {

/// Entry (k, t): mean over the latent columns of cos(J(z) u_k(z), s+_t - s-_t),
/// where u_k is the unit direction of path k and J the encoder Jacobian.
/// Latents where a path stalls are left out of that path's mean.
Matrix direction_alignment(const LatentWarperd& warper, const SyntheticEncoder& encoder,
                           const DipoleBankd& bank, const Matrix& latents,
                           double stall_tolerance = kDefaultStallTolerance);

struct TraversalSummary {
  double mean_alignment = 0.0;
  double mean_pole_gain = 0.0;
  double mean_smoothness = 0.0;
  Index paths = 0;          // paths with at least one step
  Index stalled_paths = 0;  // paths that stopped early
};

/// Traverses every path from every latent column with `config` and averages
/// path_metrics against the path's own dipole.
TraversalSummary summarize_traversals(const LatentWarperd& warper, const SyntheticEncoder& encoder,
                                      const DipoleBankd& bank, const Matrix& latents,
                                      const TraversalConfig& config);

}  // namespace contraclip

#endif  // CONTRACLIP_EVALUATION_HPP
