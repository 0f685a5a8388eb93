#include "contraclip/evaluation.hpp"

#include "contraclip/objective.hpp"

namespace contraclip {

Matrix direction_alignment(const LatentWarperd& warper, const SyntheticEncoder& encoder,
                           const DipoleBankd& bank, const Matrix& latents,
                           double stall_tolerance) {
  const Index k_paths = warper.num_paths();
  if (bank.size() != k_paths) throw DimensionMismatch("bank size differs from the path count");
  Matrix out = Matrix::Zero(k_paths, k_paths);
  for (Index k = 0; k < k_paths; ++k) {
    Index used = 0;
    for (Index n = 0; n < latents.cols(); ++n) {
      const Vector z = latents.col(n);
      Vector u;
      try {
        u = unit_direction(warper, k, z, stall_tolerance);
      } catch (const Stalled&) {
        continue;
      }
      const Vector moved = encoder.jvp(z, u);
      for (Index t = 0; t < k_paths; ++t) {
        out(k, t) += guarded_cosine(moved, Vector(bank[t].s_plus - bank[t].s_minus));
      }
      ++used;
    }
    if (used > 0) out.row(k) /= double(used);
  }
  return out;
}

TraversalSummary summarize_traversals(const LatentWarperd& warper, const SyntheticEncoder& encoder,
                                      const DipoleBankd& bank, const Matrix& latents,
                                      const TraversalConfig& config) {
  if (bank.size() != warper.num_paths()) {
    throw DimensionMismatch("bank size differs from the path count");
  }
  TraversalSummary s;
  for (Index k = 0; k < warper.num_paths(); ++k) {
    for (Index n = 0; n < latents.cols(); ++n) {
      const TraversalPath p = embed_path(traverse(warper, k, latents.col(n), config), encoder);
      if (p.stalled) ++s.stalled_paths;
      if (p.completed_steps() < 1) continue;
      const PathMetrics m = path_metrics(p, bank[k]);
      s.mean_alignment += m.alignment;
      s.mean_pole_gain += m.pole_gain;
      s.mean_smoothness += m.smoothness;
      ++s.paths;
    }
  }
  if (s.paths > 0) {
    s.mean_alignment /= double(s.paths);
    s.mean_pole_gain /= double(s.paths);
    s.mean_smoothness /= double(s.paths);
  }
  return s;
}

}  // namespace contraclip
