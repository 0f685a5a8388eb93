#ifndef CONTRACLIP_TRAVERSAL_HPP
#define CONTRACLIP_TRAVERSAL_HPP

#include <string>
#include <vector>

#include "contraclip/dipole.hpp"
#include "contraclip/encoder.hpp"
#include "contraclip/warp.hpp"

namespace contraclip {

struct TraversalConfig {
  double epsilon = 0.45;
  Index steps = 24;
  int sign = +1;
  double stall_tolerance = kDefaultStallTolerance;

  double length() const { return static_cast<double>(steps) * epsilon; }
  void validate() const;
};

/// Whole steps of size epsilon that fit in `length`; a trailing partial step
/// is dropped (19.2 at 0.45 gives 42 steps, not 43).
Index steps_for_length(double length, double epsilon);

struct TraversalPath {
  std::string path_id;
  Index path = 0;
  int sign = +1;
  double epsilon = 0.0;
  std::vector<Vector> latents;     // z_0 .. z_T
  std::vector<Vector> embeddings;  // empty until embed_path
  std::vector<double> warp_values; // f(z_t) per latent
  bool stalled = false;

  Index completed_steps() const { return static_cast<Index>(latents.size()) - 1; }
  double length() const { return static_cast<double>(completed_steps()) * epsilon; }
};

/// z_{t+1} = z_t + sign * epsilon * unit_direction(z_t). A stall ends the
/// path early with `stalled` set; it is not an error.
TraversalPath traverse(const LatentWarperd& warper, Index path, const Vector& z0,
                       const TraversalConfig& config, std::string path_id = {});

TraversalPath embed_path(TraversalPath path, const SyntheticEncoder& encoder);

struct PathMetrics {
  // mean_t cos(s_{t+1} - s_t, grad f(s_t))
  double alignment = 0.0;
  // |s_0 - s+| - |s_T - s+|
  double pole_gain = 0.0;
  // mean cosine between consecutive latent steps; 1 when there is a single step
  double smoothness = 1.0;
};

PathMetrics path_metrics(const TraversalPath& path, const SemanticDipoled& dipole);

}  // namespace contraclip

#endif  // CONTRACLIP_TRAVERSAL_HPP
