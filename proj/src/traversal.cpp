#include "contraclip/traversal.hpp"

#include <cmath>

#include "contraclip/objective.hpp"

namespace contraclip {

void TraversalConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw InvalidArgument("traversal epsilon must be positive");
  }
  if (steps < 1) throw InvalidArgument("traversal steps must be >= 1");
  if (sign != 1 && sign != -1) throw InvalidArgument("traversal sign must be +1 or -1");
  if (!(stall_tolerance > 0.0)) throw InvalidArgument("stall tolerance must be positive");
}

Index steps_for_length(double length, double epsilon) {
  if (!(length > 0.0) || !(epsilon > 0.0)) {
    throw InvalidArgument("traversal length and epsilon must be positive");
  }
  // tolerate representation error in quotients such as 10.8 / 0.45
  const auto steps = static_cast<Index>(std::floor(length / epsilon + 1e-9));
  if (steps < 1) throw InvalidArgument("traversal length is shorter than one step");
  return steps;
}

TraversalPath traverse(const LatentWarperd& warper, Index path, const Vector& z0,
                       const TraversalConfig& config, std::string path_id) {
  config.validate();
  detail::check_latent(warper, z0);
  TraversalPath out;
  out.path_id = std::move(path_id);
  out.path = path;
  out.sign = config.sign;
  out.epsilon = config.epsilon;
  out.latents.push_back(z0);
  out.warp_values.push_back(warp_value(warper, path, z0));
  for (Index t = 0; t < config.steps; ++t) {
    Vector step;
    try {
      step = unit_direction(warper, path, out.latents.back(), config.stall_tolerance);
    } catch (const Stalled&) {
      out.stalled = true;
      break;
    }
    out.latents.push_back(out.latents.back() + (config.sign * config.epsilon) * step);
    out.warp_values.push_back(warp_value(warper, path, out.latents.back()));
  }
  return out;
}

TraversalPath embed_path(TraversalPath path, const SyntheticEncoder& encoder) {
  path.embeddings.clear();
  path.embeddings.reserve(path.latents.size());
  for (const auto& z : path.latents) path.embeddings.push_back(encoder.encode(z));
  return path;
}

PathMetrics path_metrics(const TraversalPath& path, const SemanticDipoled& dipole) {
  if (path.latents.size() < 2) throw InvalidArgument("path_metrics: path has a single point");
  if (path.embeddings.size() != path.latents.size()) {
    throw InvalidArgument("path_metrics: path has no embeddings; call embed_path first");
  }
  PathMetrics m;
  const std::size_t steps = path.embeddings.size() - 1;
  double alignment = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    alignment += guarded_cosine(Vector(path.embeddings[t + 1] - path.embeddings[t]),
                                field_gradient(dipole, path.embeddings[t]));
  }
  m.alignment = alignment / static_cast<double>(steps);
  m.pole_gain = (path.embeddings.front() - dipole.s_plus).norm() -
                (path.embeddings.back() - dipole.s_plus).norm();
  if (steps >= 2) {
    double smooth = 0.0;
    for (std::size_t t = 0; t + 1 < steps; ++t) {
      smooth += guarded_cosine(Vector(path.latents[t + 1] - path.latents[t]),
                               Vector(path.latents[t + 2] - path.latents[t + 1]));
    }
    m.smoothness = smooth / static_cast<double>(steps - 1);
  }
  return m;
}

}  // namespace contraclip
