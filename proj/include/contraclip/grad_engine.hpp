#ifndef CONTRACLIP_GRAD_ENGINE_HPP
#define CONTRACLIP_GRAD_ENGINE_HPP

#include <functional>
#include <vector>

#include "contraclip/dipole.hpp"
#include "contraclip/encoder.hpp"
#include "contraclip/objective.hpp"
#include "contraclip/warp.hpp"

namespace contraclip {

/// Gradient with the same layout as a LatentWarper.
struct ParamGradient {
  std::vector<Matrix> supports;
  std::vector<Vector> log_scales;

  static ParamGradient zeros_like(const LatentWarperd& warper);
  ParamGradient& operator+=(const ParamGradient& other);
  ParamGradient& operator*=(double scale);
  /// Canonical order, identical to LatentWarper::flatten.
  Vector flatten() const;
  bool is_finite() const;
};

enum class StallPolicy {
  Throw,  // propagate Stalled from unit_direction
  Skip,   // drop the (item, path) pair and count it
};

struct GradientOptions {
  bool train_scales = true;
  StallPolicy stall_policy = StallPolicy::Throw;
  double stall_tolerance = kDefaultStallTolerance;
  // Items are evaluated on this many threads; the reduction order is fixed.
  int threads = 1;
};

struct LossAndGradient {
  double loss = 0.0;
  ParamGradient gradient;
  long guard_events = 0;
  long skipped_pairs = 0;
  long active_pairs = 0;
};

/// Contrastive loss of a batch of latents (columns of `batch`) shifted along
/// every path by shift_magnitudes(n, k) in the normalized warp-gradient
/// direction, and its exact gradient with respect to every warper parameter.
///
/// The gradient includes the dependence of the shift direction on the
/// parameters (second derivatives of the warp and the normalization Jacobian).
/// Throws Stalled under StallPolicy::Throw, and also under Skip when every
/// pair stalls.
LossAndGradient loss_and_param_gradients(const LatentWarperd& warper, const DipoleBankd& bank,
                                         const SyntheticEncoder& encoder, const Matrix& batch,
                                         const ContrastiveConfig& config,
                                         const Matrix& shift_magnitudes,
                                         const GradientOptions& options = {});

/// Forward pass only; same value as loss_and_param_gradients(...).loss.
double pipeline_loss(const LatentWarperd& warper, const DipoleBankd& bank,
                     const SyntheticEncoder& encoder, const Matrix& batch,
                     const ContrastiveConfig& config, const Matrix& shift_magnitudes,
                     const GradientOptions& options = {});

struct FiniteDiffReport {
  double max_relative_error = 0.0;
  Index worst_parameter_index = -1;
  Index checked_parameters = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

inline constexpr double kDefaultFdStep = 1e-4;
// Denominator floor of the relative error, as a fraction of the largest
// analytic gradient entry.
inline constexpr double kRelativeErrorFloor = 1e-3;
// Absolute part of the floor. Central differences of an O(1) loss with h ~ 1e-4
// carry ~eps/h ~ 2e-12 of rounding noise, and exact zeros (1-D cosines, for one)
// come out as ~1e-16 on the analytic side. Comparing at 1e-5 relative needs the
// denominator about 1e5 above that noise.
inline constexpr double kAbsoluteErrorFloor = 1e-6;

/// |a - n| / max(|a|, |n|, floor), floor = max(kRelativeErrorFloor * max_j |a_j|,
/// kAbsoluteErrorFloor).
double relative_error(double analytic, double numeric, double floor);

/// Central differences with per-parameter step h_scale * (1 + |theta_i|),
/// compared against `analytic`. Parameters with mask(i) == false are skipped.
FiniteDiffReport finite_diff_check(const std::function<double(const Vector&)>& loss,
                                   const Vector& analytic, const Vector& theta, double h_scale,
                                   const std::vector<bool>& mask = {});

/// The same check for the full pipeline; log-scales are skipped when
/// options.train_scales is off.
FiniteDiffReport finite_diff_check(const LatentWarperd& warper, const DipoleBankd& bank,
                                   const SyntheticEncoder& encoder, const Matrix& batch,
                                   const ContrastiveConfig& config, const Matrix& shift_magnitudes,
                                   double h_scale = kDefaultFdStep,
                                   const GradientOptions& options = {});

}  // namespace contraclip

#endif  // CONTRACLIP_GRAD_ENGINE_HPP
