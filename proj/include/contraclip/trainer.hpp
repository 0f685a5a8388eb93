#ifndef CONTRACLIP_TRAINER_HPP
#define CONTRACLIP_TRAINER_HPP

#include <cstdint>
#include <vector>

#include "contraclip/grad_engine.hpp"

namespace contraclip {

struct TrainConfig {
  Index batch_size = 16;
  Index iterations = 2000;
  double learning_rate = 1e-3;
  double epsilon_min = 0.1;
  double epsilon_max = 0.75;
  double temperature = 0.5;
  SimilarityMode mode = DipoleFieldMode{};
  std::uint64_t seed = 0;
  bool train_scales = true;
  Index stall_window = 200;
  double stall_threshold = 0.01;
  double stall_tolerance = kDefaultStallTolerance;
  int threads = 1;

  void validate() const;
};

/// Adaptive moment estimation with bias correction.
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  explicit AdamOptimizer(Index size, double beta1 = 0.9, double beta2 = 0.999,
                         double epsilon = 1e-8);

  void update(Vector& theta, const Vector& gradient, double learning_rate);

  Index size() const { return first_moment_.size(); }
  long step() const { return step_; }
  const Vector& first_moment() const { return first_moment_; }
  const Vector& second_moment() const { return second_moment_; }
  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }
  double epsilon() const { return epsilon_; }

  /// Restores a saved optimizer; sizes must agree.
  void restore(Vector first, Vector second, long step);

 private:
  Vector first_moment_;
  Vector second_moment_;
  long step_ = 0;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double epsilon_ = 1e-8;
};

struct TrainState {
  LatentWarperd warper;
  AdamOptimizer optimizer;
  Index iteration = 0;
  std::vector<double> loss_history;
  long guard_events = 0;
  long skipped_pairs = 0;

  static TrainState start(LatentWarperd warper);
};

/// One optimizer update on a freshly sampled batch. Returns the batch loss.
double train_step(TrainState& state, const DipoleBankd& bank, const SyntheticEncoder& encoder,
                  const TrainConfig& config);

struct TrainReport {
  double final_loss = 0.0;
  Index iterations_run = 0;
  bool stalled = false;
  long guard_events = 0;
  long skipped_pairs = 0;
  double wall_time_seconds = 0.0;
};

/// Plateau test, evaluated at window boundaries: true when the mean loss of
/// the latest `window` iterations improved on the mean of the window before it
/// by less than `threshold` (relative).
bool detect_stall(const std::vector<double>& history, Index window, double threshold);

/// Runs train_step until config.iterations total iterations, or until
/// detect_stall fires with iterations still remaining. Resumes from
/// state.iteration.
TrainReport fit(TrainState& state, const DipoleBankd& bank, const SyntheticEncoder& encoder,
                const TrainConfig& config);

}  // namespace contraclip

#endif  // CONTRACLIP_TRAINER_HPP
