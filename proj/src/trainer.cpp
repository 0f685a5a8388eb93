#include "contraclip/trainer.hpp"

#include <chrono>
#include <numeric>
#include <random>
#include <string>

namespace contraclip {

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (iterations < 1) throw InvalidArgument("iterations must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  if (!(epsilon_min > 0.0) || !(epsilon_min <= epsilon_max)) {
    throw InvalidArgument("epsilon range must satisfy 0 < min <= max");
  }
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  if (stall_window < 1) throw InvalidArgument("stall_window must be >= 1");
  if (!(stall_threshold >= 0.0)) throw InvalidArgument("stall_threshold must be non-negative");
  if (!(stall_tolerance > 0.0)) throw InvalidArgument("stall_tolerance must be positive");
  if (threads < 1) throw InvalidArgument("threads must be >= 1");
}

AdamOptimizer::AdamOptimizer(Index size, double beta1, double beta2, double epsilon)
    : first_moment_(Vector::Zero(size)),
      second_moment_(Vector::Zero(size)),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon) {}

void AdamOptimizer::update(Vector& theta, const Vector& gradient, double learning_rate) {
  if (theta.size() != size() || gradient.size() != size()) {
    throw DimensionMismatch("AdamOptimizer: parameter/gradient size mismatch");
  }
  ++step_;
  first_moment_ = beta1_ * first_moment_ + (1.0 - beta1_) * gradient;
  second_moment_ = beta2_ * second_moment_ + (1.0 - beta2_) * gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  theta.array() -= learning_rate * (first_moment_.array() / c1) /
                   ((second_moment_.array() / c2).sqrt() + epsilon_);
}

void AdamOptimizer::restore(Vector first, Vector second, long step) {
  if (first.size() != second.size()) throw DimensionMismatch("AdamOptimizer: moment sizes differ");
  if (step < 0) throw InvalidArgument("AdamOptimizer: negative step");
  first_moment_ = std::move(first);
  second_moment_ = std::move(second);
  step_ = step;
}

TrainState TrainState::start(LatentWarperd warper) {
  TrainState state;
  state.optimizer = AdamOptimizer(warper.parameter_count());
  state.warper = std::move(warper);
  return state;
}

double train_step(TrainState& state, const DipoleBankd& bank, const SyntheticEncoder& encoder,
                  const TrainConfig& config) {
  config.validate();
  const Index k_paths = state.warper.num_paths();
  if (bank.size() != k_paths) {
    throw DimensionMismatch("dipole bank has " + std::to_string(bank.size()) +
                            " dipoles but the warper has " + std::to_string(k_paths) + " paths");
  }
  // Each iteration draws from its own stream so that resumed runs line up.
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                    static_cast<std::uint32_t>(config.seed >> 32),
                    static_cast<std::uint32_t>(state.iteration),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(state.iteration) >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(config.epsilon_min, config.epsilon_max);

  Matrix batch(state.warper.latent_dim(), config.batch_size);
  for (Index n = 0; n < batch.cols(); ++n) {
    for (Index i = 0; i < batch.rows(); ++i) batch(i, n) = normal(rng);
  }
  Matrix eps(config.batch_size, k_paths);
  for (Index n = 0; n < eps.rows(); ++n) {
    for (Index k = 0; k < k_paths; ++k) {
      eps(n, k) = config.epsilon_min == config.epsilon_max ? config.epsilon_min : uniform(rng);
    }
  }

  GradientOptions options;
  options.train_scales = config.train_scales;
  options.stall_policy = StallPolicy::Skip;
  options.stall_tolerance = config.stall_tolerance;
  options.threads = config.threads;
  const ContrastiveConfig objective{config.temperature, config.mode};
  const LossAndGradient result =
      loss_and_param_gradients(state.warper, bank, encoder, batch, objective, eps, options);
  if (!std::isfinite(result.loss) || !result.gradient.is_finite()) {
    throw NonFinite("train_step: non-finite loss or gradient at iteration " +
                    std::to_string(state.iteration));
  }

  Vector theta = state.warper.flatten();
  state.optimizer.update(theta, result.gradient.flatten(), config.learning_rate);
  state.warper.assign(theta);

  state.loss_history.push_back(result.loss);
  state.guard_events += result.guard_events;
  state.skipped_pairs += result.skipped_pairs;
  ++state.iteration;
  return result.loss;
}

bool detect_stall(const std::vector<double>& history, Index window, double threshold) {
  const auto w = static_cast<std::size_t>(window);
  if (window < 1 || history.size() < 2 * w || history.size() % w != 0) return false;
  const auto last_begin = history.end() - window;
  const double previous = std::accumulate(last_begin - window, last_begin, 0.0) / double(w);
  const double last = std::accumulate(last_begin, history.end(), 0.0) / double(w);
  if (!(previous > 0.0)) return true;  // nothing left to improve
  return (previous - last) / previous < threshold;
}

TrainReport fit(TrainState& state, const DipoleBankd& bank, const SyntheticEncoder& encoder,
                const TrainConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  TrainReport report;
  while (state.iteration < config.iterations) {
    train_step(state, bank, encoder, config);
    ++report.iterations_run;
    // a plateau reached on the last iteration is convergence, nothing is cut short
    if (state.iteration < config.iterations &&
        detect_stall(state.loss_history, config.stall_window, config.stall_threshold)) {
      report.stalled = true;
      break;
    }
  }
  report.final_loss = state.loss_history.empty() ? 0.0 : state.loss_history.back();
  report.guard_events = state.guard_events;
  report.skipped_pairs = state.skipped_pairs;
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace contraclip
