#include "contraclip/grad_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <thread>

namespace contraclip {

ParamGradient ParamGradient::zeros_like(const LatentWarperd& warper) {
  ParamGradient g;
  for (Index k = 0; k < warper.num_paths(); ++k) {
    g.supports.push_back(Matrix::Zero(warper.latent_dim(), warper.supports_per_path()));
    g.log_scales.push_back(Vector::Zero(warper.supports_per_path()));
  }
  return g;
}

ParamGradient& ParamGradient::operator+=(const ParamGradient& other) {
  for (std::size_t k = 0; k < supports.size(); ++k) {
    supports[k] += other.supports[k];
    log_scales[k] += other.log_scales[k];
  }
  return *this;
}

ParamGradient& ParamGradient::operator*=(double scale) {
  for (std::size_t k = 0; k < supports.size(); ++k) {
    supports[k] *= scale;
    log_scales[k] *= scale;
  }
  return *this;
}

Vector ParamGradient::flatten() const {
  Index total = 0;
  for (std::size_t k = 0; k < supports.size(); ++k) total += supports[k].size() + log_scales[k].size();
  Vector out(total);
  Index pos = 0;
  for (std::size_t k = 0; k < supports.size(); ++k) {
    // supports are column-major d x N, i.e. support-major then coordinate
    out.segment(pos, supports[k].size()) = supports[k].reshaped();
    pos += supports[k].size();
    out.segment(pos, log_scales[k].size()) = log_scales[k];
    pos += log_scales[k].size();
  }
  return out;
}

bool ParamGradient::is_finite() const {
  for (std::size_t k = 0; k < supports.size(); ++k) {
    if (!supports[k].allFinite() || !log_scales[k].allFinite()) return false;
  }
  return true;
}

namespace {

// Forward intermediates of one batch item.
struct ItemForward {
  Vector z;
  Vector s;
  std::vector<Index> paths;     // paths that did not stall
  std::vector<Vector> grads;    // raw warp gradients, per active path
  std::vector<double> norms;
  Matrix shifted_latents;       // d x m
  Matrix shifted;               // e x m
  Matrix p;                     // m x m
  long guard_events = 0;
  long skipped = 0;
};

void check_inputs(const LatentWarperd& warper, const DipoleBankd& bank,
                  const SyntheticEncoder& encoder, const Matrix& batch,
                  const ContrastiveConfig& config, const Matrix& shift_magnitudes) {
  if (bank.size() != warper.num_paths()) {
    throw DimensionMismatch("dipole bank has " + std::to_string(bank.size()) +
                            " dipoles but the warper has " + std::to_string(warper.num_paths()) +
                            " paths");
  }
  if (encoder.input_dim() != warper.latent_dim()) {
    throw DimensionMismatch("encoder input dimension does not match the warper latent dimension");
  }
  if (encoder.output_dim() != bank.embedding_dim) {
    throw DimensionMismatch("encoder output dimension does not match the bank embedding dimension");
  }
  if (batch.cols() < 1) throw InvalidArgument("batch must be nonempty");
  if (batch.rows() != warper.latent_dim()) throw DimensionMismatch("batch latent dimension mismatch");
  if (shift_magnitudes.rows() != batch.cols() || shift_magnitudes.cols() != warper.num_paths()) {
    throw DimensionMismatch("shift magnitudes must be batch x paths");
  }
  if (!(config.temperature > 0.0)) throw InvalidArgument("temperature must be positive");
}

ItemForward forward_item(const LatentWarperd& warper, const DipoleBankd& bank,
                         const SyntheticEncoder& encoder, const Vector& z,
                         const ContrastiveConfig& config, const Eigen::Ref<const Vector>& eps,
                         const GradientOptions& options) {
  ItemForward f;
  f.z = z;
  f.s = encoder.encode(z);
  const Index k_paths = warper.num_paths();
  for (Index t = 0; t < k_paths; ++t) {
    Vector g = warp_gradient(warper, t, z);
    const double n = g.norm();
    if (!(n >= options.stall_tolerance)) {
      if (options.stall_policy == StallPolicy::Throw) {
        throw Stalled("warp gradient norm below stall tolerance on path " + std::to_string(t));
      }
      ++f.skipped;
      continue;
    }
    f.paths.push_back(t);
    f.grads.push_back(std::move(g));
    f.norms.push_back(n);
  }
  const auto m = static_cast<Index>(f.paths.size());
  f.shifted_latents.resize(z.size(), m);
  f.shifted.resize(bank.embedding_dim, m);
  for (Index c = 0; c < m; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    f.shifted_latents.col(c) = z + eps(f.paths[ci]) * (f.grads[ci] / f.norms[ci]);
    f.shifted.col(c) = encoder.encode(f.shifted_latents.col(c));
  }
  if (m > 0) {
    f.p = similarity_matrix_item(config.mode, bank, f.s, f.shifted, f.paths, &f.guard_events);
  }
  return f;
}

// Adjoint of one item; `row_weight` is 1 / (total rows in the batch).
void backward_item(const LatentWarperd& warper, const DipoleBankd& bank,
                   const SyntheticEncoder& encoder, const ContrastiveConfig& config,
                   const Eigen::Ref<const Vector>& eps, const GradientOptions& options,
                   const ItemForward& f, double row_weight, ParamGradient& out) {
  const auto m = static_cast<Index>(f.paths.size());
  if (m == 0) return;

  Matrix dp(m, m);
  for (Index r = 0; r < m; ++r) {
    Vector row_grad;
    contrastive_row_loss(f.p.row(r).transpose(), r, config.temperature, &row_grad);
    dp.row(r) = row_weight * row_grad.transpose();
  }

  const bool difference = uses_embedding_difference(config.mode);
  std::vector<Vector> supervision;
  supervision.reserve(static_cast<std::size_t>(m));
  for (Index r = 0; r < m; ++r) {
    supervision.push_back(
        supervision_direction(config.mode, bank, f.paths[static_cast<std::size_t>(r)], f.s));
  }

  for (Index c = 0; c < m; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const Vector movement = difference ? Vector(f.shifted.col(c) - f.s) : Vector(f.shifted.col(c));
    const double nm = movement.norm();
    const bool clamped = nm < kCosineGuard;
    const double nm_c = std::max(nm, kCosineGuard);

    // dL/d(movement)
    Vector d_move = Vector::Zero(movement.size());
    for (Index r = 0; r < m; ++r) {
      const Vector& v = supervision[static_cast<std::size_t>(r)];
      const double nv = std::max(v.norm(), kCosineGuard);
      const double cosine = f.p(r, c);
      Vector dcos = v / (nv * nm_c);
      if (!clamped) dcos -= (cosine / (nm * nm)) * movement;
      d_move += dp(r, c) * dcos;
    }

    const Index path = f.paths[ci];
    const Vector d_zt = encoder.vjp(f.shifted_latents.col(c), d_move);
    const Vector unit = f.grads[ci] / f.norms[ci];
    const Vector d_unit = eps(path) * d_zt;
    // normalization Jacobian (I - u u^T) / |g|
    const Vector w = (d_unit - unit * unit.dot(d_unit)) / f.norms[ci];

    const auto& q = warper.supports(path);
    auto& gq = out.supports[static_cast<std::size_t>(path)];
    auto& gl = out.log_scales[static_cast<std::size_t>(path)];
    for (Index i = 0; i < q.cols(); ++i) {
      const double gamma = warper.gamma(path, i);
      const Vector r = f.z - q.col(i);
      const Vector p = f.z + q.col(i);
      const double rr = r.squaredNorm();
      const double pp = p.squaredNorm();
      const double a = std::exp(-gamma * rr);
      const double b = std::exp(-gamma * pp);
      const double rw = r.dot(w);
      const double pw = p.dot(w);
      // d/dq of w . grad_z f for the pair of bumps at +q and -q
      gq.col(i) += (2.0 * gamma * a) * (w - (2.0 * gamma * rw) * r) +
                   (2.0 * gamma * b) * (w - (2.0 * gamma * pw) * p);
      if (options.train_scales) {
        gl(i) += gamma * (-2.0 * a * (1.0 - gamma * rr) * rw + 2.0 * b * (1.0 - gamma * pp) * pw);
      }
    }
  }
}

struct BatchForward {
  std::vector<ItemForward> items;
  double loss = 0.0;
  long rows = 0;
  long guard_events = 0;
  long skipped = 0;
};

BatchForward forward_batch(const LatentWarperd& warper, const DipoleBankd& bank,
                           const SyntheticEncoder& encoder, const Matrix& batch,
                           const ContrastiveConfig& config, const Matrix& shift_magnitudes,
                           const GradientOptions& options) {
  check_inputs(warper, bank, encoder, batch, config, shift_magnitudes);
  const Index count = batch.cols();
  BatchForward out;
  out.items.resize(static_cast<std::size_t>(count));

  auto run = [&](Index begin, Index end) {
    for (Index n = begin; n < end; ++n) {
      out.items[static_cast<std::size_t>(n)] =
          forward_item(warper, bank, encoder, batch.col(n), config,
                       shift_magnitudes.row(n).transpose(), options);
    }
  };
  const int threads = std::max(1, std::min<int>(options.threads, static_cast<int>(count)));
  if (threads == 1) {
    run(0, count);
  } else {
    std::vector<std::jthread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w) {
      const Index begin = count * w / threads;
      const Index end = count * (w + 1) / threads;
      pool.emplace_back([&, w, begin, end] {
        try {
          run(begin, end);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    pool.clear();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  SimilarityMatrixBatch p;
  for (const auto& item : out.items) {
    out.guard_events += item.guard_events;
    out.skipped += item.skipped;
    if (item.p.size() > 0) {
      p.p.push_back(item.p);
      out.rows += item.p.rows();
    }
  }
  if (out.rows == 0) throw Stalled("every (item, path) pair stalled");
  out.loss = contrastive_loss(p, config.temperature);
  return out;
}

}  // namespace

LossAndGradient loss_and_param_gradients(const LatentWarperd& warper, const DipoleBankd& bank,
                                         const SyntheticEncoder& encoder, const Matrix& batch,
                                         const ContrastiveConfig& config,
                                         const Matrix& shift_magnitudes,
                                         const GradientOptions& options) {
  BatchForward fwd = forward_batch(warper, bank, encoder, batch, config, shift_magnitudes, options);
  const double row_weight = 1.0 / static_cast<double>(fwd.rows);
  const auto count = static_cast<Index>(fwd.items.size());

  std::vector<ParamGradient> partial(fwd.items.size(), ParamGradient::zeros_like(warper));
  auto run = [&](Index begin, Index end) {
    for (Index n = begin; n < end; ++n) {
      backward_item(warper, bank, encoder, config, shift_magnitudes.row(n).transpose(), options,
                    fwd.items[static_cast<std::size_t>(n)], row_weight,
                    partial[static_cast<std::size_t>(n)]);
    }
  };
  const int threads = std::max(1, std::min<int>(options.threads, static_cast<int>(count)));
  if (threads == 1) {
    run(0, count);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] { run(count * w / threads, count * (w + 1) / threads); });
    }
  }

  LossAndGradient result;
  result.loss = fwd.loss;
  result.gradient = ParamGradient::zeros_like(warper);
  for (const auto& g : partial) result.gradient += g;  // fixed item order
  result.guard_events = fwd.guard_events;
  result.skipped_pairs = fwd.skipped;
  result.active_pairs = 0;
  for (const auto& item : fwd.items) result.active_pairs += static_cast<long>(item.paths.size());
  return result;
}

double pipeline_loss(const LatentWarperd& warper, const DipoleBankd& bank,
                     const SyntheticEncoder& encoder, const Matrix& batch,
                     const ContrastiveConfig& config, const Matrix& shift_magnitudes,
                     const GradientOptions& options) {
  return forward_batch(warper, bank, encoder, batch, config, shift_magnitudes, options).loss;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor, 1e-300});
  return std::abs(analytic - numeric) / denom;
}

FiniteDiffReport finite_diff_check(const std::function<double(const Vector&)>& loss,
                                   const Vector& analytic, const Vector& theta, double h_scale,
                                   const std::vector<bool>& mask) {
  if (!(h_scale > 0.0)) throw InvalidArgument("finite_diff_check: step must be positive");
  if (analytic.size() != theta.size()) {
    throw DimensionMismatch("finite_diff_check: gradient and parameter sizes differ");
  }
  if (!mask.empty() && static_cast<Index>(mask.size()) != theta.size()) {
    throw DimensionMismatch("finite_diff_check: mask size differs from parameter count");
  }
  double scale = 0.0;
  for (Index i = 0; i < theta.size(); ++i) {
    if (mask.empty() || mask[static_cast<std::size_t>(i)]) scale = std::max(scale, std::abs(analytic(i)));
  }
  const double floor = std::max(kRelativeErrorFloor * scale, kAbsoluteErrorFloor);

  FiniteDiffReport report;
  Vector probe = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    if (!mask.empty() && !mask[static_cast<std::size_t>(i)]) continue;
    const double h = h_scale * (1.0 + std::abs(theta(i)));
    probe(i) = theta(i) + h;
    const double up = loss(probe);
    probe(i) = theta(i) - h;
    const double down = loss(probe);
    probe(i) = theta(i);
    const double numeric = (up - down) / (2.0 * h);
    const double err = relative_error(analytic(i), numeric, floor);
    ++report.checked_parameters;
    if (err > report.max_relative_error || report.worst_parameter_index < 0) {
      report.max_relative_error = err;
      report.worst_parameter_index = i;
      report.analytic_at_worst = analytic(i);
      report.numeric_at_worst = numeric;
    }
  }
  return report;
}

FiniteDiffReport finite_diff_check(const LatentWarperd& warper, const DipoleBankd& bank,
                                   const SyntheticEncoder& encoder, const Matrix& batch,
                                   const ContrastiveConfig& config, const Matrix& shift_magnitudes,
                                   double h_scale, const GradientOptions& options) {
  if (!(h_scale > 0.0)) throw InvalidArgument("finite_diff_check: step must be positive");
  const auto analytic =
      loss_and_param_gradients(warper, bank, encoder, batch, config, shift_magnitudes, options);
  std::vector<bool> mask(static_cast<std::size_t>(warper.parameter_count()), true);
  if (!options.train_scales) {
    for (Index k = 0; k < warper.num_paths(); ++k) {
      for (Index i = 0; i < warper.supports_per_path(); ++i) {
        mask[static_cast<std::size_t>(warper.log_scale_offset(k, i))] = false;
      }
    }
  }
  LatentWarperd probe = warper;
  auto loss = [&](const Vector& theta) {
    probe.assign(theta);
    return pipeline_loss(probe, bank, encoder, batch, config, shift_magnitudes, options);
  };
  return finite_diff_check(loss, analytic.gradient.flatten(), warper.flatten(), h_scale, mask);
}

}  // namespace contraclip
