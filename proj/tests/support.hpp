// Generators and independent reference computations shared by the tests.
// The references use plain loops over std::vector so that they share no code
// path with the library.
#ifndef CONTRACLIP_TESTS_SUPPORT_HPP
#define CONTRACLIP_TESTS_SUPPORT_HPP

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "contraclip/dipole.hpp"
#include "contraclip/encoder.hpp"
#include "contraclip/grad_engine.hpp"
#include "contraclip/objective.hpp"
#include "contraclip/warp.hpp"

namespace support {

using contraclip::Index;
using contraclip::Matrix;
using contraclip::Vector;

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  Index integer(Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(rng); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng); }
  Vector gaussian(Index n, double scale = 1.0) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = scale * normal();
    return v;
  }
  Vector unit(Index n) {
    Vector v = gaussian(n);
    return v / v.norm();
  }
  contraclip::LatentWarperd warper(Index d, Index k, Index n, double radius = 1.0) {
    contraclip::LatentWarperd w(d, k, n);
    for (Index p = 0; p < k; ++p) {
      for (Index i = 0; i < n; ++i) {
        w.supports(p).col(i) = gaussian(d, radius);
        w.log_scales(p)(i) = uniform(-1.5, 0.5);
      }
    }
    return w;
  }
  contraclip::SemanticDipoled dipole(Index e, double beta) {
    const Vector a = gaussian(e);
    // pole separation at unit scale, comparable to the finite-difference step rule
    const Vector b = a + uniform(0.5, 3.0) * unit(e);
    return contraclip::make_dipole<double>("x", a, b, beta);
  }
};

inline std::vector<double> as_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline double sqdist(const std::vector<double>& a, const std::vector<double>& b, double sign = -1.0) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] + sign * b[i];
    s += t * t;
  }
  return s;
}

// sum_i exp(-g_i |z - q_i|^2) - exp(-g_i |z + q_i|^2)
inline double reference_warp(const contraclip::LatentWarperd& w, Index k, const Vector& z) {
  const auto zz = as_std(z);
  double f = 0.0;
  for (Index i = 0; i < w.supports_per_path(); ++i) {
    const auto q = as_std(w.supports(k).col(i));
    const double g = std::exp(w.log_scales(k)(i));
    f += std::exp(-g * sqdist(zz, q, -1.0)) - std::exp(-g * sqdist(zz, q, +1.0));
  }
  return f;
}

inline double reference_field(const contraclip::SemanticDipoled& d, const Vector& s) {
  const auto ss = as_std(s);
  return std::exp(-d.gamma * sqdist(ss, as_std(d.s_plus))) -
         std::exp(-d.gamma * sqdist(ss, as_std(d.s_minus)));
}

// Central differences of a scalar function of a vector.
inline Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                               double h_scale = 1e-4) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double h = h_scale * (1.0 + std::abs(x(i)));
    Vector a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

inline double rel_err(const Vector& a, const Vector& n) {
  return (a - n).norm() / std::max({a.norm(), n.norm(), 1e-300});
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / (std::max(std::sqrt(aa), 1e-12) * std::max(std::sqrt(bb), 1e-12));
}

// -log softmax(row / tau)[pos] by the textbook formula (no shifting).
inline double reference_row_loss(const std::vector<double>& row, std::size_t pos, double tau) {
  double denom = 0.0;
  for (double p : row) denom += std::exp(p / tau);
  return -std::log(std::exp(row[pos] / tau) / denom);
}

// Whole forward pass written out directly: spatial gradient by its closed
// form, normalized shift, encoding, cosine matrix, contrastive loss.
inline double reference_pipeline_loss(const contraclip::LatentWarperd& w,
                                      const contraclip::DipoleBankd& bank,
                                      const contraclip::SyntheticEncoder& enc, const Matrix& batch,
                                      const Matrix& eps, double tau, bool embedding_difference,
                                      bool field_supervision, bool plus_target = true) {
  const Index k_paths = w.num_paths();
  double total = 0.0;
  for (Index n = 0; n < batch.cols(); ++n) {
    const auto z = as_std(batch.col(n));
    const Vector s = enc.encode(batch.col(n));
    std::vector<std::vector<double>> moved(static_cast<std::size_t>(k_paths));
    for (Index t = 0; t < k_paths; ++t) {
      std::vector<double> g(z.size(), 0.0);
      for (Index i = 0; i < w.supports_per_path(); ++i) {
        const auto q = as_std(w.supports(t).col(i));
        const double gam = std::exp(w.log_scales(t)(i));
        const double a = std::exp(-gam * sqdist(z, q, -1.0));
        const double b = std::exp(-gam * sqdist(z, q, +1.0));
        for (std::size_t j = 0; j < z.size(); ++j) {
          g[j] += -2 * gam * (a * (z[j] - q[j]) - b * (z[j] + q[j]));
        }
      }
      double norm = 0.0;
      for (double x : g) norm += x * x;
      norm = std::sqrt(norm);
      Vector shifted(static_cast<Index>(z.size()));
      for (std::size_t j = 0; j < z.size(); ++j) {
        shifted(static_cast<Index>(j)) = z[j] + eps(n, t) * g[j] / norm;
      }
      const Vector st = enc.encode(shifted);
      moved[static_cast<std::size_t>(t)] = as_std(embedding_difference ? Vector(st - s) : st);
    }
    for (Index k = 0; k < k_paths; ++k) {
      const auto& d = bank[k];
      std::vector<double> sup;
      if (!embedding_difference) {
        sup = as_std(plus_target ? d.s_plus : d.s_minus);
      } else if (field_supervision) {
        const auto ss = as_std(s), sp = as_std(d.s_plus), sm = as_std(d.s_minus);
        const double a = std::exp(-d.gamma * sqdist(ss, sp));
        const double b = std::exp(-d.gamma * sqdist(ss, sm));
        for (std::size_t j = 0; j < ss.size(); ++j) {
          sup.push_back(-2 * d.gamma * (a * (ss[j] - sp[j]) - b * (ss[j] - sm[j])));
        }
      } else {
        sup = as_std(d.s_plus - d.s_minus);
      }
      std::vector<double> row;
      for (Index t = 0; t < k_paths; ++t) row.push_back(cosine(sup, moved[static_cast<std::size_t>(t)]));
      total += reference_row_loss(row, static_cast<std::size_t>(k), tau);
    }
  }
  return total / double(batch.cols() * k_paths);
}

// A random small pipeline: d, e <= 8, N, K, B <= 3.
struct Instance {
  contraclip::LatentWarperd warper;
  contraclip::DipoleBankd bank;
  contraclip::SyntheticEncoder encoder;
  Matrix batch;
  Matrix eps;
  contraclip::ContrastiveConfig config;
};

inline Instance random_instance(Gen& gen, Index max_dim = 8, Index max_k = 3) {
  Instance in;
  const Index d = gen.integer(1, max_dim), e = gen.integer(1, max_dim);
  const Index n = gen.integer(1, 3), k = gen.integer(1, max_k), b = gen.integer(1, 3);
  const auto seed = static_cast<std::uint64_t>(gen.integer(0, 1 << 30));
  in.encoder = gen.integer(0, 1) ? contraclip::make_linear_encoder(d, e, seed, false)
                                 : contraclip::make_mlp_encoder(d, gen.integer(2, 8), e, seed);
  const double beta = gen.uniform(0.2, 0.9);
  in.bank.embedding_dim = e;
  in.bank.beta = beta;
  for (Index i = 0; i < k; ++i) {
    auto dip = gen.dipole(e, beta);
    dip.id = "d" + std::to_string(i);
    in.bank.dipoles.push_back(dip);
  }
  in.warper = gen.warper(d, k, n);
  in.batch.resize(d, b);
  for (Index j = 0; j < b; ++j) in.batch.col(j) = gen.gaussian(d);
  in.eps.resize(b, k);
  for (Index j = 0; j < b; ++j) {
    for (Index t = 0; t < k; ++t) in.eps(j, t) = gen.uniform(0.1, 0.75);
  }
  const contraclip::SimilarityMode modes[] = {contraclip::DipoleFieldMode{}, contraclip::LinearDifferenceMode{},
                                              contraclip::SinglePromptMode{contraclip::Pole::Plus},
                                              contraclip::SinglePromptMode{contraclip::Pole::Minus}};
  in.config = {gen.uniform(0.25, 2.0), modes[gen.integer(0, 3)]};
  return in;
}

}  // namespace support

#endif  // CONTRACLIP_TESTS_SUPPORT_HPP
