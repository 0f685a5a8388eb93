#ifndef CONTRACLIP_DIPOLE_HPP
#define CONTRACLIP_DIPOLE_HPP

#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "contraclip/errors.hpp"
#include "contraclip/types.hpp"

namespace contraclip {

/// gamma such that the RBF centred on one pole evaluates to beta at the other pole.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar compute_gamma(const Eigen::MatrixBase<DerivedA>& s_minus,
                                        const Eigen::MatrixBase<DerivedB>& s_plus,
                                        typename DerivedA::Scalar beta) {
  using Scalar = typename DerivedA::Scalar;
  if (!(beta > Scalar(0) && beta < Scalar(1))) {
    throw InvalidArgument("beta must lie in (0, 1), got " + std::to_string(double(beta)));
  }
  if (s_minus.size() != s_plus.size()) {
    throw DimensionMismatch("dipole poles have different dimensions");
  }
  const Scalar dist2 = (s_plus - s_minus).squaredNorm();
  if (!(dist2 > Scalar(0))) throw DegenerateDipole("dipole poles coincide");
  return -std::log(beta) / dist2;
}

template <typename Scalar>
struct SemanticDipole {
  std::string id;
  std::optional<std::string> text_minus;
  std::optional<std::string> text_plus;
  VectorX<Scalar> s_minus;
  VectorX<Scalar> s_plus;
  Scalar beta{0.5};
  Scalar gamma{0};
  // Set when beta differs from the bank-wide value and must be written back.
  bool beta_override = false;

  Index dim() const { return s_minus.size(); }
};

using SemanticDipoled = SemanticDipole<double>;

template <typename Scalar, typename DerivedA, typename DerivedB>
SemanticDipole<Scalar> make_dipole(std::string id, const Eigen::MatrixBase<DerivedA>& s_minus,
                                   const Eigen::MatrixBase<DerivedB>& s_plus, Scalar beta) {
  SemanticDipole<Scalar> d;
  d.id = std::move(id);
  d.s_minus = s_minus;
  d.s_plus = s_plus;
  d.beta = beta;
  d.gamma = compute_gamma(d.s_minus, d.s_plus, beta);
  return d;
}

namespace detail {

template <typename Scalar, typename Derived>
void check_embedding(const SemanticDipole<Scalar>& dipole, const Eigen::MatrixBase<Derived>& s) {
  if (s.size() != dipole.dim()) {
    throw DimensionMismatch("embedding has dimension " + std::to_string(s.size()) +
                            ", dipole '" + dipole.id + "' has " + std::to_string(dipole.dim()));
  }
}

}  // namespace detail

/// exp(-g|s - s+|^2) - exp(-g|s - s-|^2), in (-1, 1).
template <typename Scalar, typename Derived>
Scalar field_value(const SemanticDipole<Scalar>& dipole, const Eigen::MatrixBase<Derived>& s) {
  detail::check_embedding(dipole, s);
  return std::exp(-dipole.gamma * (s - dipole.s_plus).squaredNorm()) -
         std::exp(-dipole.gamma * (s - dipole.s_minus).squaredNorm());
}

template <typename Scalar, typename Derived>
VectorX<Scalar> field_gradient(const SemanticDipole<Scalar>& dipole,
                               const Eigen::MatrixBase<Derived>& s) {
  detail::check_embedding(dipole, s);
  const VectorX<Scalar> to_plus = s - dipole.s_plus;
  const VectorX<Scalar> to_minus = s - dipole.s_minus;
  const Scalar a = std::exp(-dipole.gamma * to_plus.squaredNorm());
  const Scalar b = std::exp(-dipole.gamma * to_minus.squaredNorm());
  return (Scalar(-2) * dipole.gamma) * (a * to_plus - b * to_minus);
}

/// Fixed-step gradient ascent on the dipole field. The returned path always
/// contains s0; it stops after max_steps or once the gradient norm drops below
/// min_gradient_norm.
template <typename Scalar, typename Derived>
std::vector<VectorX<Scalar>> integrate_field(const SemanticDipole<Scalar>& dipole,
                                             const Eigen::MatrixBase<Derived>& s0, Scalar step,
                                             Index max_steps,
                                             Scalar min_gradient_norm = Scalar(1e-8)) {
  if (!(step > Scalar(0))) throw InvalidArgument("integrate_field: step must be positive");
  if (max_steps < 0) throw InvalidArgument("integrate_field: max_steps must be non-negative");
  detail::check_embedding(dipole, s0);
  std::vector<VectorX<Scalar>> path;
  path.emplace_back(s0);
  for (Index t = 0; t < max_steps; ++t) {
    const VectorX<Scalar> g = field_gradient(dipole, path.back());
    if (g.norm() < min_gradient_norm) break;
    path.emplace_back(path.back() + step * g);
  }
  return path;
}

/// K dipoles sharing one embedding space.
template <typename Scalar>
struct DipoleBank {
  Index embedding_dim = 0;
  Scalar beta{0.5};
  // Poles were L2-normalized at load time.
  bool normalized = false;
  std::vector<SemanticDipole<Scalar>> dipoles;

  Index size() const { return static_cast<Index>(dipoles.size()); }
  const SemanticDipole<Scalar>& operator[](Index k) const {
    return dipoles.at(static_cast<std::size_t>(k));
  }

  /// Throws on any violated invariant: K >= 1, consistent dims, unique ids,
  /// beta in range, gamma consistent with the poles.
  void validate(double gamma_rel_tol = 1e-9) const {
    if (embedding_dim < 1) throw FormatError("dipole bank: embedding_dim must be positive");
    if (dipoles.empty()) throw FormatError("dipole bank: no dipoles");
    if (!(beta > Scalar(0) && beta < Scalar(1))) {
      throw InvalidArgument("dipole bank: beta must lie in (0, 1)");
    }
    std::set<std::string> ids;
    for (const auto& d : dipoles) {
      if (!ids.insert(d.id).second) throw FormatError("dipole bank: duplicate id '" + d.id + "'");
      if (d.s_minus.size() != embedding_dim || d.s_plus.size() != embedding_dim) {
        throw DimensionMismatch("dipole '" + d.id + "' does not match embedding_dim " +
                                std::to_string(embedding_dim));
      }
      if (!d.s_minus.allFinite() || !d.s_plus.allFinite()) {
        throw NonFinite("dipole '" + d.id + "' has non-finite pole entries");
      }
      const Scalar expected = compute_gamma(d.s_minus, d.s_plus, d.beta);
      if (!(std::abs(d.gamma - expected) <= Scalar(gamma_rel_tol) * std::abs(expected))) {
        throw FormatError("dipole '" + d.id + "': stored gamma " + std::to_string(double(d.gamma)) +
                          " disagrees with -ln(beta)/|s+ - s-|^2 = " +
                          std::to_string(double(expected)));
      }
    }
  }

  /// Same poles with every dipole re-derived from a new bank-wide beta.
  DipoleBank with_beta(Scalar new_beta) const {
    DipoleBank out = *this;
    out.beta = new_beta;
    for (auto& d : out.dipoles) {
      d.beta = new_beta;
      d.beta_override = false;
      d.gamma = compute_gamma(d.s_minus, d.s_plus, new_beta);
    }
    return out;
  }
};

using DipoleBankd = DipoleBank<double>;

}  // namespace contraclip

#endif  // CONTRACLIP_DIPOLE_HPP
