#include "contraclip/objective.hpp"

#include <cmath>

namespace contraclip {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

std::string to_string(const SimilarityMode& mode) {
  return std::visit(overloaded{
                        [](const DipoleFieldMode&) -> std::string { return "dipole-field"; },
                        [](const LinearDifferenceMode&) -> std::string {
                          return "linear-difference";
                        },
                        [](const SinglePromptMode& m) -> std::string {
                          return m.target == Pole::Plus ? "single-prompt-plus"
                                                        : "single-prompt-minus";
                        },
                    },
                    mode);
}

SimilarityMode parse_similarity_mode(const std::string& name) {
  if (name == "dipole-field") return DipoleFieldMode{};
  if (name == "linear-difference") return LinearDifferenceMode{};
  if (name == "single-prompt-plus" || name == "single-prompt") return SinglePromptMode{Pole::Plus};
  if (name == "single-prompt-minus") return SinglePromptMode{Pole::Minus};
  throw InvalidArgument("unknown similarity mode '" + name + "'");
}

bool uses_embedding_difference(const SimilarityMode& mode) {
  return !std::holds_alternative<SinglePromptMode>(mode);
}

Vector supervision_direction(const SimilarityMode& mode, const DipoleBankd& bank, Index dipole,
                             const Vector& s) {
  if (dipole < 0 || dipole >= bank.size()) {
    throw InvalidArgument("supervision_direction: dipole index out of range");
  }
  const auto& d = bank[dipole];
  if (s.size() != d.dim()) {
    throw DimensionMismatch("supervision_direction: embedding dimension mismatch");
  }
  return std::visit(overloaded{
                        [&](const DipoleFieldMode&) -> Vector { return field_gradient(d, s); },
                        [&](const LinearDifferenceMode&) -> Vector {
                          return d.s_plus - d.s_minus;
                        },
                        [&](const SinglePromptMode& m) -> Vector {
                          return m.target == Pole::Plus ? d.s_plus : d.s_minus;
                        },
                    },
                    mode);
}

Matrix similarity_matrix_item(const SimilarityMode& mode, const DipoleBankd& bank, const Vector& s,
                              const Matrix& shifted, const std::vector<Index>& paths,
                              long* guard_events) {
  const auto m = static_cast<Index>(paths.size());
  if (shifted.cols() != m) {
    throw DimensionMismatch("similarity_matrix: shifted embeddings do not match path count");
  }
  if (shifted.rows() != s.size()) {
    throw DimensionMismatch("similarity_matrix: shifted embedding dimension mismatch");
  }
  const bool difference = uses_embedding_difference(mode);
  Matrix movement = shifted;
  if (difference) movement.colwise() -= s;

  Matrix p(m, m);
  for (Index r = 0; r < m; ++r) {
    const Vector v = supervision_direction(mode, bank, paths[static_cast<std::size_t>(r)], s);
    for (Index c = 0; c < m; ++c) {
      bool guarded = false;
      p(r, c) = guarded_cosine(v, movement.col(c), &guarded);
      if (guarded && guard_events) ++*guard_events;
    }
  }
  return p;
}

SimilarityMatrixBatch similarity_matrix(const SimilarityMode& mode, const DipoleBankd& bank,
                                        const Matrix& originals,
                                        const std::vector<Matrix>& shifted) {
  if (static_cast<Index>(shifted.size()) != originals.cols()) {
    throw DimensionMismatch("similarity_matrix: one shifted block per original is required");
  }
  std::vector<Index> paths(static_cast<std::size_t>(bank.size()));
  for (Index k = 0; k < bank.size(); ++k) paths[static_cast<std::size_t>(k)] = k;

  SimilarityMatrixBatch out;
  out.p.reserve(shifted.size());
  for (Index n = 0; n < originals.cols(); ++n) {
    out.p.push_back(similarity_matrix_item(mode, bank, originals.col(n),
                                           shifted[static_cast<std::size_t>(n)], paths,
                                           &out.guard_events));
  }
  return out;
}

double contrastive_row_loss(const Eigen::Ref<const Vector>& row, Index positive, double temperature,
                            Vector* grad) {
  const Vector logits = row / temperature;
  const double top = logits.maxCoeff();
  const Vector weights = (logits.array() - top).exp().matrix();
  const double total = weights.sum();
  const double loss = top + std::log(total) - logits(positive);
  if (grad) {
    *grad = weights / (total * temperature);
    (*grad)(positive) -= 1.0 / temperature;
  }
  return loss;
}

double contrastive_loss(const SimilarityMatrixBatch& batch, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("contrastive_loss: temperature must be positive");
  double sum = 0.0;
  long rows = 0;
  for (const auto& p : batch.p) {
    if (p.rows() != p.cols()) throw DimensionMismatch("contrastive_loss: P must be square");
    if (!p.allFinite()) throw NonFinite("contrastive_loss: non-finite similarity");
    for (Index k = 0; k < p.rows(); ++k) {
      sum += contrastive_row_loss(p.row(k).transpose(), k, temperature);
      ++rows;
    }
  }
  if (rows == 0) throw InvalidArgument("contrastive_loss: empty batch");
  // log-sum-exp can round a hair below the positive logit
  return std::max(0.0, sum / static_cast<double>(rows));
}

}  // namespace contraclip
