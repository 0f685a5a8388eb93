#ifndef CONTRACLIP_OBJECTIVE_HPP
#define CONTRACLIP_OBJECTIVE_HPP

#include <string>
#include <variant>
#include <vector>

#include "contraclip/dipole.hpp"
#include "contraclip/types.hpp"

namespace contraclip {

enum class Pole { Minus, Plus };

/// Supervision from the local dipole-field gradient at the original embedding.
struct DipoleFieldMode {};
/// Supervision from the fixed pole difference s+ - s-.
struct LinearDifferenceMode {};
/// Plain prompt similarity: cos(target pole, shifted embedding).
struct SinglePromptMode {
  Pole target = Pole::Plus;
};

using SimilarityMode = std::variant<DipoleFieldMode, LinearDifferenceMode, SinglePromptMode>;

std::string to_string(const SimilarityMode& mode);
/// Accepts "dipole-field", "linear-difference", "single-prompt-plus", "single-prompt-minus".
SimilarityMode parse_similarity_mode(const std::string& name);

struct ContrastiveConfig {
  double temperature = 0.5;
  SimilarityMode mode = DipoleFieldMode{};
};

/// Whether the mode compares against s_t - s (true) or against s_t itself.
bool uses_embedding_difference(const SimilarityMode& mode);

inline constexpr double kCosineGuard = 1e-12;

/// cos(a, b) with both norms clamped below by kCosineGuard. `guarded` is set
/// when a clamp was applied.
template <typename DerivedA, typename DerivedB>
double guarded_cosine(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                      bool* guarded = nullptr) {
  const double na = a.norm();
  const double nb = b.norm();
  if (guarded) *guarded = na < kCosineGuard || nb < kCosineGuard;
  return a.dot(b) / (std::max(na, kCosineGuard) * std::max(nb, kCosineGuard));
}

Vector supervision_direction(const SimilarityMode& mode, const DipoleBankd& bank, Index dipole,
                             const Vector& s);

/// One P matrix per batch item: entry (k, t) compares the supervision of the
/// row dipole with the movement produced by the column path.
struct SimilarityMatrixBatch {
  std::vector<Matrix> p;
  long guard_events = 0;
};

/// Similarity matrix for one original embedding `s`. Column c of `shifted` is
/// the embedding reached by path `paths[c]`; rows use the same path order.
Matrix similarity_matrix_item(const SimilarityMode& mode, const DipoleBankd& bank, const Vector& s,
                              const Matrix& shifted, const std::vector<Index>& paths,
                              long* guard_events = nullptr);

/// `originals` is e x B; `shifted[n]` is e x K with column t produced by path t.
SimilarityMatrixBatch similarity_matrix(const SimilarityMode& mode, const DipoleBankd& bank,
                                        const Matrix& originals, const std::vector<Matrix>& shifted);

/// Row-wise softmax cross-entropy with the diagonal as the positive, averaged
/// over every row of every item.
double contrastive_loss(const SimilarityMatrixBatch& batch, double temperature);

/// Loss of a single row and its gradient with respect to the row entries.
double contrastive_row_loss(const Eigen::Ref<const Vector>& row, Index positive, double temperature,
                            Vector* grad = nullptr);

}  // namespace contraclip

#endif  // CONTRACLIP_OBJECTIVE_HPP
