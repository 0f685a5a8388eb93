#include "contraclip/encoder.hpp"

#include <Eigen/QR>

#include <random>
#include <string>

#include "contraclip/errors.hpp"

namespace contraclip {

namespace {

Matrix gaussian_matrix(Index rows, Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  // column-major fill keeps the draw order tied to the storage order
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

// Orthonormal basis of the column space of a tall matrix, signs fixed so that
// the diagonal of R is positive.
Matrix orthonormal_columns(const Matrix& tall) {
  Eigen::HouseholderQR<Matrix> qr(tall);
  Matrix q = qr.householderQ() * Matrix::Identity(tall.rows(), tall.cols());
  const Matrix r = qr.matrixQR().topRows(tall.cols()).triangularView<Eigen::Upper>();
  for (Index j = 0; j < tall.cols(); ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

}  // namespace

SyntheticEncoder::SyntheticEncoder(LinearMap map, std::uint64_t seed)
    : map_(std::move(map)), seed_(seed) {
  const auto& a = std::get<LinearMap>(map_).a;
  if (a.size() == 0) throw InvalidArgument("linear encoder: empty matrix");
  if (!a.allFinite()) throw NonFinite("linear encoder: non-finite weights");
}

SyntheticEncoder::SyntheticEncoder(MlpMap map, std::uint64_t seed)
    : map_(std::move(map)), seed_(seed) {
  const auto& m = std::get<MlpMap>(map_);
  if (m.w1.size() == 0 || m.w2.size() == 0) throw InvalidArgument("mlp encoder: empty weights");
  if (m.b1.size() != m.w1.rows() || m.w2.cols() != m.w1.rows()) {
    throw DimensionMismatch("mlp encoder: inconsistent layer shapes");
  }
  if (!m.w1.allFinite() || !m.b1.allFinite() || !m.w2.allFinite()) {
    throw NonFinite("mlp encoder: non-finite weights");
  }
}

Index SyntheticEncoder::input_dim() const {
  return is_linear() ? linear().a.cols() : mlp().w1.cols();
}

Index SyntheticEncoder::output_dim() const {
  return is_linear() ? linear().a.rows() : mlp().w2.rows();
}

const LinearMap& SyntheticEncoder::linear() const {
  if (!is_linear()) throw InvalidArgument("encoder is not linear");
  return std::get<LinearMap>(map_);
}

const MlpMap& SyntheticEncoder::mlp() const {
  if (is_linear()) throw InvalidArgument("encoder is not an MLP");
  return std::get<MlpMap>(map_);
}

void SyntheticEncoder::check_input(const Vector& z) const {
  if (z.size() != input_dim()) {
    throw DimensionMismatch("encoder expects latent dimension " + std::to_string(input_dim()) +
                            ", got " + std::to_string(z.size()));
  }
}

Vector SyntheticEncoder::encode(const Vector& z) const {
  check_input(z);
  if (is_linear()) return linear().a * z;
  const auto& m = mlp();
  return m.w2 * (m.w1 * z + m.b1).array().tanh().matrix();
}

Matrix SyntheticEncoder::encode_columns(const Matrix& z) const {
  Matrix out(output_dim(), z.cols());
  for (Index j = 0; j < z.cols(); ++j) out.col(j) = encode(z.col(j));
  return out;
}

Vector SyntheticEncoder::vjp(const Vector& z, const Vector& w) const {
  check_input(z);
  if (w.size() != output_dim()) throw DimensionMismatch("vjp: cotangent dimension mismatch");
  if (is_linear()) return linear().a.transpose() * w;
  const auto& m = mlp();
  const Eigen::ArrayXd t = (m.w1 * z + m.b1).array().tanh();
  const Eigen::ArrayXd slope = 1.0 - t.square();
  return m.w1.transpose() * (slope * (m.w2.transpose() * w).array()).matrix();
}

Vector SyntheticEncoder::jvp(const Vector& z, const Vector& v) const {
  check_input(z);
  if (v.size() != input_dim()) throw DimensionMismatch("jvp: tangent dimension mismatch");
  if (is_linear()) return linear().a * v;
  const auto& m = mlp();
  const Eigen::ArrayXd t = (m.w1 * z + m.b1).array().tanh();
  return m.w2 * ((1.0 - t.square()) * (m.w1 * v).array()).matrix();
}

bool operator==(const SyntheticEncoder& a, const SyntheticEncoder& b) {
  if (a.seed_ != b.seed_ || a.is_linear() != b.is_linear()) return false;
  if (a.is_linear()) {
    return a.linear().orthonormal == b.linear().orthonormal && a.linear().a == b.linear().a;
  }
  return a.mlp().w1 == b.mlp().w1 && a.mlp().b1 == b.mlp().b1 && a.mlp().w2 == b.mlp().w2;
}

SyntheticEncoder make_linear_encoder(Index latent_dim, Index embedding_dim, std::uint64_t seed,
                                     bool orthonormal) {
  if (latent_dim < 1 || embedding_dim < 1) {
    throw InvalidArgument("make_linear_encoder: sizes must be positive");
  }
  std::mt19937_64 rng(seed);
  Matrix a = gaussian_matrix(embedding_dim, latent_dim, 1.0 / std::sqrt(double(latent_dim)), rng);
  if (orthonormal) {
    if (embedding_dim <= latent_dim) {
      a = orthonormal_columns(a.transpose()).transpose();
    } else {
      a = orthonormal_columns(a);
    }
  }
  return SyntheticEncoder(LinearMap{std::move(a), orthonormal}, seed);
}

SyntheticEncoder make_mlp_encoder(Index latent_dim, Index hidden_dim, Index embedding_dim,
                                  std::uint64_t seed) {
  if (latent_dim < 1 || hidden_dim < 1 || embedding_dim < 1) {
    throw InvalidArgument("make_mlp_encoder: sizes must be positive");
  }
  std::mt19937_64 rng(seed);
  MlpMap m;
  m.w1 = gaussian_matrix(hidden_dim, latent_dim, 1.0 / std::sqrt(double(latent_dim)), rng);
  m.b1 = Vector::Zero(hidden_dim);
  m.w2 = gaussian_matrix(embedding_dim, hidden_dim, 1.0 / std::sqrt(double(hidden_dim)), rng);
  return SyntheticEncoder(std::move(m), seed);
}

}  // namespace contraclip
