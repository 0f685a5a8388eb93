#ifndef CONTRACLIP_FIELD_MAP_HPP
#define CONTRACLIP_FIELD_MAP_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "contraclip/dipole.hpp"

namespace contraclip {

/// A 2-D affine slice of the embedding space: s = origin + x u + y v.
/// u and v are orthonormalized on construction (Gram-Schmidt, u first).
struct Slice {
  Vector origin;
  Vector u;
  Vector v;

  Vector point(double x, double y) const { return origin + x * u + y * v; }
  Vector project(const Vector& s) const;
};

Slice make_slice(Vector origin, const Vector& u, const Vector& v);

/// Origin at the pole midpoint, u along s+ - s-, v a seeded direction orthogonal to u.
Slice default_slice(const SemanticDipoled& dipole, std::uint64_t seed = 0);

struct FieldMapConfig {
  Index resolution = 41;  // grid points per side
  double extent = 0.0;    // half-width in slice units; 0 picks the pole distance
};

struct FieldSample {
  std::string kind;  // "grid", "pole_plus" or "pole_minus"
  Index i = -1, j = -1;
  double x = 0, y = 0, f = 0, grad_x = 0, grad_y = 0;
};

/// Field values and in-slice gradient components on a resolution x resolution
/// grid, followed by the two poles projected onto the slice.
std::vector<FieldSample> field_map(const SemanticDipoled& dipole, const Slice& slice,
                                   const FieldMapConfig& config);

std::string field_map_csv(const std::vector<FieldSample>& samples);
std::vector<FieldSample> parse_field_map_csv(const std::string& csv);

/// Heat map of f with gradient arrows and pole markers, drawn from CSV text only.
std::string render_quiver_svg(const std::string& csv, int size_px = 640);

}  // namespace contraclip

#endif  // CONTRACLIP_FIELD_MAP_HPP
