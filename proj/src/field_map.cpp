#include "contraclip/field_map.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace contraclip {

namespace {

constexpr double kBasisTolerance = 1e-9;
const char* const kCsvHeader = "kind,i,j,x,y,f,grad_x,grad_y";

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string px(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

double to_double(const std::string& field, Index line) {
  double value = 0.0;
  const char* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw FormatError("field map CSV line " + std::to_string(line) + ": bad number '" + field + "'");
  }
  return value;
}

// Diverging blue-white-red for f in [-1, 1].
std::string colour(double f) {
  const double t = std::clamp(f, -1.0, 1.0);
  int r = 255, g = 255, b = 255;
  if (t > 0) {
    g = b = static_cast<int>(std::lround(255 * (1 - t)));
  } else {
    r = g = static_cast<int>(std::lround(255 * (1 + t)));
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

Vector Slice::project(const Vector& s) const {
  Vector out(2);
  out << u.dot(s - origin), v.dot(s - origin);
  return out;
}

Slice make_slice(Vector origin, const Vector& u, const Vector& v) {
  if (u.size() != origin.size() || v.size() != origin.size()) {
    throw DimensionMismatch("slice basis and origin have different dimensions");
  }
  if (!all_finite(origin) || !all_finite(u) || !all_finite(v)) {
    throw NonFinite("slice contains non-finite entries");
  }
  const double nu = u.norm();
  if (!(nu > kBasisTolerance)) throw InvalidArgument("degenerate slice basis: u is zero");
  Slice s;
  s.origin = std::move(origin);
  s.u = u / nu;
  Vector w = v - s.u.dot(v) * s.u;
  const double nw = w.norm();
  if (!(nw > kBasisTolerance * std::max(1.0, v.norm()))) {
    throw InvalidArgument("degenerate slice basis: v is parallel to u");
  }
  s.v = w / nw;
  return s;
}

Slice default_slice(const SemanticDipoled& dipole, std::uint64_t seed) {
  if (dipole.dim() < 2) throw InvalidArgument("a 2-D slice needs embedding_dim >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Vector u = dipole.s_plus - dipole.s_minus;
  Vector v(dipole.dim());
  for (int attempt = 0; attempt < 16; ++attempt) {
    for (Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
    try {
      return make_slice(0.5 * (dipole.s_plus + dipole.s_minus), u, v);
    } catch (const InvalidArgument&) {
      if (!(u.norm() > kBasisTolerance)) throw;
    }
  }
  throw InvalidArgument("could not draw a slice direction");
}

std::vector<FieldSample> field_map(const SemanticDipoled& dipole, const Slice& slice,
                                   const FieldMapConfig& config) {
  if (config.resolution < 2) throw InvalidArgument("field map grid needs at least 2 points per side");
  if (!(config.extent >= 0.0) || !std::isfinite(config.extent)) {
    throw InvalidArgument("field map extent must be non-negative");
  }
  detail::check_embedding(dipole, slice.origin);
  const double extent =
      config.extent > 0.0 ? config.extent : (dipole.s_plus - dipole.s_minus).norm();
  const Index n = config.resolution;
  std::vector<FieldSample> out;
  out.reserve(static_cast<std::size_t>(n * n + 2));
  auto sample = [&](std::string kind, Index i, Index j, double x, double y) {
    const Vector s = slice.point(x, y);
    const Vector g = field_gradient(dipole, s);
    out.push_back({std::move(kind), i, j, x, y, field_value(dipole, s), g.dot(slice.u), g.dot(slice.v)});
  };
  for (Index j = 0; j < n; ++j) {
    const double y = -extent + 2.0 * extent * double(j) / double(n - 1);
    for (Index i = 0; i < n; ++i) {
      sample("grid", i, j, -extent + 2.0 * extent * double(i) / double(n - 1), y);
    }
  }
  const Vector p = slice.project(dipole.s_plus);
  const Vector m = slice.project(dipole.s_minus);
  sample("pole_plus", -1, -1, p(0), p(1));
  sample("pole_minus", -1, -1, m(0), m(1));
  return out;
}

std::string field_map_csv(const std::vector<FieldSample>& samples) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& s : samples) {
    out += s.kind;
    out += ',';
    if (s.i >= 0) out += std::to_string(s.i);
    out += ',';
    if (s.j >= 0) out += std::to_string(s.j);
    for (double x : {s.x, s.y, s.f, s.grad_x, s.grad_y}) {
      out += ',';
      out += fmt(x);
    }
    out += '\n';
  }
  return out;
}

std::vector<FieldSample> parse_field_map_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw FormatError("field map CSV: missing or unexpected header");
  }
  std::vector<FieldSample> out;
  Index line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream row(line);
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() != 8) {
      throw FormatError("field map CSV line " + std::to_string(line_no) + ": expected 8 fields");
    }
    FieldSample s;
    s.kind = fields[0];
    if (s.kind != "grid" && s.kind != "pole_plus" && s.kind != "pole_minus") {
      throw FormatError("field map CSV line " + std::to_string(line_no) + ": unknown kind");
    }
    if (s.kind == "grid") {
      s.i = static_cast<Index>(to_double(fields[1], line_no));
      s.j = static_cast<Index>(to_double(fields[2], line_no));
    }
    s.x = to_double(fields[3], line_no);
    s.y = to_double(fields[4], line_no);
    s.f = to_double(fields[5], line_no);
    s.grad_x = to_double(fields[6], line_no);
    s.grad_y = to_double(fields[7], line_no);
    out.push_back(std::move(s));
  }
  return out;
}

std::string render_quiver_svg(const std::string& csv, int size_px) {
  if (size_px < 16) throw InvalidArgument("SVG size too small");
  const auto samples = parse_field_map_csv(csv);
  Index n = 0;
  double lo = 0, hi = 0, max_norm = 0;
  bool first = true;
  for (const auto& s : samples) {
    if (s.kind != "grid") continue;
    n = std::max({n, s.i + 1, s.j + 1});
    if (first) lo = hi = s.x, first = false;
    lo = std::min({lo, s.x, s.y});
    hi = std::max({hi, s.x, s.y});
    max_norm = std::max(max_norm, std::hypot(s.grad_x, s.grad_y));
  }
  if (n < 2 || !(hi > lo)) throw FormatError("field map CSV has no usable grid");

  const double size = size_px;
  const double cell = size / double(n);
  const double scale = (size - cell) / (hi - lo);
  // slice y grows upward, SVG y downward
  auto sx = [&](double x) { return cell / 2 + (x - lo) * scale; };
  auto sy = [&](double y) { return size - cell / 2 - (y - lo) * scale; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size_px << "\" height=\"" << size_px
      << "\" viewBox=\"0 0 " << size_px << ' ' << size_px << "\">\n"
      << "<defs><marker id=\"head\" markerWidth=\"6\" markerHeight=\"6\" refX=\"5\" refY=\"3\" "
         "orient=\"auto\"><path d=\"M0,0 L6,3 L0,6 z\" fill=\"#222\"/></marker></defs>\n";
  for (const auto& s : samples) {
    if (s.kind != "grid") continue;
    svg << "<rect x=\"" << px(sx(s.x) - cell / 2) << "\" y=\"" << px(sy(s.y) - cell / 2)
        << "\" width=\"" << px(cell) << "\" height=\"" << px(cell) << "\" fill=\"" << colour(s.f)
        << "\"/>\n";
  }
  for (const auto& s : samples) {
    if (s.kind != "grid") continue;
    const double norm = std::hypot(s.grad_x, s.grad_y);
    if (!(max_norm > 0) || norm < 1e-3 * max_norm) continue;
    const double len = 0.45 * cell * std::sqrt(norm / max_norm);
    const double x0 = sx(s.x), y0 = sy(s.y);
    svg << "<line x1=\"" << px(x0) << "\" y1=\"" << px(y0) << "\" x2=\""
        << px(x0 + len * s.grad_x / norm) << "\" y2=\"" << px(y0 - len * s.grad_y / norm)
        << "\" stroke=\"#222\" stroke-width=\"1\" marker-end=\"url(#head)\"/>\n";
  }
  for (const auto& s : samples) {
    if (s.kind == "grid") continue;
    const bool plus = s.kind == "pole_plus";
    svg << "<circle cx=\"" << px(sx(s.x)) << "\" cy=\"" << px(sy(s.y)) << "\" r=\"6\" fill=\""
        << (plus ? "#b2182b" : "#2166ac") << "\" stroke=\"#000\"/>\n"
        << "<text x=\"" << px(sx(s.x) + 8) << "\" y=\"" << px(sy(s.y) - 8)
        << "\" font-family=\"sans-serif\" font-size=\"14\">" << (plus ? "s+" : "s-") << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace contraclip
