#include <doctest.h>

#include "contraclip/dipole.hpp"
#include "support.hpp"

using namespace contraclip;
using support::Gen;

TEST_CASE("compute_gamma") {
  Vector a(2), b(2);
  a << 0, 0;
  b << 1, 0;
  CHECK(compute_gamma(a, b, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(compute_gamma(a, b, 0.5) == doctest::Approx(0.6931472).epsilon(1e-7));
  b << 0, 2;
  CHECK(compute_gamma(a, b, std::exp(-1.0)) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK_THROWS_AS(compute_gamma(a, a, 0.5), DegenerateDipole);
  CHECK_THROWS_AS(compute_gamma(a, b, 0.0), InvalidArgument);
  CHECK_THROWS_AS(compute_gamma(a, b, 1.0), InvalidArgument);
  CHECK_THROWS_AS(compute_gamma(a, Vector(Vector::Ones(3)), 0.5), DimensionMismatch);
}

TEST_CASE("pole values, bisector zero and agreement with the loop reference") {
  Gen gen(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Index e = gen.integer(1, 12);
    const double beta = gen.uniform(0.01, 0.99);
    const auto d = gen.dipole(e, beta);
    CHECK(std::abs(field_value(d, d.s_plus) - (1 - beta)) <= 1e-12);
    CHECK(std::abs(field_value(d, d.s_minus) - (beta - 1)) <= 1e-12);
    CHECK(std::abs(d.gamma + std::log(beta) / (d.s_plus - d.s_minus).squaredNorm()) <= 1e-12 * d.gamma);

    const Vector axis = (d.s_plus - d.s_minus).normalized();
    Vector off = gen.gaussian(e);
    off -= axis.dot(off) * axis;
    const Vector mid = 0.5 * (d.s_plus + d.s_minus) + off;
    CHECK(std::abs(field_value(d, mid)) <= 1e-12);

    const Vector s = gen.gaussian(e, 2.0);
    CHECK(field_value(d, s) == doctest::Approx(support::reference_field(d, s)).epsilon(1e-12));
    const double f = field_value(d, s);
    CHECK(f > -1.0);
    CHECK(f < 1.0);
  }
}

TEST_CASE("monotone along the inter-pole segment") {
  Gen gen(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = gen.dipole(gen.integer(1, 8), gen.uniform(0.05, 0.95));
    double prev = field_value(d, d.s_minus);
    for (int i = 1; i <= 1000; ++i) {
      const double t = double(i) / 1001.0;
      const double f = field_value(d, Vector(d.s_minus + t * (d.s_plus - d.s_minus)));
      CHECK(f > prev);
      prev = f;
    }
  }
}

TEST_CASE("swapping the poles negates the field") {
  Gen gen(13);
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = gen.dipole(gen.integer(1, 8), 0.5);
    const auto swapped = make_dipole<double>("y", d.s_plus, d.s_minus, 0.5);
    const Vector s = gen.gaussian(d.dim());
    CHECK(std::abs(field_value(d, s) + field_value(swapped, s)) <= 1e-12);
  }
}

TEST_CASE("field gradient") {
  SUBCASE("at the negative pole it points at the positive one") {
    Gen gen(14);
    for (int trial = 0; trial < 20; ++trial) {
      const double beta = gen.uniform(0.1, 0.9);
      const auto d = gen.dipole(gen.integer(1, 8), beta);
      const Vector expected = 2 * d.gamma * beta * (d.s_plus - d.s_minus);
      CHECK((field_gradient(d, d.s_minus) - expected).norm() <= 1e-12 * expected.norm());
    }
  }
  SUBCASE("1-D instance") {
    const auto d = make_dipole<double>("a", Vector::Zero(1), Vector::Ones(1), 0.5);
    CHECK(field_gradient(d, Vector::Zero(1))(0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(field_gradient(d, Vector::Zero(1))(0) == doctest::Approx(0.6931472).epsilon(1e-7));
  }
  SUBCASE("central differences") {
    Gen gen(15);
    double worst = 0.0;
    for (int trial = 0; trial < 150; ++trial) {
      const auto d = gen.dipole(gen.integer(1, 8), gen.uniform(0.05, 0.95));
      // near the dipole, where the field is not flat
      const double r = (d.s_plus - d.s_minus).norm();
      const Vector s = d.s_minus + gen.uniform(-0.5, 1.5) * (d.s_plus - d.s_minus) + gen.gaussian(d.dim(), 0.5 * r);
      const Vector n = support::numeric_gradient([&](const Vector& x) { return field_value(d, x); }, s);
      worst = std::max(worst, support::rel_err(field_gradient(d, s), n));
    }
    CHECK(worst < 1e-6);
  }
  CHECK_THROWS_AS(field_gradient(make_dipole<double>("a", Vector::Zero(2), Vector::Ones(2), 0.5),
                                 Vector::Zero(3)),
                  DimensionMismatch);
}

TEST_CASE("integrate_field") {
  Gen gen(16);
  const auto d = gen.dipole(4, 0.5);
  const double scale = (d.s_plus - d.s_minus).squaredNorm();
  SUBCASE("ascent from the negative pole") {
    const auto path = integrate_field(d, d.s_minus, 0.01 * scale, 200);
    REQUIRE(path.size() == 201);
    for (std::size_t t = 1; t < path.size(); ++t) {
      CHECK(field_value(d, path[t]) > field_value(d, path[t - 1]));
    }
  }
  SUBCASE("from the segment it approaches the positive pole") {
    const Vector s0 = d.s_minus + 0.3 * (d.s_plus - d.s_minus);
    const auto path = integrate_field(d, s0, 0.01 * scale, 20);
    for (std::size_t t = 1; t < path.size(); ++t) {
      CHECK((path[t] - d.s_plus).norm() < (path[t - 1] - d.s_plus).norm());
    }
  }
  SUBCASE("flat start stops at once") {
    const Vector far = d.s_plus + 1e3 * (d.s_plus - d.s_minus);
    CHECK(integrate_field(d, far, 0.1, 50).size() == 1);
  }
  CHECK_THROWS_AS(integrate_field(d, d.s_minus, 0.0, 5), InvalidArgument);
}

TEST_CASE("bank validation") {
  Gen gen(17);
  DipoleBankd bank;
  bank.embedding_dim = 3;
  bank.beta = 0.5;
  auto a = gen.dipole(3, 0.5);
  a.id = "a";
  auto b = gen.dipole(3, 0.5);
  b.id = "b";
  bank.dipoles = {a, b};
  CHECK_NOTHROW(bank.validate());

  SUBCASE("empty") {
    bank.dipoles.clear();
    CHECK_THROWS_AS(bank.validate(), FormatError);
  }
  SUBCASE("duplicate ids") {
    bank.dipoles[1].id = "a";
    CHECK_THROWS_AS(bank.validate(), FormatError);
  }
  SUBCASE("stale gamma") {
    bank.dipoles[0].gamma *= 1.0 + 1e-6;
    CHECK_THROWS_AS(bank.validate(), FormatError);
  }
  SUBCASE("dimension") {
    bank.dipoles[1].s_plus = Vector::Ones(4);
    CHECK_THROWS_AS(bank.validate(), DimensionMismatch);
  }
  SUBCASE("with_beta re-derives gamma") {
    const auto other = bank.with_beta(0.25);
    CHECK_NOTHROW(other.validate());
    CHECK(other[0].gamma == doctest::Approx(2.0 * bank[0].gamma).epsilon(1e-14));
  }
}
