#include "cto/error.hpp"
#include "cto/material.hpp"

#include <doctest.h>

using namespace cto;

namespace {

// Equal ratios so the shared-ratio parameter is well defined.
PhaseMaterials steel_like() { return {200e3, 150e3, 0.3, 0.3, 8e-9, 8e-10}; }

bool poisson_like(MaterialParameter p) {
  return p == MaterialParameter::poisson || p == MaterialParameter::poisson1 || p == MaterialParameter::poisson2;
}

constexpr MaterialParameter all_parameters[] = {MaterialParameter::young1,   MaterialParameter::young2,
                                                 MaterialParameter::poisson,  MaterialParameter::poisson1,
                                                 MaterialParameter::poisson2, MaterialParameter::density1,
                                                 MaterialParameter::density2};

double gap(const PhaseTensors& a, const PhaseTensors& b) {
  return (a.elasticity1 - b.elasticity1).norm() + (a.elasticity2 - b.elasticity2).norm() +
         std::abs(a.density1 - b.density1) + std::abs(a.density2 - b.density2);
}

PhaseTensors combine(const PhaseTensors& a, const PhaseTensors& b, double sa, double sb) {
  return {sa * a.elasticity1 + sb * b.elasticity1, sa * a.elasticity2 + sb * b.elasticity2,
          sa * a.density1 + sb * b.density1, sa * a.density2 + sb * b.density2};
}

}  // namespace

TEST_CASE("plane stress and 3d isotropic elasticity") {
  const Matrix D = isotropic_elasticity(2, 100.0, 0.25);
  const double c = 100.0 / (1 - 0.0625);
  CHECK(D(0, 0) == doctest::Approx(c));
  CHECK(D(0, 1) == doctest::Approx(0.25 * c));
  CHECK(D(2, 2) == doctest::Approx(100.0 / (2 * 1.25)));
  const Matrix D3 = isotropic_elasticity(3, 100.0, 0.25);
  const double lambda = 100.0 * 0.25 / (1.25 * 0.5), mu = 100.0 / 2.5;
  CHECK(D3(0, 0) == doctest::Approx(lambda + 2 * mu));
  CHECK(D3(1, 2) == doctest::Approx(lambda));
  CHECK(D3(3, 3) == doctest::Approx(mu));
  CHECK(D3(5, 5) == doctest::Approx(mu));
}

TEST_CASE("poisson derivatives of the elasticity match finite differences") {
  for (int dim : {2, 3}) {
    const double E = 70.0, nu = 0.3, h = 1e-5;
    const Matrix d1 = isotropic_elasticity_poisson_derivative(dim, E, nu, 1);
    const Matrix d2 = isotropic_elasticity_poisson_derivative(dim, E, nu, 2);
    const Matrix fd1 = (isotropic_elasticity(dim, E, nu + h) - isotropic_elasticity(dim, E, nu - h)) / (2 * h);
    const Matrix fd2 = (isotropic_elasticity_poisson_derivative(dim, E, nu + h, 1) -
                        isotropic_elasticity_poisson_derivative(dim, E, nu - h, 1)) /
                       (2 * h);
    CHECK((d1 - fd1).norm() <= 1e-6 * d1.norm());
    CHECK((d2 - fd2).norm() <= 1e-6 * d2.norm());
  }
}

TEST_CASE("phase derivatives match finite differences for every parameter") {
  const PhaseMaterials m = steel_like();
  for (int dim : {2, 3}) {
    for (MaterialParameter p : all_parameters) {
      const double v = get(m, p);
      const double h = 1e-6 * v;
      PhaseMaterials up = m, down = m;
      set(up, p, v + h);
      set(down, p, v - h);
      const PhaseTensors fd1 = combine(phase_tensors(up, dim), phase_tensors(down, dim), 0.5 / h, -0.5 / h);
      const PhaseTensors d1 = phase_derivative(m, dim, p, 1);
      CHECK(gap(d1, fd1) <= 1e-5 * (d1.elasticity1.norm() + d1.elasticity2.norm() + 1.0));
      const PhaseTensors fd2 = combine(phase_derivative(up, dim, p, 1), phase_derivative(down, dim, p, 1),
                                       0.5 / h, -0.5 / h);
      const PhaseTensors d2 = phase_derivative(m, dim, p, 2);
      CHECK(gap(d2, fd2) <= 1e-5 * (d2.elasticity1.norm() + d2.elasticity2.norm() + 1.0));
    }
  }
}

TEST_CASE("mixed phase derivatives match finite differences") {
  const PhaseMaterials m = steel_like();
  const int dim = 2;
  for (MaterialParameter p : all_parameters) {
    for (MaterialParameter q : all_parameters) {
      // a shared ratio never appears together with a split one
      if (p == q || (poisson_like(p) && poisson_like(q))) continue;
      const double v = get(m, q);
      const double h = 1e-6 * v;
      PhaseMaterials up = m, down = m;
      set(up, q, v + h);
      set(down, q, v - h);
      const PhaseTensors fd =
          combine(phase_derivative(up, dim, p, 1), phase_derivative(down, dim, p, 1), 0.5 / h, -0.5 / h);
      const PhaseTensors d = phase_mixed_derivative(m, dim, p, q);
      CHECK(gap(d, fd) <= 1e-5 * (d.elasticity1.norm() + d.elasticity2.norm() + 1.0));
    }
  }
}

TEST_CASE("shared poisson ratio moves both phases") {
  PhaseMaterials m = steel_like();
  set(m, MaterialParameter::poisson, 0.25);
  CHECK(m.poisson1 == 0.25);
  CHECK(m.poisson2 == 0.25);
  CHECK(get(m, MaterialParameter::poisson) == 0.25);
}

TEST_CASE("parameter names round trip") {
  for (MaterialParameter p : all_parameters) {
    const auto back = parse_material_parameter(to_string(p));
    REQUIRE(back.has_value());
    CHECK(*back == p);
  }
  CHECK_FALSE(parse_material_parameter("E3").has_value());
}

TEST_CASE("invalid phase materials are rejected") {
  PhaseMaterials m = steel_like();
  m.young1 = -1.0;
  CHECK_THROWS_AS(m.validate(), Error);
  m = steel_like();
  m.poisson2 = 0.5;
  CHECK_THROWS_AS(m.validate(), Error);
  m = steel_like();
  m.density2 = -1e-9;
  CHECK_THROWS_AS(m.validate(), Error);
}
