#include "cto/error.hpp"
#include "cto/uncertainty.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace cto;
using namespace cto::testing;

namespace {

double compliance_at(const TwoScaleModel& model, const DesignState& s, PhaseMaterials m, MaterialParameter p,
                     double value) {
  set(m, p, value);
  return deterministic_evaluate(model, s, m).compliance;
}

UncertainSet point_set(const PhaseMaterials& m) {
  UncertainSet u = five_parameters(m, 0.0, 0.0, 0.0);
  return u;
}

}  // namespace

TEST_CASE("perturbation analysis performs 1 + 3n solves") {
  const TwoScaleModel model = cantilever_model(6, 2, 4);
  const DesignState s = random_design(model, 1);
  const PhaseMaterials m = two_phase();
  UncertainSet u = five_parameters(m, 0.05, 0.04, 0.05);
  CHECK(ihpa_evaluate(model, s, m, u, 1.0).fea_calls == 16);
  u.parameters.resize(2);
  CHECK(ihpa_evaluate(model, s, m, u, 1.0).fea_calls == 7);
  CHECK(ihpa_evaluate(model, s, m, UncertainSet{}, 1.0).fea_calls == 1);
  CHECK(deterministic_evaluate(model, s, m).fea_calls == 1);
}

TEST_CASE("zero widths and zero spread reduce to the deterministic compliance") {
  const TwoScaleModel model = cantilever_model(6, 2, 4);
  const DesignState s = random_design(model, 2);
  const PhaseMaterials m = two_phase();
  const IhpaResult r = ihpa_evaluate(model, s, m, point_set(m), 3.0);
  const double c = deterministic_evaluate(model, s, m).compliance;
  CHECK(r.objective.expectation == doctest::Approx(c).epsilon(1e-12));
  CHECK(r.objective.std_dev == 0.0);
  CHECK(r.objective.value == doctest::Approx(c).epsilon(1e-12));
}

TEST_CASE("first-order terms are the compliance derivatives") {
  const TwoScaleModel model = cantilever_model(4, 2, 4, 3000.0);
  const DesignState s = random_design(model, 3);
  const PhaseMaterials m = two_phase();
  const UncertainSet u = five_parameters(m, 0.05, 0.04, 0.05);
  const IhpaResult r = ihpa_evaluate(model, s, m, u, 1.0);
  for (int j = 0; j < u.size(); ++j) {
    const MaterialParameter p = u.parameters[j].parameter;
    const double v = get(m, p), h = 1e-5 * v;
    const double fd = (compliance_at(model, s, m, p, v + h) - compliance_at(model, s, m, p, v - h)) / (2 * h);
    CHECK(r.terms[j].g1 == r.terms[j].g2);
    CHECK(r.terms[j].g2 == doctest::Approx(fd).epsilon(1e-5));
  }
  // ρ^H is linear in the densities, so the second-order term is exact there.
  const int j = 3;
  const MaterialParameter p = u.parameters[j].parameter;
  const double v = get(m, p), h = 1e-3 * v;
  const double c0 = compliance_at(model, s, m, p, v);
  const double fd2 = (compliance_at(model, s, m, p, v + h) - 2 * c0 + compliance_at(model, s, m, p, v - h)) / (h * h);
  CHECK(r.terms[j].g3 == doctest::Approx(fd2).epsilon(1e-4));
}

TEST_CASE("worst case combines the terms with hard signs") {
  const TwoScaleModel model = cantilever_model(4, 2, 4, 3000.0);
  const DesignState s = random_design(model, 4);
  const PhaseMaterials m = two_phase();
  const UncertainSet u = five_parameters(m, 0.05, 0.04, 0.05);
  const IhpaResult r = ihpa_evaluate(model, s, m, u, 2.0);
  double e = r.deterministic, sd = 0.0;
  for (int j = 0; j < u.size(); ++j) {
    const PerturbationTerms& t = r.terms[j];
    const HybridParameter& h = u.parameters[j];
    const double dmu = 0.5 * (h.mean.hi - h.mean.lo);
    const double dsig = 0.5 * (h.std_dev.hi - h.std_dev.lo);
    const double sig = 0.5 * (h.std_dev.hi + h.std_dev.lo);
    e += std::abs(t.g1 * dmu);
    sd += std::abs(t.g2 * sig) + std::abs(t.g3 * sig * dmu + t.g2 * dsig);
  }
  CHECK(r.objective.expectation == doctest::Approx(e).epsilon(1e-12));
  CHECK(r.objective.std_dev == doctest::Approx(sd).epsilon(1e-12));
  CHECK(r.objective.value == doctest::Approx(e + 2.0 * sd).epsilon(1e-12));
  CHECK(r.objective.expectation >= r.deterministic);
}

TEST_CASE("smooth signs approach hard signs and keep the spread non-negative") {
  const TwoScaleModel model = cantilever_model(4, 2, 4);
  const DesignState s = random_design(model, 5);
  const PhaseMaterials m = two_phase();
  const UncertainSet u = five_parameters(m, 0.05, 0.04, 0.05);
  const IhpaResult hard = ihpa_evaluate(model, s, m, u, 1.0);
  CHECK(hard.beta >= 1.0);
  CHECK(hard.beta <= 1e4);
  const IhpaResult soft = ihpa_evaluate(model, s, m, u, 1.0, {true, 0.0});
  CHECK(soft.objective.std_dev >= 0.0);
  CHECK(soft.objective.value <= hard.objective.value);
  CHECK(soft.objective.value == doctest::Approx(hard.objective.value).epsilon(1e-2));
  const IhpaResult steep = ihpa_evaluate(model, s, m, u, 1.0, {true, 1e6});
  CHECK(steep.objective.value == doctest::Approx(hard.objective.value).epsilon(1e-9));
}

TEST_CASE("parameter operators match finite differences of the dynamic stiffness") {
  const TwoScaleModel model = cantilever_model(3, 2, 4, 4000.0);
  const DesignState s = random_design(model, 6);
  const PhaseMaterials m = two_phase();
  const UncertainSet u = five_parameters(m, 0.05, 0.04, 0.05);
  const EffectiveMaterial em = homogenize(model.unit_cell(s), m, u.tags());
  auto kd = [&](PhaseMaterials q) {
    const EffectiveMaterial e = homogenize(model.unit_cell(s), q);
    return Matrix(model.dynamic_stiffness(s, e.value.elasticity, e.value.density));
  };
  for (int j = 0; j < u.size(); ++j) {
    const MaterialParameter p = u.parameters[j].parameter;
    const double v = get(m, p), h = 1e-5 * v;
    PhaseMaterials up = m, down = m;
    set(up, p, v + h);
    set(down, p, v - h);
    const Matrix fd = (kd(up) - kd(down)) / (2 * h);
    const Matrix a = Matrix(parameter_to_matrices(model, s, em, j).first);
    CHECK((a - fd).norm() <= 1e-5 * fd.norm());
  }
  // Scaling both moduli scales the operator's stiffness part.
  const Matrix k0 = Matrix(model.dynamic_stiffness(s, em.value.elasticity, 0.0));
  const Matrix sum = m.young1 * Matrix(parameter_to_matrices(model, s, em, 0).first) +
                     m.young2 * Matrix(parameter_to_matrices(model, s, em, 1).first);
  CHECK((sum - k0).norm() <= 1e-9 * k0.norm());
  CHECK(Matrix(parameter_cross_matrix(model, s, m, em, MaterialParameter::young1, MaterialParameter::density1))
            .norm() == 0.0);
}

TEST_CASE("perturbation analysis agrees with Monte Carlo on a small cantilever") {
  const TwoScaleModel model = cantilever_model(4, 1, 4, 500.0);
  const DesignState s = initial_design(model, 0.25);
  const PhaseMaterials m = two_phase();
  UncertainSet u;
  u.parameters.push_back({MaterialParameter::young1, {190e3, 210e3}, {8e3, 10e3}});
  u.parameters.push_back({MaterialParameter::young2, {142e3, 158e3}, {6e3, 7.5e3}});
  const IhpaResult r = ihpa_evaluate(model, s, m, u, 1.0);
  McsOptions o;
  o.interval_samples = 16;
  o.random_samples = 1000;
  o.seed = 3;
  o.threads = 1;
  const McsResult mc = mcs_evaluate(model, s, m, u, o);
  CHECK(mc.interval_points == 16 + 16);
  CHECK(mc.fea_calls == 32u * 1000u);
  CHECK(r.objective.expectation == doctest::Approx(mc.max_expectation).epsilon(0.10));
  CHECK(r.objective.std_dev == doctest::Approx(mc.max_std_dev).epsilon(0.10));
}

TEST_CASE("Monte Carlo is reproducible and independent of the thread count") {
  const TwoScaleModel model = cantilever_model(3, 1, 3);
  const DesignState s = random_design(model, 7);
  const PhaseMaterials m = two_phase();
  const UncertainSet u = five_parameters(m, 0.05, 0.04, 0.05);
  McsOptions o;
  o.interval_samples = 4;
  o.random_samples = 50;
  o.include_corners = false;
  o.seed = 11;
  o.threads = 1;
  const McsResult a = mcs_evaluate(model, s, m, u, o);
  o.threads = 3;
  const McsResult b = mcs_evaluate(model, s, m, u, o);
  CHECK(a.max_expectation == b.max_expectation);
  CHECK(a.max_std_dev == b.max_std_dev);
  o.seed = 12;
  const McsResult c = mcs_evaluate(model, s, m, u, o);
  CHECK(c.max_expectation != a.max_expectation);
}

TEST_CASE("Monte Carlo without spread returns the deterministic compliance") {
  const TwoScaleModel model = cantilever_model(3, 1, 3);
  const DesignState s = random_design(model, 8);
  const PhaseMaterials m = two_phase();
  McsOptions o;
  o.interval_samples = 2;
  o.random_samples = 5;
  o.threads = 1;
  const McsResult r = mcs_evaluate(model, s, m, point_set(m), o);
  const double c = deterministic_evaluate(model, s, m).compliance;
  CHECK(r.max_expectation == doctest::Approx(c).epsilon(1e-9));
  CHECK(r.max_std_dev <= 1e-9 * c);
}

TEST_CASE("uncertain sets are validated") {
  const PhaseMaterials m = two_phase();
  UncertainSet u = five_parameters(m, 0.05, 0.04, 0.05);
  u.parameters[1].parameter = MaterialParameter::young1;
  CHECK_THROWS_AS(u.validate(), Error);
  u = five_parameters(m, 0.05, 0.04, 0.05);
  u.parameters[0].mean = {2.0, 1.0};
  CHECK_THROWS_AS(u.validate(), Error);
  u = five_parameters(m, 0.05, 0.04, 0.05);
  u.parameters[0].std_dev = {-1.0, 1.0};
  CHECK_THROWS_AS(u.validate(), Error);
  u = five_parameters(m, 0.05, 0.04, 0.05);
  u.parameters.push_back({MaterialParameter::poisson1, {0.29, 0.31}, {0.0, 0.0}});
  CHECK_THROWS_AS(u.validate(), Error);

  const TwoScaleModel model = cantilever_model(3, 1, 3);
  const DesignState s = random_design(model, 9);
  CHECK_THROWS_AS(ihpa_evaluate(model, s, m, five_parameters(m, 0.05, 0.04, 0.05), -1.0), Error);
}

TEST_CASE("nominal materials sit at the interval midpoints") {
  PhaseMaterials m = two_phase();
  UncertainSet u;
  u.parameters.push_back({MaterialParameter::young2, {100e3, 120e3}, {0.0, 0.0}});
  u.parameters.push_back({MaterialParameter::poisson, {0.2, 0.3}, {0.0, 0.0}});
  const PhaseMaterials n = u.nominal(m);
  CHECK(n.young2 == 110e3);
  CHECK(n.poisson1 == doctest::Approx(0.25));
  CHECK(n.poisson2 == doctest::Approx(0.25));
  CHECK(n.young1 == m.young1);
}
