#include "cto/material.hpp"

#include "cto/error.hpp"

#include <array>
#include <cmath>
#include <string>

namespace cto {

void PhaseMaterials::validate() const {
  require(young1 > 0.0 && young2 > 0.0, "Young's moduli must be positive");
  require(density1 >= 0.0 && density2 >= 0.0, "densities must be non-negative");
  for (double nu : {poisson1, poisson2}) {
    require(nu > -1.0 && nu < 0.5, "Poisson's ratio must lie in (-1, 0.5)");
  }
}

namespace {

constexpr std::array<std::pair<MaterialParameter, std::string_view>, 7> kNames{{
    {MaterialParameter::young1, "E1"},
    {MaterialParameter::young2, "E2"},
    {MaterialParameter::poisson, "nu"},
    {MaterialParameter::poisson1, "nu1"},
    {MaterialParameter::poisson2, "nu2"},
    {MaterialParameter::density1, "rho1"},
    {MaterialParameter::density2, "rho2"},
}};

// Coefficient functions of ν: D = E · (n-block, shear) in terms of
// (diagonal normal, off-diagonal normal, shear) and their ν-derivatives.
struct Coefficients {
  double diag;
  double off;
  double shear;
};

Coefficients poisson_coefficients(int dim, double nu, int order) {
  if (dim == 2) {
    const double s = 1.0 - nu * nu;
    switch (order) {
      case 0: return {1.0 / s, nu / s, 0.5 / (1.0 + nu)};
      case 1:
        return {2.0 * nu / (s * s), (1.0 + nu * nu) / (s * s), -0.5 / ((1.0 + nu) * (1.0 + nu))};
      default:
        return {2.0 / (s * s) + 8.0 * nu * nu / (s * s * s), (6.0 * nu + 2.0 * nu * nu * nu) / (s * s * s),
                1.0 / ((1.0 + nu) * (1.0 + nu) * (1.0 + nu))};
    }
  }
  // 3D: λ/E = ν/q with q = (1+ν)(1−2ν) = 1 − ν − 2ν², μ/E = 1/(2(1+ν)).
  const double q = 1.0 - nu - 2.0 * nu * nu;
  const double dq = -1.0 - 4.0 * nu;
  double lam = 0.0;
  double mu = 0.0;
  switch (order) {
    case 0:
      lam = nu / q;
      mu = 0.5 / (1.0 + nu);
      break;
    case 1:
      lam = (1.0 + 2.0 * nu * nu) / (q * q);
      mu = -0.5 / ((1.0 + nu) * (1.0 + nu));
      break;
    default:
      lam = (4.0 * nu * q - 2.0 * (1.0 + 2.0 * nu * nu) * dq) / (q * q * q);
      mu = 1.0 / ((1.0 + nu) * (1.0 + nu) * (1.0 + nu));
      break;
  }
  return {lam + 2.0 * mu, lam, mu};
}

Matrix build(int dim, const Coefficients& c) {
  const int nv = voigt_size(dim);
  const int nn = dim;  // normal components
  Matrix D = Matrix::Zero(nv, nv);
  for (int i = 0; i < nn; ++i) {
    for (int j = 0; j < nn; ++j) D(i, j) = i == j ? c.diag : c.off;
  }
  for (int i = nn; i < nv; ++i) D(i, i) = c.shear;
  return D;
}

PhaseTensors zero_tensors(int dim) {
  const int nv = voigt_size(dim);
  return {Matrix::Zero(nv, nv), Matrix::Zero(nv, nv), 0.0, 0.0};
}

bool is_modulus(MaterialParameter p) {
  return p == MaterialParameter::young1 || p == MaterialParameter::young2;
}
bool is_poisson(MaterialParameter p) {
  return p == MaterialParameter::poisson || p == MaterialParameter::poisson1 ||
         p == MaterialParameter::poisson2;
}
bool touches_phase1(MaterialParameter p) {
  return p == MaterialParameter::young1 || p == MaterialParameter::poisson ||
         p == MaterialParameter::poisson1 || p == MaterialParameter::density1;
}
bool touches_phase2(MaterialParameter p) {
  return p == MaterialParameter::young2 || p == MaterialParameter::poisson ||
         p == MaterialParameter::poisson2 || p == MaterialParameter::density2;
}

}  // namespace

std::string_view to_string(MaterialParameter p) {
  for (const auto& [tag, name] : kNames) {
    if (tag == p) return name;
  }
  return "?";
}

std::optional<MaterialParameter> parse_material_parameter(std::string_view name) {
  for (const auto& [tag, n] : kNames) {
    if (n == name) return tag;
  }
  return std::nullopt;
}

double get(const PhaseMaterials& m, MaterialParameter p) {
  switch (p) {
    case MaterialParameter::young1: return m.young1;
    case MaterialParameter::young2: return m.young2;
    case MaterialParameter::poisson:
    case MaterialParameter::poisson1: return m.poisson1;
    case MaterialParameter::poisson2: return m.poisson2;
    case MaterialParameter::density1: return m.density1;
    case MaterialParameter::density2: return m.density2;
  }
  return 0.0;
}

void set(PhaseMaterials& m, MaterialParameter p, double value) {
  switch (p) {
    case MaterialParameter::young1: m.young1 = value; break;
    case MaterialParameter::young2: m.young2 = value; break;
    case MaterialParameter::poisson: m.poisson1 = m.poisson2 = value; break;
    case MaterialParameter::poisson1: m.poisson1 = value; break;
    case MaterialParameter::poisson2: m.poisson2 = value; break;
    case MaterialParameter::density1: m.density1 = value; break;
    case MaterialParameter::density2: m.density2 = value; break;
  }
}

Matrix isotropic_elasticity(int dim, double young, double poisson) {
  require(dim == 2 || dim == 3, "dimension must be 2 or 3");
  return young * build(dim, poisson_coefficients(dim, poisson, 0));
}

Matrix isotropic_elasticity_poisson_derivative(int dim, double young, double poisson, int order) {
  require(dim == 2 || dim == 3, "dimension must be 2 or 3");
  require(order == 1 || order == 2, "only first and second Poisson derivatives are available");
  return young * build(dim, poisson_coefficients(dim, poisson, order));
}

PhaseTensors phase_tensors(const PhaseMaterials& m, int dim) {
  return {isotropic_elasticity(dim, m.young1, m.poisson1), isotropic_elasticity(dim, m.young2, m.poisson2),
          m.density1, m.density2};
}

PhaseTensors phase_derivative(const PhaseMaterials& m, int dim, MaterialParameter p, int order) {
  require(order == 1 || order == 2, "derivative order must be 1 or 2");
  PhaseTensors t = zero_tensors(dim);
  if (is_modulus(p)) {
    if (order == 1) {
      if (p == MaterialParameter::young1) t.elasticity1 = isotropic_elasticity(dim, 1.0, m.poisson1);
      else t.elasticity2 = isotropic_elasticity(dim, 1.0, m.poisson2);
    }
  } else if (is_poisson(p)) {
    if (touches_phase1(p)) t.elasticity1 = isotropic_elasticity_poisson_derivative(dim, m.young1, m.poisson1, order);
    if (touches_phase2(p)) t.elasticity2 = isotropic_elasticity_poisson_derivative(dim, m.young2, m.poisson2, order);
  } else if (order == 1) {
    if (p == MaterialParameter::density1) t.density1 = 1.0;
    else t.density2 = 1.0;
  }
  return t;
}

PhaseTensors phase_mixed_derivative(const PhaseMaterials& m, int dim, MaterialParameter p,
                                    MaterialParameter q) {
  if (p == q) return phase_derivative(m, dim, p, 2);
  PhaseTensors t = zero_tensors(dim);
  if (is_poisson(p)) std::swap(p, q);
  if (!is_modulus(p) || !is_poisson(q)) return t;
  if (p == MaterialParameter::young1 && touches_phase1(q)) {
    t.elasticity1 = isotropic_elasticity_poisson_derivative(dim, 1.0, m.poisson1, 1);
  }
  if (p == MaterialParameter::young2 && touches_phase2(q)) {
    t.elasticity2 = isotropic_elasticity_poisson_derivative(dim, 1.0, m.poisson2, 1);
  }
  return t;
}

}  // namespace cto
