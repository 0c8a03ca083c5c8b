#pragma once

// Isotropic phase properties and their parameter derivatives.

#include "cto/fem.hpp"

#include <optional>
#include <string_view>

namespace cto {

/// Elastic and inertial properties of the two constituent phases.
/// Units: MPa for moduli, tonne/mm³ for densities.
struct PhaseMaterials {
  double young1 = 0.0;
  double young2 = 0.0;
  double poisson1 = 0.0;
  double poisson2 = 0.0;
  double density1 = 0.0;
  double density2 = 0.0;

  void validate() const;
};

/// Scalar material quantities that may carry uncertainty. `poisson` is one
/// ratio shared by both phases; `poisson1`/`poisson2` split it.
enum class MaterialParameter { young1, young2, poisson, poisson1, poisson2, density1, density2 };

std::string_view to_string(MaterialParameter p);
std::optional<MaterialParameter> parse_material_parameter(std::string_view name);

double get(const PhaseMaterials& m, MaterialParameter p);
void set(PhaseMaterials& m, MaterialParameter p, double value);

/// Plane-stress (2D) or full 3D isotropic elasticity in engineering-shear
/// Voigt order (xx, yy, xy) / (xx, yy, zz, yz, xz, xy).
Matrix isotropic_elasticity(int dim, double young, double poisson);
/// ∂ⁿD/∂νⁿ for n = 1, 2 (D is linear in E, so ∂D/∂E = D/E).
Matrix isotropic_elasticity_poisson_derivative(int dim, double young, double poisson, int order);

/// (D1, D2, ρ1, ρ2) or one of their parameter derivatives.
struct PhaseTensors {
  Matrix elasticity1;
  Matrix elasticity2;
  double density1 = 0.0;
  double density2 = 0.0;
};

PhaseTensors phase_tensors(const PhaseMaterials& m, int dim);
/// First (order 1) or pure second (order 2) derivative w.r.t. p.
PhaseTensors phase_derivative(const PhaseMaterials& m, int dim, MaterialParameter p, int order);
/// Mixed second derivative ∂²/∂p∂q; nonzero only for modulus–Poisson pairs.
PhaseTensors phase_mixed_derivative(const PhaseMaterials& m, int dim, MaterialParameter p,
                                    MaterialParameter q);

}  // namespace cto
