#pragma once

// Numerical homogenization of a two-phase periodic unit cell.
//
// The cell problems are solved for the unit test strains with periodic
// boundary conditions (opposite faces share nodes, one node pinned). Effective
// properties and their derivatives are evaluated as energy integrals of the
// strain gap (ε0 − ε). Parameter and voxel derivatives hold the local strain
// fields fixed.

#include "cto/fem.hpp"
#include "cto/material.hpp"

#include <span>
#include <vector>

namespace cto {

/// Periodic unit cell with one discrete design variable per voxel.
/// x = 1 is phase 1, x = x_min is phase 2.
struct UnitCell {
  Grid grid;
  std::vector<double> x;
  double penalty = 3.0;

  double measure() const { return grid.domain_volume(); }
  double voxel_volume() const { return grid.element_volume(); }
  void validate() const;
};

/// Strain gaps ε0 − ε of every Gauss point for all test strains.
class CellSolution {
 public:
  CellSolution() = default;
  CellSolution(const Grid& grid, std::vector<Vector> fluctuations);

  int dim() const { return dim_; }
  int num_elements() const { return num_elements_; }
  int num_points() const { return num_points_; }

  /// Column m holds ε0^m − ε^m at Gauss point g of element e.
  const Matrix& gap(int e, int g) const { return gaps_[static_cast<std::size_t>(e) * num_points_ + g]; }
  /// Induced (fluctuation) strain ε at a Gauss point, one column per test strain.
  Matrix induced_strain(int e, int g) const;
  /// ∫_e (ε0 − ε)ᵀ D (ε0 − ε) dY, indexed by test-strain pairs.
  Matrix energy(int e, const Matrix& D) const;
  /// Periodic fluctuation displacements χ^m, one per test strain.
  const std::vector<Vector>& fluctuations() const { return fluctuations_; }

 private:
  int dim_ = 2;
  int num_elements_ = 0;
  int num_points_ = 0;
  std::vector<double> weights_;
  std::vector<Matrix> gaps_;
  std::vector<Vector> fluctuations_;
};

CellSolution solve_cell_problems(const UnitCell& cell, const Matrix& elasticity1, const Matrix& elasticity2);

/// Σ_e ∫ Bᵀ D_e^dir (ε0 − ε) dY per test strain (columns) on the periodic
/// cell DOFs. Zero in the base direction, where the cell problems hold.
Matrix cell_residual_loads(const UnitCell& cell, const PhaseTensors& direction, const CellSolution& solution);

/// Strain-response part of a voxel derivative. With Λ = K_c⁻¹ L,
/// returns −(p x_i^{p−1}/|Y|) Σ_n ∫_i (B Λ^n)ᵀ (D1 − D2) (ε0 − ε)^n per voxel.
/// This is what the fixed-strain voxel derivative of a parameter-direction
/// response misses.
std::vector<double> cell_adjoint_sensitivity(const UnitCell& cell, const PhaseTensors& base,
                                             const CellSolution& solution, const Matrix& loads);

/// ρ^H = (1/|Y|) Σ V_i [x_i ρ1 + (1 − x_i) ρ2].
double effective_density(const UnitCell& cell, double density1, double density2);

/// D^H = (1/|Y|) Σ ∫ (ε0 − ε)ᵀ [x^p D1 + (1 − x^p) D2] (ε0 − ε) dY.
Matrix effective_elasticity(const UnitCell& cell, const Matrix& elasticity1, const Matrix& elasticity2,
                            const CellSolution& solution);

struct EffectiveDerivative {
  double density = 0.0;
  Matrix elasticity;
};

/// ∂(ρ^H, D^H)/∂θ (order 1) or ∂²/∂θ² (order 2).
EffectiveDerivative effective_parameter_derivative(const UnitCell& cell, const PhaseMaterials& materials,
                                                   MaterialParameter parameter, int order,
                                                   const CellSolution& solution);

/// ∂(ρ^H, D^H)/∂x_i for voxel i.
EffectiveDerivative effective_voxel_derivative(const UnitCell& cell, const PhaseMaterials& materials,
                                               int voxel, const CellSolution& solution);

/// Effective response for one "direction" of the phase properties: the
/// values themselves or one of their parameter derivatives.
struct MaterialResponse {
  Matrix elasticity;            // D^H in this direction
  double density = 0.0;         // ρ^H in this direction
  Matrix phase_gap_elasticity;  // D1 − D2 in this direction
  double phase_gap_density = 0.0;
  PhaseTensors phase;           // the phase properties in this direction
  /// ∫_i (ε0 − ε)ᵀ (D1 − D2) (ε0 − ε) dY per voxel, this direction.
  std::vector<Matrix> voxel_energy;
};

MaterialResponse material_response(const UnitCell& cell, const PhaseTensors& direction,
                                   const CellSolution& solution);

/// Effective material at a parameter point with first and pure second
/// derivatives for the listed uncertain parameters.
struct EffectiveMaterial {
  MaterialResponse value;
  std::vector<MaterialParameter> parameters;
  std::vector<MaterialResponse> first;
  std::vector<MaterialResponse> second;
  CellSolution solution;
};

EffectiveMaterial homogenize(const UnitCell& cell, const PhaseMaterials& materials,
                             std::span<const MaterialParameter> parameters = {});

}  // namespace cto
