#pragma once

// Two-scale model: a macro mesh whose every element is made of the same
// homogenized unit cell.
//
// Macro interpolation (x_a ∈ (0, 1]):
//   K_a = s(x_a) k(D^H),  s(x) = c (1 − x^p) + x^p,  c = (x_min − x_min^p)/(1 − x_min^p)
//   M_a = x_a m(ρ^H)
// so s(x_min) = x_min and s(1) = 1.

#include "cto/fem.hpp"
#include "cto/homogenization.hpp"

#include <span>
#include <vector>

namespace cto {

double stiffness_interpolation(double x, double xmin, double penalty);
double stiffness_interpolation_derivative(double x, double xmin, double penalty);

/// Macro and micro design variables.
struct DesignState {
  std::vector<double> macro;
  std::vector<double> micro;

  bool operator==(const DesignState&) const = default;
};

class TwoScaleModel {
 public:
  TwoScaleModel(Mesh macro, Grid cell, double omega, double penalty = 3.0, double xmin = 1e-6);

  const Mesh& macro_mesh() const { return mesh_; }
  const Grid& macro_grid() const { return mesh_.grid; }
  const Grid& cell_grid() const { return cell_; }
  const ElementBasis& macro_basis() const { return basis_; }
  const DofMap& macro_dofs() const { return map_; }
  const ReducedPattern& pattern() const { return pattern_; }
  /// Full-length load vector.
  const Vector& load() const { return load_; }

  double omega() const { return omega_; }
  double penalty() const { return penalty_; }
  double xmin() const { return xmin_; }
  int dim() const { return mesh_.grid.dim; }

  double stiffness_scale(double x) const { return stiffness_interpolation(x, xmin_, penalty_); }
  double stiffness_scale_derivative(double x) const {
    return stiffness_interpolation_derivative(x, xmin_, penalty_);
  }

  /// Sizes match and every variable lies in (0, 1].
  void validate(const DesignState& state) const;
  UnitCell unit_cell(const DesignState& state) const;

  /// Value array (on `pattern()`) of Σ s(x_a) k(D) − ω² Σ x_a m(ρ).
  /// Linear in (D, ρ), so derivative directions use the same call.
  std::vector<double> dynamic_values(const DesignState& state, const Matrix& D, double rho) const;
  SparseMatrix dynamic_stiffness(const DesignState& state, const Matrix& D, double rho) const;

  /// m = Σ x_a V_a ρ^H.
  double total_weight(const DesignState& state, double effective_density) const;
  /// m0 = Σ V_a ρ1.
  double reference_weight(double density1) const;

 private:
  Mesh mesh_;
  Grid cell_;
  double omega_;
  double penalty_;
  double xmin_;
  DofMap map_;
  ElementBasis basis_;
  ReducedPattern pattern_;
  Vector load_;
};

/// Macro operator for a fixed design, stored as one value array per
/// independent elasticity entry plus one for mass:
///   K_d(D, ρ) = Σ_{k≤l} D_kl K_kl − ω² ρ M.
/// Assembly for a new (D, ρ) is then a handful of axpys.
class AffineMacroOperator {
 public:
  AffineMacroOperator(const TwoScaleModel& model, const DesignState& state);

  void values(const Matrix& D, double rho, std::vector<double>& out) const;

 private:
  int nv_;
  double omega2_;
  std::vector<std::vector<double>> stiffness_;  // upper-triangle (k, l) order
  std::vector<double> mass_;
};

}  // namespace cto
