#include "cto/homogenization.hpp"

#include "cto/error.hpp"

#include <cmath>

namespace cto {

void UnitCell::validate() const {
  require(static_cast<int>(x.size()) == grid.num_elements(),
          "unit cell needs one design variable per voxel");
  require(penalty >= 1.0, "penalty exponent must be at least 1");
  for (double v : x) require(v > 0.0 && v <= 1.0, "micro design variables must lie in (0, 1]");
}

CellSolution::CellSolution(const Grid& grid, std::vector<Vector> fluctuations)
    : dim_(grid.dim), num_elements_(grid.num_elements()), fluctuations_(std::move(fluctuations)) {
  const ElementBasis basis(grid);
  const DofMap map = DofMap::build(grid, true);
  const int nv = voigt_size(dim_);
  require(static_cast<int>(fluctuations_.size()) == nv, "one fluctuation field per test strain expected");
  num_points_ = basis.num_points();
  for (int g = 0; g < num_points_; ++g) weights_.push_back(basis.weight(g));
  gaps_.reserve(static_cast<std::size_t>(num_elements_) * num_points_);
  Matrix chi(basis.num_dofs(), nv);
  for (int e = 0; e < num_elements_; ++e) {
    const auto dofs = map.element(e);
    for (int m = 0; m < nv; ++m) {
      for (int i = 0; i < basis.num_dofs(); ++i) chi(i, m) = fluctuations_[m][dofs[i]];
    }
    for (int g = 0; g < num_points_; ++g) {
      gaps_.push_back(Matrix::Identity(nv, nv) - basis.strain_matrix(g) * chi);
    }
  }
}

Matrix CellSolution::induced_strain(int e, int g) const {
  const int nv = voigt_size(dim_);
  return Matrix::Identity(nv, nv) - gap(e, g);
}

Matrix CellSolution::energy(int e, const Matrix& D) const {
  const int nv = voigt_size(dim_);
  Matrix q = Matrix::Zero(nv, nv);
  for (int g = 0; g < num_points_; ++g) {
    const Matrix& a = gap(e, g);
    q.noalias() += weights_[g] * a.transpose() * D * a;
  }
  return q;
}

namespace {

struct CellSystem {
  ElementBasis basis;
  DofMap map;
  ReducedPattern pattern;
  std::vector<double> values;
};

// Periodic cell stiffness with node 0 pinned.
CellSystem cell_system(const UnitCell& cell, const Matrix& elasticity1, const Matrix& elasticity2) {
  const Grid& grid = cell.grid;
  const ElementBasis basis(grid);
  const DofMap map = DofMap::build(grid, true);
  std::vector<int> pinned;
  for (int d = 0; d < grid.dim; ++d) pinned.push_back(d);
  CellSystem sys{basis, map, ReducedPattern(map, pinned), {}};
  sys.values.assign(sys.pattern.num_values(), 0.0);
  const Matrix k1 = basis.stiffness(elasticity1);
  const Matrix k2 = basis.stiffness(elasticity2);
  for (int e = 0; e < grid.num_elements(); ++e) {
    const double w1 = std::pow(cell.x[e], cell.penalty);
    sys.pattern.scatter(sys.values, e, k1, w1);
    sys.pattern.scatter(sys.values, e, k2, 1.0 - w1);
  }
  return sys;
}

}  // namespace

CellSolution solve_cell_problems(const UnitCell& cell, const Matrix& elasticity1, const Matrix& elasticity2) {
  cell.validate();
  const Grid& grid = cell.grid;
  const int nv = voigt_size(grid.dim);
  require(elasticity1.rows() == nv && elasticity2.rows() == nv, "phase elasticity has the wrong size");
  if (elasticity1.cwiseAbs().maxCoeff() == 0.0 && elasticity2.cwiseAbs().maxCoeff() == 0.0) {
    fail(ErrorCategory::singular, "unit cell has no stiffness (all-void cell)");
  }

  const CellSystem sys = cell_system(cell, elasticity1, elasticity2);
  const ElementBasis& basis = sys.basis;
  // ∫ Bᵀ D ε0 for every test strain (columns).
  Matrix f1 = Matrix::Zero(basis.num_dofs(), nv);
  Matrix f2 = Matrix::Zero(basis.num_dofs(), nv);
  for (int g = 0; g < basis.num_points(); ++g) {
    f1.noalias() += basis.weight(g) * basis.strain_matrix(g).transpose() * elasticity1;
    f2.noalias() += basis.weight(g) * basis.strain_matrix(g).transpose() * elasticity2;
  }
  Matrix rhs = Matrix::Zero(sys.map.num_dofs, nv);
  for (int e = 0; e < grid.num_elements(); ++e) {
    const double w1 = std::pow(cell.x[e], cell.penalty);
    const auto dofs = sys.map.element(e);
    for (int i = 0; i < basis.num_dofs(); ++i) rhs.row(dofs[i]) += w1 * f1.row(i) + (1.0 - w1) * f2.row(i);
  }

  const SymmetricSolver solver(sys.pattern.matrix(sys.values));
  std::vector<Vector> chi;
  chi.reserve(nv);
  for (int m = 0; m < nv; ++m) {
    chi.push_back(sys.pattern.expand_vector(solver.solve(sys.pattern.restrict_vector(rhs.col(m)))));
  }
  return CellSolution(grid, std::move(chi));
}

Matrix cell_residual_loads(const UnitCell& cell, const PhaseTensors& direction, const CellSolution& solution) {
  const Grid& grid = cell.grid;
  const int nv = voigt_size(grid.dim);
  const ElementBasis basis(grid);
  const DofMap map = DofMap::build(grid, true);
  const Matrix gap_d = direction.elasticity1 - direction.elasticity2;
  Matrix out = Matrix::Zero(map.num_dofs, nv);
  Matrix fe(basis.num_dofs(), nv);
  for (int e = 0; e < grid.num_elements(); ++e) {
    const Matrix d = direction.elasticity2 + std::pow(cell.x[e], cell.penalty) * gap_d;
    fe.setZero();
    for (int g = 0; g < basis.num_points(); ++g) {
      fe.noalias() += basis.weight(g) * basis.strain_matrix(g).transpose() * d * solution.gap(e, g);
    }
    const auto dofs = map.element(e);
    for (int i = 0; i < basis.num_dofs(); ++i) out.row(dofs[i]) += fe.row(i);
  }
  return out;
}

std::vector<double> cell_adjoint_sensitivity(const UnitCell& cell, const PhaseTensors& base,
                                             const CellSolution& solution, const Matrix& loads) {
  const Grid& grid = cell.grid;
  const int nv = voigt_size(grid.dim);
  const CellSystem sys = cell_system(cell, base.elasticity1, base.elasticity2);
  require(loads.rows() == sys.map.num_dofs && loads.cols() == nv, "adjoint loads have the wrong shape");
  const SymmetricSolver solver(sys.pattern.matrix(sys.values));
  Matrix lambda(sys.map.num_dofs, nv);
  for (int m = 0; m < nv; ++m) {
    lambda.col(m) = sys.pattern.expand_vector(solver.solve(sys.pattern.restrict_vector(loads.col(m))));
  }
  const ElementBasis& basis = sys.basis;
  const Matrix delta = base.elasticity1 - base.elasticity2;
  std::vector<double> out(grid.num_elements());
  Matrix le(basis.num_dofs(), nv);
  for (int e = 0; e < grid.num_elements(); ++e) {
    const auto dofs = sys.map.element(e);
    for (int i = 0; i < basis.num_dofs(); ++i) le.row(i) = lambda.row(dofs[i]);
    double sum = 0.0;
    for (int g = 0; g < basis.num_points(); ++g) {
      sum += basis.weight(g) * ((basis.strain_matrix(g) * le).transpose() * delta * solution.gap(e, g)).trace();
    }
    out[e] = -cell.penalty * std::pow(cell.x[e], cell.penalty - 1.0) / cell.measure() * sum;
  }
  return out;
}

double effective_density(const UnitCell& cell, double density1, double density2) {
  double sum = 0.0;
  for (double x : cell.x) sum += x * density1 + (1.0 - x) * density2;
  return sum * cell.voxel_volume() / cell.measure();
}

MaterialResponse material_response(const UnitCell& cell, const PhaseTensors& direction,
                                   const CellSolution& solution) {
  const int nv = voigt_size(cell.grid.dim);
  MaterialResponse r;
  r.phase_gap_elasticity = direction.elasticity1 - direction.elasticity2;
  r.phase_gap_density = direction.density1 - direction.density2;
  r.phase = direction;
  r.elasticity = Matrix::Zero(nv, nv);
  r.voxel_energy.reserve(cell.x.size());
  const bool phase2_zero = direction.elasticity2.cwiseAbs().maxCoeff() == 0.0;
  for (int e = 0; e < static_cast<int>(cell.x.size()); ++e) {
    Matrix gap_energy = solution.energy(e, r.phase_gap_elasticity);
    const double w = std::pow(cell.x[e], cell.penalty);
    // x^p D1 + (1 − x^p) D2 = D2 + x^p (D1 − D2)
    r.elasticity += w * gap_energy;
    if (!phase2_zero) r.elasticity += solution.energy(e, direction.elasticity2);
    r.voxel_energy.push_back(std::move(gap_energy));
  }
  r.elasticity /= cell.measure();
  r.elasticity = 0.5 * (r.elasticity + r.elasticity.transpose()).eval();
  r.density = effective_density(cell, direction.density1, direction.density2);
  return r;
}

Matrix effective_elasticity(const UnitCell& cell, const Matrix& elasticity1, const Matrix& elasticity2,
                            const CellSolution& solution) {
  require(solution.num_elements() == cell.grid.num_elements(), "cell solution does not match the cell");
  const int nv = voigt_size(cell.grid.dim);
  Matrix D = Matrix::Zero(nv, nv);
  for (int e = 0; e < cell.grid.num_elements(); ++e) {
    const double w = std::pow(cell.x[e], cell.penalty);
    D += solution.energy(e, w * elasticity1 + (1.0 - w) * elasticity2);
  }
  D /= cell.measure();
  return 0.5 * (D + D.transpose());
}

EffectiveDerivative effective_parameter_derivative(const UnitCell& cell, const PhaseMaterials& materials,
                                                   MaterialParameter parameter, int order,
                                                   const CellSolution& solution) {
  const PhaseTensors t = phase_derivative(materials, cell.grid.dim, parameter, order);
  return {effective_density(cell, t.density1, t.density2),
          effective_elasticity(cell, t.elasticity1, t.elasticity2, solution)};
}

EffectiveDerivative effective_voxel_derivative(const UnitCell& cell, const PhaseMaterials& materials,
                                               int voxel, const CellSolution& solution) {
  require(voxel >= 0 && voxel < cell.grid.num_elements(), "voxel index out of range");
  const PhaseTensors t = phase_tensors(materials, cell.grid.dim);
  const double scale = cell.penalty * std::pow(cell.x[voxel], cell.penalty - 1.0) / cell.measure();
  return {cell.voxel_volume() * (t.density1 - t.density2) / cell.measure(),
          scale * solution.energy(voxel, t.elasticity1 - t.elasticity2)};
}

EffectiveMaterial homogenize(const UnitCell& cell, const PhaseMaterials& materials,
                             std::span<const MaterialParameter> parameters) {
  materials.validate();
  const int dim = cell.grid.dim;
  const PhaseTensors base = phase_tensors(materials, dim);
  EffectiveMaterial out;
  out.solution = solve_cell_problems(cell, base.elasticity1, base.elasticity2);
  out.value = material_response(cell, base, out.solution);
  out.parameters.assign(parameters.begin(), parameters.end());
  for (MaterialParameter p : parameters) {
    out.first.push_back(material_response(cell, phase_derivative(materials, dim, p, 1), out.solution));
    out.second.push_back(material_response(cell, phase_derivative(materials, dim, p, 2), out.solution));
  }
  return out;
}

}  // namespace cto
