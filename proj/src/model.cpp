#include "cto/model.hpp"

#include "cto/error.hpp"

#include <cmath>

namespace cto {

namespace {

double void_coefficient(double xmin, double p) {
  return (xmin - std::pow(xmin, p)) / (1.0 - std::pow(xmin, p));
}

}  // namespace

double stiffness_interpolation(double x, double xmin, double penalty) {
  const double xp = std::pow(x, penalty);
  return void_coefficient(xmin, penalty) * (1.0 - xp) + xp;
}

double stiffness_interpolation_derivative(double x, double xmin, double penalty) {
  return penalty * std::pow(x, penalty - 1.0) * (1.0 - void_coefficient(xmin, penalty));
}

TwoScaleModel::TwoScaleModel(Mesh macro, Grid cell, double omega, double penalty, double xmin)
    : mesh_(std::move(macro)),
      cell_(cell),
      omega_(omega),
      penalty_(penalty),
      xmin_(xmin),
      map_(DofMap::build(mesh_.grid)),
      basis_(mesh_.grid),
      pattern_(map_, mesh_.fixed_dofs) {
  mesh_.validate();
  require(cell_.dim == mesh_.grid.dim, "unit cell and macro mesh must have the same dimension");
  require(penalty_ >= 1.0, "penalty exponent must be at least 1");
  require(xmin_ > 0.0 && xmin_ < 1.0, "x_min must lie in (0, 1)");
  require(omega_ >= 0.0, "excitation frequency must be non-negative");
  load_ = mesh_.load_vector();
}

void TwoScaleModel::validate(const DesignState& state) const {
  require(static_cast<int>(state.macro.size()) == mesh_.grid.num_elements(),
          "macro design has the wrong number of variables");
  require(static_cast<int>(state.micro.size()) == cell_.num_elements(),
          "micro design has the wrong number of variables");
  for (double x : state.macro) require(x > 0.0 && x <= 1.0, "macro design variables must lie in (0, 1]");
  for (double x : state.micro) require(x > 0.0 && x <= 1.0, "micro design variables must lie in (0, 1]");
}

UnitCell TwoScaleModel::unit_cell(const DesignState& state) const {
  return UnitCell{cell_, state.micro, penalty_};
}

std::vector<double> TwoScaleModel::dynamic_values(const DesignState& state, const Matrix& D, double rho) const {
  require(static_cast<int>(state.macro.size()) == mesh_.grid.num_elements(),
          "macro design has the wrong number of variables");
  const Matrix ke = basis_.stiffness(D);
  const Matrix me = basis_.mass(1.0);
  const double w2 = omega_ * omega_;
  std::vector<double> values(pattern_.num_values(), 0.0);
  for (int e = 0; e < mesh_.grid.num_elements(); ++e) {
    const double x = state.macro[e];
    pattern_.scatter(values, e, ke, stiffness_scale(x));
    if (w2 != 0.0 && rho != 0.0) pattern_.scatter(values, e, me, -w2 * x * rho);
  }
  return values;
}

SparseMatrix TwoScaleModel::dynamic_stiffness(const DesignState& state, const Matrix& D, double rho) const {
  return pattern_.matrix(dynamic_values(state, D, rho));
}

double TwoScaleModel::total_weight(const DesignState& state, double effective_density) const {
  double sum = 0.0;
  for (double x : state.macro) sum += x;
  return sum * mesh_.grid.element_volume() * effective_density;
}

double TwoScaleModel::reference_weight(double density1) const {
  return mesh_.grid.domain_volume() * density1;
}

AffineMacroOperator::AffineMacroOperator(const TwoScaleModel& model, const DesignState& state)
    : nv_(voigt_size(model.dim())), omega2_(model.omega() * model.omega()) {
  const ReducedPattern& pattern = model.pattern();
  const ElementBasis& basis = model.macro_basis();
  const int ne = model.macro_grid().num_elements();
  for (int k = 0; k < nv_; ++k) {
    for (int l = k; l < nv_; ++l) {
      Matrix unit = Matrix::Zero(nv_, nv_);
      unit(k, l) = unit(l, k) = 1.0;
      const Matrix ke = basis.stiffness(unit);
      std::vector<double> v(pattern.num_values(), 0.0);
      for (int e = 0; e < ne; ++e) pattern.scatter(v, e, ke, model.stiffness_scale(state.macro[e]));
      stiffness_.push_back(std::move(v));
    }
  }
  mass_.assign(pattern.num_values(), 0.0);
  const Matrix me = basis.mass(1.0);
  for (int e = 0; e < ne; ++e) pattern.scatter(mass_, e, me, state.macro[e]);
}

void AffineMacroOperator::values(const Matrix& D, double rho, std::vector<double>& out) const {
  out.assign(mass_.size(), 0.0);
  const double m = -omega2_ * rho;
  if (m != 0.0) {
    for (std::size_t s = 0; s < out.size(); ++s) out[s] = m * mass_[s];
  }
  int idx = 0;
  for (int k = 0; k < nv_; ++k) {
    for (int l = k; l < nv_; ++l, ++idx) {
      const double d = D(k, l);
      if (d == 0.0) continue;
      const std::vector<double>& b = stiffness_[idx];
      for (std::size_t s = 0; s < out.size(); ++s) out[s] += d * b[s];
    }
  }
}

}  // namespace cto
