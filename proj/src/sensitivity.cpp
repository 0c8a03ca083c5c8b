#include "cto/sensitivity.hpp"

#include "cto/error.hpp"

#include <cmath>

namespace cto {

SmoothSign smooth_sign(double f, double beta, double df) {
  require(beta > 0.0, "beta must be positive");
  const double t = std::tanh(beta * f);
  return {t, (1.0 - t * t) * beta * df};
}

namespace {

// Element pieces of aᵀ K_d(D, ρ) b for every macro element:
//   aᵀ k(D) b = <D, P_e>,  aᵀ m(1) b = m_e.
struct PairForms {
  std::vector<Matrix> strain;
  std::vector<double> mass;
};

PairForms pair_forms(const TwoScaleModel& model, const Vector& a, const Vector& b) {
  const ElementBasis& basis = model.macro_basis();
  const DofMap& map = model.macro_dofs();
  const Matrix m1 = basis.mass(1.0);
  const int ne = model.macro_grid().num_elements();
  PairForms out;
  out.strain.reserve(ne);
  out.mass.reserve(ne);
  Vector ae(basis.num_dofs()), be(basis.num_dofs());
  for (int e = 0; e < ne; ++e) {
    const auto dofs = map.element(e);
    for (int i = 0; i < basis.num_dofs(); ++i) {
      ae[i] = a[dofs[i]];
      be[i] = b[dofs[i]];
    }
    out.strain.push_back(basis.strain_product(ae, be));
    out.mass.push_back(ae.dot(m1 * be));
  }
  return out;
}

double inner(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

// Accumulates c · aᵀ (∂K_d^dir/∂x) b into the macro and micro fields, where
// "dir" is the effective response direction (value or a parameter derivative).
class FormAccumulator {
 public:
  FormAccumulator(const TwoScaleModel& model, const DesignState& state, const EffectiveMaterial& material)
      : model_(model), state_(state), material_(material), cell_(model.unit_cell(state)) {
    field_.macro.assign(state.macro.size(), 0.0);
    field_.micro.assign(state.micro.size(), 0.0);
  }

  // `strained` marks parameter directions, whose cell strains still move with
  // x_i; their contribution goes through one adjoint cell solve in take().
  void add(double c, const Vector& a, const Vector& b, const MaterialResponse& dir, bool strained = false) {
    if (c == 0.0) return;
    const PairForms f = pair_forms(model_, a, b);
    const double w2 = model_.omega() * model_.omega();
    const int nv = voigt_size(model_.dim());
    Matrix h = Matrix::Zero(nv, nv);
    double t = 0.0;
    for (std::size_t e = 0; e < state_.macro.size(); ++e) {
      const double x = state_.macro[e];
      field_.macro[e] +=
          c * (model_.stiffness_scale_derivative(x) * inner(dir.elasticity, f.strain[e]) - w2 * dir.density * f.mass[e]);
      h += model_.stiffness_scale(x) * f.strain[e];
      t += x * f.mass[e];
    }
    const double p = cell_.penalty;
    const double measure = cell_.measure();
    const double mass_term = w2 * cell_.voxel_volume() / measure * dir.phase_gap_density * t;
    for (std::size_t i = 0; i < state_.micro.size(); ++i) {
      const double scale = p * std::pow(state_.micro[i], p - 1.0) / measure;
      field_.micro[i] += c * (scale * inner(dir.voxel_energy[i], h) - mass_term);
    }
    if (strained) {
      const Matrix r = cell_residual_loads(cell_, dir.phase, material_.solution);
      if (loads_.size() == 0) loads_ = Matrix::Zero(r.rows(), r.cols());
      loads_.noalias() += c * r * (h + h.transpose());
    }
  }

  SensitivityField take() {
    if (loads_.size() != 0) {
      const std::vector<double> extra =
          cell_adjoint_sensitivity(cell_, material_.value.phase, material_.solution, loads_);
      for (std::size_t i = 0; i < extra.size(); ++i) field_.micro[i] += extra[i];
    }
    return std::move(field_);
  }

 private:
  const TwoScaleModel& model_;
  const DesignState& state_;
  const EffectiveMaterial& material_;
  UnitCell cell_;
  SensitivityField field_;
  Matrix loads_;
};

void scale(SensitivityField& f, double s) {
  for (double& v : f.macro) v *= s;
  for (double& v : f.micro) v *= s;
}

}  // namespace

SensitivityField deterministic_sensitivity(const TwoScaleModel& model, const DesignState& state,
                                           const EffectiveMaterial& material, const Vector& displacement) {
  model.validate(state);
  require(displacement.size() == model.load().size(), "displacement has the wrong size");
  FormAccumulator acc(model, state, material);
  // dC/dx = −Uᵀ (∂K_d/∂x) U, α = −(1/p) dC/dx.
  acc.add(1.0 / model.penalty(), displacement, displacement, material.value);
  return acc.take();
}

SensitivityField robust_sensitivity(const TwoScaleModel& model, const DesignState& state, const IhpaResult& ihpa,
                                    bool smooth) {
  model.validate(state);
  require(ihpa.solver != nullptr && ihpa.u0.size() == model.load().size(),
          "robust sensitivity needs the cached perturbation analysis");
  const int n = static_cast<int>(ihpa.terms.size());
  require(static_cast<int>(ihpa.u1.size()) == n && static_cast<int>(ihpa.material.first.size()) == n,
          "perturbation cache is incomplete");

  const double kappa = ihpa.objective.kappa;
  const double beta = ihpa.beta;
  auto slope = [&](double f) {
    // d/dx [f S(f)] = f′ (S + f S′)
    if (!smooth) return f > 0.0 ? 1.0 : (f < 0.0 ? -1.0 : 0.0);
    const double t = std::tanh(beta * f);
    return t + beta * f * (1.0 - t * t);
  };

  const ReducedPattern& pattern = model.pattern();
  const MaterialResponse& base = ihpa.material.value;
  const Vector& u0 = ihpa.u0;
  FormAccumulator acc(model, state, ihpa.material);

  // dc0 = −form(U0, U0; base)
  acc.add(-1.0, u0, u0, base);

  for (int j = 0; j < n; ++j) {
    const PerturbationTerms& t = ihpa.terms[j];
    const MaterialResponse& first = ihpa.material.first[j];
    const MaterialResponse& second = ihpa.material.second[j];
    const double c1 = t.mean_shift * slope(t.f1);
    const double s2 = slope(t.f2);
    const double s3 = slope(t.f3);
    // Coefficients of dg (g1 = g2) and dg3 in dC̄.
    const double cg = c1 + kappa * (t.sigma * s2 + t.std_shift * s3);
    const double cg3 = kappa * t.sigma * t.mean_shift * s3;

    // dg = −2 form(U0, U1; base) − form(U0, U0; J)
    if (cg != 0.0) {
      acc.add(-2.0 * cg, u0, ihpa.u1[j], base);
      acc.add(-cg, u0, u0, first, true);
    }
    // g3 = 2 U0ᵀA W − U0ᵀB U0 with W = K⁻¹A U0 = −U2,
    // dg3 = 2[2 form(U0, W; J) − 2 form(U0, Z; base) − form(W, W; base)]
    //       − [form(U0, U0; JJ) − 2 form(U0, Y; base)],
    // Z = K⁻¹ A W, Y = K⁻¹ B U0 = 2Z − U3.
    if (cg3 != 0.0) {
      const Vector w = -ihpa.u2[j];
      const Vector z =
          pattern.expand_vector(ihpa.solver->solve(ihpa.first_operators[j] * pattern.restrict_vector(w)));
      const Vector y = 2.0 * z - ihpa.u3[j];
      acc.add(4.0 * cg3, u0, w, first, true);
      acc.add(-4.0 * cg3, u0, z, base);
      acc.add(-2.0 * cg3, w, w, base);
      acc.add(-cg3, u0, u0, second, true);
      acc.add(2.0 * cg3, u0, y, base);
    }
  }

  SensitivityField field = acc.take();
  scale(field, -1.0 / model.penalty());
  return field;
}

SensitivityField normalize(const SensitivityField& alpha, const TwoScaleModel& model, const DesignState& state,
                           const PhaseMaterials& materials) {
  model.validate(state);
  require(alpha.macro.size() == state.macro.size() && alpha.micro.size() == state.micro.size(),
          "sensitivity fields do not match the design");
  const UnitCell cell = model.unit_cell(state);
  const double rho_h = effective_density(cell, materials.density1, materials.density2);
  const double macro_volume = model.macro_grid().element_volume();
  double solid = 0.0;
  for (double x : state.macro) solid += x * macro_volume;
  const double dm_macro = macro_volume * rho_h;
  const double dm_micro = cell.voxel_volume() / cell.measure() * (materials.density1 - materials.density2) * solid;
  if (!(dm_macro > 0.0) || !(dm_micro > 0.0)) {
    fail(ErrorCategory::invalid_argument,
         "scales not comparable: weight derivative is not positive (phase 1 must be denser than phase 2)");
  }
  SensitivityField xi;
  for (double a : alpha.macro) xi.macro.push_back(a / dm_macro);
  for (double a : alpha.micro) xi.micro.push_back(a / dm_micro);
  return xi;
}

FilterKernel::FilterKernel(const Grid& grid, double radius, bool periodic) : radius_(radius) {
  require(radius > 0.0, "filter radius must be positive");
  const int ne = grid.num_elements();
  std::array<int, 3> reach{0, 0, 0};
  std::array<double, 3> length{0, 0, 0};
  for (int d = 0; d < grid.dim; ++d) {
    reach[d] = static_cast<int>(std::ceil(radius / grid.spacing[d]));
    length[d] = grid.cells[d] * grid.spacing[d];
  }
  // Candidate indices along one axis around c.
  auto candidates = [&](int axis, int c) {
    std::vector<int> out;
    const int n = axis < grid.dim ? grid.cells[axis] : 1;
    if (axis >= grid.dim) return std::vector<int>{0};
    if (periodic && 2 * reach[axis] + 1 >= n) {
      for (int i = 0; i < n; ++i) out.push_back(i);
      return out;
    }
    for (int o = -reach[axis]; o <= reach[axis]; ++o) {
      int i = c + o;
      if (periodic) i = ((i % n) + n) % n;
      else if (i < 0 || i >= n) continue;
      out.push_back(i);
    }
    return out;
  };
  start_.push_back(0);
  for (int e = 0; e < ne; ++e) {
    const auto ce = grid.element_coords(e);
    const auto pe = grid.element_centroid(e);
    const auto xs = candidates(0, ce[0]);
    const auto ys = candidates(1, ce[1]);
    const auto zs = candidates(2, ce[2]);
    for (int k : zs) {
      for (int j : ys) {
        for (int i : xs) {
          const int f = grid.element_index(i, j, k);
          const auto pf = grid.element_centroid(f);
          double r2 = 0.0;
          for (int d = 0; d < grid.dim; ++d) {
            double dx = std::abs(pe[d] - pf[d]);
            if (periodic) dx = std::min(dx, length[d] - dx);
            r2 += dx * dx;
          }
          const double w = radius - std::sqrt(r2);
          if (w > 0.0) {
            index_.push_back(f);
            weight_.push_back(w);
          }
        }
      }
    }
    start_.push_back(static_cast<int>(index_.size()));
  }
}

std::span<const int> FilterKernel::neighbors(int e) const {
  return {index_.data() + start_[e], static_cast<std::size_t>(start_[e + 1] - start_[e])};
}

std::span<const double> FilterKernel::weights(int e) const {
  return {weight_.data() + start_[e], static_cast<std::size_t>(start_[e + 1] - start_[e])};
}

std::vector<double> FilterKernel::apply(std::span<const double> field) const {
  require(static_cast<int>(field.size()) == size(), "field size does not match the filter");
  std::vector<double> out(field.size());
  for (int e = 0; e < size(); ++e) {
    double num = 0.0;
    double den = 0.0;
    for (int s = start_[e]; s < start_[e + 1]; ++s) {
      num += weight_[s] * field[index_[s]];
      den += weight_[s];
    }
    out[e] = num / den;
  }
  return out;
}

std::vector<double> filter(std::span<const double> field, const FilterKernel& kernel) { return kernel.apply(field); }

std::vector<double> history_average(std::span<const double> current, std::span<const double> previous) {
  if (previous.empty()) return {current.begin(), current.end()};
  require(current.size() == previous.size(), "history fields differ in size");
  std::vector<double> out(current.size());
  for (std::size_t i = 0; i < current.size(); ++i) out[i] = 0.5 * (current[i] + previous[i]);
  return out;
}

}  // namespace cto
