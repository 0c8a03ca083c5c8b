#pragma once

// Small problems shared by the unit tests.

#include "cto/beso.hpp"
#include "cto/model.hpp"
#include "cto/uncertainty.hpp"

#include <random>

namespace cto::testing {

inline Mesh cantilever_mesh(int nx, int ny, double lx, double ly, double force = -1000.0) {
  Mesh m;
  m.grid = Grid::make(2, {nx, ny, 1}, {lx / nx, ly / ny, 1.0});
  for (int j = 0; j <= ny; ++j) {
    const int n = m.grid.node_index(0, j);
    m.fixed_dofs.push_back(2 * n);
    m.fixed_dofs.push_back(2 * n + 1);
  }
  m.loads.push_back({2 * m.grid.node_index(nx, ny / 2) + 1, force});
  return m;
}

inline TwoScaleModel cantilever_model(int nx, int ny, int cell, double hertz = 500.0) {
  return TwoScaleModel(cantilever_mesh(nx, ny, 3.0 * nx, 3.0 * ny), Grid::make(2, {cell, cell, 1}, {1.0, 1.0, 1.0}),
                       angular_frequency(hertz));
}

/// Steel-like phase 1 and a light phase 2, MPa and t/mm³.
inline PhaseMaterials two_phase() { return {200e3, 150e3, 0.3, 0.3, 8e-9, 8e-10}; }

/// Five hybrid parameters with relative mean half-width `mean_width` and
/// coefficient of variation in [cov_lo, cov_hi].
inline UncertainSet five_parameters(const PhaseMaterials& m, double mean_width, double cov_lo, double cov_hi) {
  UncertainSet u;
  auto add = [&](MaterialParameter p, double v) {
    u.parameters.push_back(
        {p, {v * (1 - mean_width), v * (1 + mean_width)}, {v * cov_lo, v * cov_hi}});
  };
  add(MaterialParameter::young1, m.young1);
  add(MaterialParameter::young2, m.young2);
  add(MaterialParameter::poisson, m.poisson1);
  add(MaterialParameter::density1, m.density1);
  add(MaterialParameter::density2, m.density2);
  return u;
}

/// Relaxed design with every variable drawn from [lo, 1].
inline DesignState random_design(const TwoScaleModel& model, unsigned seed, double lo = 0.4) {
  std::mt19937 g(seed);
  std::uniform_real_distribution<double> u(lo, 1.0);
  DesignState s{std::vector<double>(model.macro_grid().num_elements()),
                std::vector<double>(model.cell_grid().num_elements())};
  for (double& v : s.macro) v = u(g);
  for (double& v : s.micro) v = u(g);
  return s;
}

}  // namespace cto::testing
