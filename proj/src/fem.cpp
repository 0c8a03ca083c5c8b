#include "cto/fem.hpp"

#include "cto/error.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <string>

namespace cto {

std::string_view to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::invalid_argument: return "invalid_argument";
    case ErrorCategory::config: return "config";
    case ErrorCategory::singular: return "singular";
    case ErrorCategory::infeasible: return "infeasible";
    case ErrorCategory::io: return "io";
  }
  return "unknown";
}

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::invalid_argument: return 2;
    case ErrorCategory::config: return 3;
    case ErrorCategory::singular: return 4;
    case ErrorCategory::infeasible: return 5;
    case ErrorCategory::io: return 6;
  }
  return 1;
}

namespace {

// Natural coordinates of the local nodes, in element_nodes() order.
constexpr std::array<std::array<int, 3>, 8> kCorner{{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};

}  // namespace

// ---------------------------------------------------------------------------
// Grid

Grid Grid::make(int dim, std::array<int, 3> cells, std::array<double, 3> spacing) {
  require(dim == 2 || dim == 3, "grid dimension must be 2 or 3");
  Grid g;
  g.dim = dim;
  for (int d = 0; d < 3; ++d) {
    if (d < dim) {
      require(cells[d] >= 1, "grid needs at least one element per axis");
      require(spacing[d] > 0.0, "element size must be positive");
      g.cells[d] = cells[d];
      g.spacing[d] = spacing[d];
    } else {
      g.cells[d] = 1;
      g.spacing[d] = 1.0;  // unit thickness in 2D
    }
  }
  return g;
}

int Grid::num_elements() const {
  return dim == 2 ? cells[0] * cells[1] : cells[0] * cells[1] * cells[2];
}

int Grid::num_nodes(bool periodic) const {
  const int o = periodic ? 0 : 1;
  int n = (cells[0] + o) * (cells[1] + o);
  if (dim == 3) n *= cells[2] + o;
  return n;
}

int Grid::node_index(int i, int j, int k, bool periodic) const {
  if (periodic) {
    i %= cells[0];
    j %= cells[1];
    k = dim == 3 ? k % cells[2] : 0;
    return i + cells[0] * (j + cells[1] * k);
  }
  const int nx = cells[0] + 1;
  const int ny = cells[1] + 1;
  return i + nx * (j + ny * k);
}

int Grid::element_index(int i, int j, int k) const { return i + cells[0] * (j + cells[1] * k); }

std::array<int, 3> Grid::element_coords(int e) const {
  return {e % cells[0], (e / cells[0]) % cells[1], dim == 3 ? e / (cells[0] * cells[1]) : 0};
}

std::array<int, 3> Grid::node_coords(int n) const {
  const int nx = cells[0] + 1;
  const int ny = cells[1] + 1;
  return {n % nx, (n / nx) % ny, dim == 3 ? n / (nx * ny) : 0};
}

std::array<double, 3> Grid::element_centroid(int e) const {
  const auto c = element_coords(e);
  std::array<double, 3> x{0.0, 0.0, 0.0};
  for (int d = 0; d < dim; ++d) x[d] = (c[d] + 0.5) * spacing[d];
  return x;
}

double Grid::element_volume() const {
  return spacing[0] * spacing[1] * (dim == 3 ? spacing[2] : 1.0);
}

double Grid::domain_volume() const { return element_volume() * num_elements(); }

std::vector<int> Grid::element_nodes(int e, bool periodic) const {
  const auto c = element_coords(e);
  std::vector<int> nodes(nodes_per_element());
  for (int a = 0; a < nodes_per_element(); ++a) {
    nodes[a] = node_index(c[0] + kCorner[a][0], c[1] + kCorner[a][1], c[2] + kCorner[a][2], periodic);
  }
  return nodes;
}

DofMap DofMap::build(const Grid& grid, bool periodic) {
  DofMap map;
  map.num_dofs = grid.num_dofs(periodic);
  map.dofs_per_element = grid.dofs_per_element();
  map.dofs.reserve(static_cast<std::size_t>(grid.num_elements()) * map.dofs_per_element);
  for (int e = 0; e < grid.num_elements(); ++e) {
    for (int n : grid.element_nodes(e, periodic)) {
      for (int d = 0; d < grid.dim; ++d) map.dofs.push_back(n * grid.dim + d);
    }
  }
  return map;
}

// ---------------------------------------------------------------------------
// ElementBasis

ElementBasis::ElementBasis(int dim, std::array<double, 3> spacing) : dim_(dim) {
  require(dim == 2 || dim == 3, "element dimension must be 2 or 3");
  const int nodes = dim == 2 ? 4 : 8;
  const int nv = voigt_size(dim);
  ndof_ = nodes * dim;
  const double g = 1.0 / std::sqrt(3.0);
  double det = 1.0;
  for (int d = 0; d < dim; ++d) det *= 0.5 * spacing[d];

  unit_mass_ = Matrix::Zero(ndof_, ndof_);
  const int npts = dim == 2 ? 4 : 8;
  for (int q = 0; q < npts; ++q) {
    const std::array<double, 3> xi{kCorner[q][0] ? g : -g, kCorner[q][1] ? g : -g,
                                   kCorner[q][2] ? g : -g};
    Vector shape(nodes);
    Matrix grad(dim, nodes);  // physical gradient
    for (int a = 0; a < nodes; ++a) {
      std::array<double, 3> s{};
      std::array<double, 3> f{};
      for (int d = 0; d < 3; ++d) {
        s[d] = kCorner[a][d] ? 1.0 : -1.0;
        f[d] = d < dim ? 0.5 * (1.0 + s[d] * xi[d]) : 1.0;
      }
      shape[a] = f[0] * f[1] * f[2];
      for (int d = 0; d < dim; ++d) {
        double dn = 0.5 * s[d];
        for (int o = 0; o < dim; ++o) {
          if (o != d) dn *= f[o];
        }
        grad(d, a) = dn * 2.0 / spacing[d];
      }
    }

    Matrix B = Matrix::Zero(nv, ndof_);
    for (int a = 0; a < nodes; ++a) {
      const int c = a * dim;
      if (dim == 2) {
        B(0, c) = grad(0, a);
        B(1, c + 1) = grad(1, a);
        B(2, c) = grad(1, a);
        B(2, c + 1) = grad(0, a);
      } else {
        B(0, c) = grad(0, a);
        B(1, c + 1) = grad(1, a);
        B(2, c + 2) = grad(2, a);
        B(3, c + 1) = grad(2, a);
        B(3, c + 2) = grad(1, a);
        B(4, c) = grad(2, a);
        B(4, c + 2) = grad(0, a);
        B(5, c) = grad(1, a);
        B(5, c + 1) = grad(0, a);
      }
    }
    strain_.push_back(std::move(B));
    weights_.push_back(det);

    for (int a = 0; a < nodes; ++a) {
      for (int b = 0; b < nodes; ++b) {
        for (int d = 0; d < dim; ++d) unit_mass_(a * dim + d, b * dim + d) += det * shape[a] * shape[b];
      }
    }
  }
}

Matrix ElementBasis::stiffness(const Matrix& D) const {
  Matrix k = Matrix::Zero(ndof_, ndof_);
  for (int g = 0; g < num_points(); ++g) {
    k.noalias() += weights_[g] * strain_[g].transpose() * D * strain_[g];
  }
  return 0.5 * (k + k.transpose());
}

Matrix ElementBasis::mass(double rho) const { return rho * unit_mass_; }

Matrix ElementBasis::strain_product(const Vector& a, const Vector& b) const {
  const int nv = voigt_size(dim_);
  Matrix p = Matrix::Zero(nv, nv);
  for (int g = 0; g < num_points(); ++g) {
    p.noalias() += weights_[g] * (strain_[g] * a) * (strain_[g] * b).transpose();
  }
  return p;
}

namespace {

void check_elasticity(const Matrix& D, int dim) {
  const int nv = voigt_size(dim);
  require(D.rows() == nv && D.cols() == nv, "elasticity matrix has the wrong size for dimension " +
                                                std::to_string(dim));
  const double scale = std::max(1.0, D.cwiseAbs().maxCoeff());
  require((D - D.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
          "elasticity matrix must be symmetric");
}

}  // namespace

Matrix element_stiffness(const Matrix& D, const Grid& geometry) {
  check_elasticity(D, geometry.dim);
  return ElementBasis(geometry).stiffness(D);
}

Matrix element_mass(double rho, const Grid& geometry) {
  require(rho >= 0.0, "density must be non-negative");
  return ElementBasis(geometry).mass(rho);
}

SystemMatrices assemble(const Grid& grid, std::span<const Matrix> elasticity,
                        std::span<const double> density) {
  const auto ne = static_cast<std::size_t>(grid.num_elements());
  require(elasticity.size() == ne && density.size() == ne,
          "assemble needs one elasticity matrix and one density per element");
  const ElementBasis basis(grid);
  const DofMap map = DofMap::build(grid);
  std::vector<Eigen::Triplet<double>> kt;
  std::vector<Eigen::Triplet<double>> mt;
  const int nd = map.dofs_per_element;
  kt.reserve(ne * nd * nd);
  mt.reserve(ne * nd * nd);
  for (std::size_t e = 0; e < ne; ++e) {
    check_elasticity(elasticity[e], grid.dim);
    require(density[e] >= 0.0, "density must be non-negative");
    const Matrix ke = basis.stiffness(elasticity[e]);
    const Matrix me = basis.mass(density[e]);
    const auto dofs = map.element(static_cast<int>(e));
    for (int i = 0; i < nd; ++i) {
      for (int j = 0; j < nd; ++j) {
        kt.emplace_back(dofs[i], dofs[j], ke(i, j));
        mt.emplace_back(dofs[i], dofs[j], me(i, j));
      }
    }
  }
  SystemMatrices out{SparseMatrix(map.num_dofs, map.num_dofs), SparseMatrix(map.num_dofs, map.num_dofs)};
  out.stiffness.setFromTriplets(kt.begin(), kt.end());
  out.mass.setFromTriplets(mt.begin(), mt.end());
  return out;
}

// ---------------------------------------------------------------------------
// Mesh

Vector Mesh::load_vector() const {
  Vector f = Vector::Zero(grid.num_dofs());
  for (const auto& [dof, amplitude] : loads) f[dof] += amplitude;
  return f;
}

void Mesh::validate() const {
  require(!fixed_dofs.empty(), "at least one DOF must be fixed to remove rigid-body modes");
  const int n = grid.num_dofs();
  for (int d : fixed_dofs) require(d >= 0 && d < n, "fixed DOF index out of range");
  for (const auto& [d, a] : loads) {
    require(d >= 0 && d < n, "load DOF index out of range");
    require(std::isfinite(a), "load amplitude must be finite");
  }
}

// ---------------------------------------------------------------------------
// ReducedPattern

ReducedPattern::ReducedPattern(const DofMap& map, std::span<const int> fixed_dofs) : map_(map) {
  full_to_free_.assign(map.num_dofs, 0);
  for (int d : fixed_dofs) {
    require(d >= 0 && d < map.num_dofs, "fixed DOF index out of range");
    full_to_free_[d] = -1;
  }
  for (int d = 0; d < map.num_dofs; ++d) {
    if (full_to_free_[d] >= 0) {
      full_to_free_[d] = static_cast<int>(free_to_full_.size());
      free_to_full_.push_back(d);
    }
  }

  const int nd = map.dofs_per_element;
  const int ne = map.num_elements();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(ne) * nd * nd);
  for (int e = 0; e < ne; ++e) {
    const auto dofs = map.element(e);
    for (int i = 0; i < nd; ++i) {
      const int r = full_to_free_[dofs[i]];
      if (r < 0) continue;
      for (int j = 0; j < nd; ++j) {
        const int c = full_to_free_[dofs[j]];
        if (c >= 0) trip.emplace_back(r, c, 1.0);
      }
    }
  }
  pattern_.resize(num_free(), num_free());
  pattern_.setFromTriplets(trip.begin(), trip.end());
  pattern_.makeCompressed();

  slots_.assign(static_cast<std::size_t>(ne) * nd * nd, -1);
  const int* outer = pattern_.outerIndexPtr();
  const int* inner = pattern_.innerIndexPtr();
  for (int e = 0; e < ne; ++e) {
    const auto dofs = map.element(e);
    for (int i = 0; i < nd; ++i) {
      const int r = full_to_free_[dofs[i]];
      if (r < 0) continue;
      for (int j = 0; j < nd; ++j) {
        const int c = full_to_free_[dofs[j]];
        if (c < 0) continue;
        const int* pos = std::lower_bound(inner + outer[c], inner + outer[c + 1], r);
        slots_[(static_cast<std::size_t>(e) * nd + i) * nd + j] = static_cast<int>(pos - inner);
      }
    }
  }
}

void ReducedPattern::scatter(std::vector<double>& values, int e, const Matrix& ke, double scale) const {
  const int nd = map_.dofs_per_element;
  const int* slot = slots_.data() + static_cast<std::size_t>(e) * nd * nd;
  for (int i = 0; i < nd; ++i) {
    for (int j = 0; j < nd; ++j) {
      const int s = slot[i * nd + j];
      if (s >= 0) values[s] += scale * ke(i, j);
    }
  }
}

SparseMatrix ReducedPattern::matrix(std::span<const double> values) const {
  require(values.size() == num_values(), "value array does not match the sparsity pattern");
  SparseMatrix m = pattern_;
  std::copy(values.begin(), values.end(), m.valuePtr());
  return m;
}

Vector ReducedPattern::restrict_vector(const Vector& full) const {
  Vector r(num_free());
  for (int i = 0; i < num_free(); ++i) r[i] = full[free_to_full_[i]];
  return r;
}

Vector ReducedPattern::expand_vector(const Vector& reduced) const {
  Vector f = Vector::Zero(num_full());
  for (int i = 0; i < num_free(); ++i) f[free_to_full_[i]] = reduced[i];
  return f;
}

// ---------------------------------------------------------------------------
// SymmetricSolver

struct SymmetricSolver::Factors {
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt;
  bool ldlt_ok = false;
  std::once_flag lu_once;
  std::unique_ptr<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>> lu;
  bool lu_ok = false;
};

SymmetricSolver::SymmetricSolver(const SparseMatrix& reduced)
    : matrix_(reduced), factors_(std::make_unique<Factors>()) {
  require(reduced.rows() == reduced.cols(), "system matrix must be square");
  matrix_.makeCompressed();
  if (matrix_.rows() == 0) {
    factors_->ldlt_ok = true;
    return;
  }
  factors_->ldlt.compute(matrix_);
  if (factors_->ldlt.info() == Eigen::Success) {
    const Vector d = factors_->ldlt.vectorD().cwiseAbs();
    const double dmax = d.maxCoeff();
    const double dmin = d.minCoeff();
    if (!(std::isfinite(dmax) && dmax > 0.0)) {
      fail(ErrorCategory::singular, "system matrix is zero or not finite");
    }
    if (dmin <= 1e-13 * dmax) {
      fail(ErrorCategory::singular,
           "singular dynamic stiffness (excitation at a resonance or unconstrained structure)");
    }
    factors_->ldlt_ok = true;
  }
}

SymmetricSolver::~SymmetricSolver() = default;

Vector SymmetricSolver::solve(const Vector& rhs) const {
  require(rhs.size() == matrix_.rows(), "right-hand side has the wrong size");
  ++solves_;
  const double bnorm = rhs.norm();
  if (bnorm == 0.0) return Vector::Zero(rhs.size());
  auto accurate = [&](const Vector& x) {
    return x.allFinite() && (matrix_ * x - rhs).norm() <= residual_tolerance * bnorm;
  };
  if (factors_->ldlt_ok) {
    Vector x = factors_->ldlt.solve(rhs);
    if (accurate(x)) return x;
  }
  std::call_once(factors_->lu_once, [this] {
    factors_->lu = std::make_unique<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>>();
    factors_->lu->compute(matrix_);
    factors_->lu_ok = factors_->lu->info() == Eigen::Success;
  });
  if (factors_->lu_ok) {
    Vector x = factors_->lu->solve(rhs);
    if (accurate(x)) return x;
  }
  fail(ErrorCategory::singular,
       "linear solve did not reach the residual bound; the dynamic stiffness is singular or "
       "ill-conditioned (resonance)");
}

Vector solve(const SparseMatrix& dynamic_stiffness, const Vector& load, std::span<const int> fixed_dofs) {
  const int n = static_cast<int>(dynamic_stiffness.rows());
  require(dynamic_stiffness.cols() == n && load.size() == n, "system and load sizes differ");
  std::vector<int> map(n, 0);
  for (int d : fixed_dofs) {
    require(d >= 0 && d < n, "fixed DOF index out of range");
    map[d] = -1;
  }
  int nf = 0;
  for (int d = 0; d < n; ++d) {
    if (map[d] >= 0) map[d] = nf++;
  }
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(dynamic_stiffness.nonZeros()));
  for (int c = 0; c < dynamic_stiffness.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(dynamic_stiffness, c); it; ++it) {
      const int r = map[it.row()];
      const int cc = map[it.col()];
      if (r >= 0 && cc >= 0) trip.emplace_back(r, cc, it.value());
    }
  }
  SparseMatrix reduced(nf, nf);
  reduced.setFromTriplets(trip.begin(), trip.end());
  Vector rhs(nf);
  for (int d = 0; d < n; ++d) {
    if (map[d] >= 0) rhs[map[d]] = load[d];
  }
  const SymmetricSolver solver(reduced);
  const Vector x = solver.solve(rhs);
  Vector u = Vector::Zero(n);
  for (int d = 0; d < n; ++d) {
    if (map[d] >= 0) u[d] = x[map[d]];
  }
  return u;
}

double angular_frequency(double hertz) {
  require(std::isfinite(hertz) && hertz >= 0.0, "excitation frequency must be non-negative");
  return 2.0 * std::numbers::pi * hertz;
}

}  // namespace cto
