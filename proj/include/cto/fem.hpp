#pragma once

// Structured-grid finite elements: bilinear quads (2D, plane stress, unit
// thickness) and trilinear hexahedra (3D), full 2-point Gauss integration.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <atomic>
#include <cstddef>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace cto {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Number of independent strain components (Voigt notation).
constexpr int voigt_size(int dim) { return dim == 2 ? 3 : 6; }

/// Axis-aligned structured grid of equal-sized elements.
///
/// Nodes are numbered x-fastest, then y, then z. A periodic grid identifies
/// opposite faces, so it has exactly one node per element.
struct Grid {
  int dim = 2;
  std::array<int, 3> cells{1, 1, 1};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};

  static Grid make(int dim, std::array<int, 3> cells, std::array<double, 3> spacing);

  int num_elements() const;
  int num_nodes(bool periodic = false) const;
  int num_dofs(bool periodic = false) const { return num_nodes(periodic) * dim; }
  int nodes_per_element() const { return dim == 2 ? 4 : 8; }
  int dofs_per_element() const { return nodes_per_element() * dim; }

  int node_index(int i, int j, int k = 0, bool periodic = false) const;
  int element_index(int i, int j, int k = 0) const;
  std::array<int, 3> element_coords(int e) const;
  std::array<int, 3> node_coords(int n) const;
  std::array<double, 3> element_centroid(int e) const;
  /// Area (2D, unit thickness) or volume (3D) of one element.
  double element_volume() const;
  double domain_volume() const;

  /// Global node indices of element e in local order: counter-clockwise on
  /// the bottom face (z-), then the same on the top face for hexahedra.
  std::vector<int> element_nodes(int e, bool periodic = false) const;
};

/// Element-to-global DOF table.
struct DofMap {
  int num_dofs = 0;
  int dofs_per_element = 0;
  std::vector<int> dofs;

  static DofMap build(const Grid& grid, bool periodic = false);
  int num_elements() const { return dofs_per_element ? static_cast<int>(dofs.size()) / dofs_per_element : 0; }
  std::span<const int> element(int e) const {
    return {dofs.data() + static_cast<std::size_t>(e) * dofs_per_element,
            static_cast<std::size_t>(dofs_per_element)};
  }
};

/// Gauss-point data of one reference element of the grid's size.
class ElementBasis {
 public:
  ElementBasis(int dim, std::array<double, 3> spacing);
  explicit ElementBasis(const Grid& grid) : ElementBasis(grid.dim, grid.spacing) {}

  int dim() const { return dim_; }
  int num_dofs() const { return ndof_; }
  int num_points() const { return static_cast<int>(weights_.size()); }
  /// Strain-displacement matrix at Gauss point g (voigt x ndof).
  const Matrix& strain_matrix(int g) const { return strain_[g]; }
  /// Quadrature weight times Jacobian determinant at Gauss point g.
  double weight(int g) const { return weights_[g]; }

  /// ∫ Bᵀ D B over the element.
  Matrix stiffness(const Matrix& D) const;
  /// ∫ rho Nᵀ N over the element (consistent mass).
  Matrix mass(double rho) const;
  /// ∫ (B a)(B b)ᵀ over the element, so that aᵀ k(D) b = Σ D_kl P_kl.
  Matrix strain_product(const Vector& a, const Vector& b) const;

 private:
  int dim_;
  int ndof_;
  std::vector<Matrix> strain_;
  std::vector<double> weights_;
  Matrix unit_mass_;
};

/// Element stiffness for constant elasticity D; rejects non-symmetric D.
Matrix element_stiffness(const Matrix& D, const Grid& geometry);
/// Consistent element mass; rejects negative density.
Matrix element_mass(double rho, const Grid& geometry);

struct SystemMatrices {
  SparseMatrix stiffness;
  SparseMatrix mass;
};

/// Global K and M from one (D, rho) pair per element.
SystemMatrices assemble(const Grid& grid, std::span<const Matrix> elasticity,
                        std::span<const double> density);

/// Point loads and Dirichlet DOFs on a grid.
struct Mesh {
  Grid grid;
  std::vector<int> fixed_dofs;
  std::vector<std::pair<int, double>> loads;

  Vector load_vector() const;
  void validate() const;
};

/// Sparsity pattern of a global operator restricted to free DOFs, with a
/// precomputed scatter table so repeated assemblies only touch values.
class ReducedPattern {
 public:
  ReducedPattern(const DofMap& map, std::span<const int> fixed_dofs);

  int num_free() const { return static_cast<int>(free_to_full_.size()); }
  int num_full() const { return static_cast<int>(full_to_free_.size()); }
  std::size_t num_values() const { return static_cast<std::size_t>(pattern_.nonZeros()); }

  /// values[slot] += scale * ke(i, j) for every free (i, j) of element e.
  void scatter(std::vector<double>& values, int e, const Matrix& ke, double scale) const;
  SparseMatrix matrix(std::span<const double> values) const;

  Vector restrict_vector(const Vector& full) const;
  Vector expand_vector(const Vector& reduced) const;
  std::span<const int> free_dofs() const { return free_to_full_; }
  /// Full (both triangles) pattern whose value array matches `values`.
  const SparseMatrix& pattern() const { return pattern_; }
  const DofMap& dof_map() const { return map_; }

 private:
  DofMap map_;
  std::vector<int> full_to_free_;
  std::vector<int> free_to_full_;
  SparseMatrix pattern_;
  std::vector<int> slots_;  // per element, ndof*ndof entries, -1 if constrained
};

/// Factorization of a symmetric (possibly indefinite) reduced operator.
///
/// Uses sparse LDLᵀ; a vanishing pivot is reported as a singular system
/// (resonance when the operator is K − ω²M). Every solve is checked against
/// the residual bound and retried with sparse LU if LDLᵀ was inaccurate.
class SymmetricSolver {
 public:
  static constexpr double residual_tolerance = 1e-9;

  explicit SymmetricSolver(const SparseMatrix& reduced);
  ~SymmetricSolver();
  SymmetricSolver(const SymmetricSolver&) = delete;
  SymmetricSolver& operator=(const SymmetricSolver&) = delete;

  Vector solve(const Vector& rhs) const;
  std::size_t solve_count() const { return solves_.load(); }
  int size() const { return static_cast<int>(matrix_.rows()); }

 private:
  struct Factors;
  SparseMatrix matrix_;
  std::unique_ptr<Factors> factors_;
  mutable std::atomic<std::size_t> solves_{0};
};

/// Solves K_d U = F on the full DOF space with fixed DOFs eliminated.
Vector solve(const SparseMatrix& dynamic_stiffness, const Vector& load,
             std::span<const int> fixed_dofs);

/// C = Fᵀ U.
inline double mean_compliance(const Vector& load, const Vector& displacement) {
  return load.dot(displacement);
}

/// ω = 2π f.
double angular_frequency(double hertz);

}  // namespace cto
