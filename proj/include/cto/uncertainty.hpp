#pragma once

// Hybrid interval–random material parameters, the perturbation analysis that
// bounds expectation and standard deviation of the mean compliance, and a
// nested Monte Carlo reference.

#include "cto/homogenization.hpp"
#include "cto/material.hpp"
#include "cto/model.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace cto {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  static Interval point(double v) { return {v, v}; }
  double midpoint() const { return 0.5 * (lo + hi); }
  double deviation() const { return 0.5 * (hi - lo); }
  bool contains(double v) const { return lo <= v && v <= hi; }
  void validate() const;
};

/// Normal random parameter whose expectation and standard deviation are
/// only known to lie in intervals.
struct HybridParameter {
  MaterialParameter parameter = MaterialParameter::young1;
  Interval mean;
  Interval std_dev;

  void validate() const;
};

/// Ordered, independent hybrid parameters.
struct UncertainSet {
  std::vector<HybridParameter> parameters;

  int size() const { return static_cast<int>(parameters.size()); }
  void validate() const;
  std::vector<MaterialParameter> tags() const;
  /// `base` with every uncertain entry moved to the midpoint of its mean interval.
  PhaseMaterials nominal(const PhaseMaterials& base) const;
};

struct RobustObjective {
  double expectation = 0.0;  // worst-case expectation Ē
  double std_dev = 0.0;      // worst-case standard deviation S̄D
  double kappa = 1.0;
  double value = 0.0;        // Ē + κ S̄D
};

/// Sign treatment of the worst-case terms. Evaluation uses hard signs unless
/// `smooth` is set; beta = 0 selects 10 / median|f| clamped to [1, 1e4].
struct SignOptions {
  bool smooth = false;
  double beta = 0.0;
};

/// Per-parameter scalars of the expansion (all are Fᵀ times a perturbation vector).
struct PerturbationTerms {
  double g1 = 0.0, g2 = 0.0, g3 = 0.0;
  double mean_shift = 0.0;  // Δμ: half-width of the mean interval
  double std_shift = 0.0;   // Δσ: half-width of the std-dev interval
  double sigma = 0.0;       // midpoint of the std-dev interval
  double f1 = 0.0, f2 = 0.0, f3 = 0.0;  // sign arguments
  double s1 = 0.0, s2 = 0.0, s3 = 0.0;  // signs used
};

struct IhpaResult {
  RobustObjective objective;
  double deterministic = 0.0;  // Fᵀ U0
  PhaseMaterials nominal;
  EffectiveMaterial material;
  std::vector<PerturbationTerms> terms;
  double beta = 1.0;
  bool smooth = false;

  // Full-length displacement vectors.
  Vector u0;
  std::vector<Vector> u1, u2, u3;

  /// Reduced ∂K_d/∂θ_J and ∂²K_d/∂θ_J².
  std::vector<SparseMatrix> first_operators;
  std::vector<SparseMatrix> second_operators;
  /// Factorized K_d at the nominal point, shared for later adjoint solves.
  std::shared_ptr<const SymmetricSolver> solver;
  /// Linear-system applications performed by the evaluation.
  std::size_t fea_calls = 0;
};

IhpaResult ihpa_evaluate(const TwoScaleModel& model, const DesignState& state, const PhaseMaterials& base,
                         const UncertainSet& uncertain, double kappa, const SignOptions& signs = {});

/// Deterministic compliance at the given materials (one solve).
struct DeterministicResult {
  double compliance = 0.0;
  EffectiveMaterial material;
  Vector u;
  std::size_t fea_calls = 0;
};

DeterministicResult deterministic_evaluate(const TwoScaleModel& model, const DesignState& state,
                                           const PhaseMaterials& materials);

struct ParameterOperators {
  SparseMatrix first;
  SparseMatrix second;
};

/// ∂K_d/∂θ and ∂²K_d/∂θ² on free DOFs for parameter `index` of `material.parameters`.
ParameterOperators parameter_to_matrices(const TwoScaleModel& model, const DesignState& state,
                                         const EffectiveMaterial& material, int index);
/// ∂²K_d/∂θ∂θ′ on free DOFs (mixed modulus–Poisson pairs are the only nonzero ones).
SparseMatrix parameter_cross_matrix(const TwoScaleModel& model, const DesignState& state,
                                    const PhaseMaterials& materials, const EffectiveMaterial& material,
                                    MaterialParameter p, MaterialParameter q);

struct McsOptions {
  int interval_samples = 64;  // Latin-hypercube points over the (μ, σ) box
  int random_samples = 2000;  // normal draws per interval point
  std::uint64_t seed = 1;
  bool include_corners = true;  // add all 2^(2n) box corners when ≤ 4096
  int threads = 0;              // 0: hardware concurrency
};

struct McsResult {
  double max_expectation = 0.0;
  double max_std_dev = 0.0;
  int interval_points = 0;
  std::size_t fea_calls = 0;
  std::size_t resampled = 0;  // invalid draws (E ≤ 0, ρ < 0, ν ∉ (−1, 0.5))
};

/// Nested sampling reference. Every draw re-homogenizes the cell exactly.
McsResult mcs_evaluate(const TwoScaleModel& model, const DesignState& state, const PhaseMaterials& base,
                       const UncertainSet& uncertain, const McsOptions& options);

}  // namespace cto
