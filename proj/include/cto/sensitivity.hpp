#pragma once

// Sensitivity numbers α = −(1/p) ∂objective/∂x on both scales, their
// normalization by weight derivatives, and the mesh-independence filter.

#include "cto/fem.hpp"
#include "cto/model.hpp"
#include "cto/uncertainty.hpp"

#include <span>
#include <vector>

namespace cto {

struct SmoothSign {
  double value = 0.0;
  double derivative = 0.0;
};

/// tanh(βf) and its derivative (1 − tanh²(βf)) β f′.
SmoothSign smooth_sign(double f, double beta, double df = 1.0);

struct SensitivityField {
  std::vector<double> macro;
  std::vector<double> micro;
};

/// α for C = FᵀU with U solving the nominal system.
SensitivityField deterministic_sensitivity(const TwoScaleModel& model, const DesignState& state,
                                           const EffectiveMaterial& material, const Vector& displacement);

/// ᾱ for C̄ = Ē + κ S̄D of an IHPA evaluation. Signs are differentiated as
/// tanh(βf) with the evaluation's β when `smooth`, as constants otherwise.
/// Performs one extra backsolve per parameter on the shared factorization.
SensitivityField robust_sensitivity(const TwoScaleModel& model, const DesignState& state,
                                    const IhpaResult& ihpa, bool smooth = true);

/// ξ_a = α_a / (V_a ρ^H), ξ_i = α_i / ((V_i/|Y|)(ρ1 − ρ2) Σ x_a V_a).
SensitivityField normalize(const SensitivityField& alpha, const TwoScaleModel& model, const DesignState& state,
                           const PhaseMaterials& materials);

/// Centroid-distance weights max(r_min − r, 0); periodic grids use the
/// minimum-image distance.
class FilterKernel {
 public:
  FilterKernel(const Grid& grid, double radius, bool periodic);

  double radius() const { return radius_; }
  int size() const { return static_cast<int>(start_.size()) - 1; }
  std::span<const int> neighbors(int e) const;
  std::span<const double> weights(int e) const;
  std::vector<double> apply(std::span<const double> field) const;

 private:
  double radius_;
  std::vector<int> start_;
  std::vector<int> index_;
  std::vector<double> weight_;
};

std::vector<double> filter(std::span<const double> field, const FilterKernel& kernel);
/// (ζ^k + ζ^{k−1}) / 2; returns `current` when there is no previous field.
std::vector<double> history_average(std::span<const double> current, std::span<const double> previous);

}  // namespace cto
