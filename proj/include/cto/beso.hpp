#pragma once

// Concurrent BESO: both scales share one weight budget and one ranking of
// mass-normalized sensitivity numbers.

#include "cto/model.hpp"
#include "cto/sensitivity.hpp"
#include "cto/uncertainty.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace cto {

enum class Mode { dcto, rcto };

std::string_view to_string(Mode mode);
std::optional<Mode> parse_mode(std::string_view name);

struct OptimizerSettings {
  double target_weight = 0.5;   // W*
  double evolution_ratio = 0.02;
  double kappa = 1.0;
  double tolerance = 1e-3;      // τ
  int history_window = 5;       // N
  int max_iterations = 200;
  double macro_filter_radius = 0.0;  // 0: three macro element sides
  double micro_filter_radius = 0.0;  // 0: three voxel sides
  double flip_cap = 0.05;       // fraction of elements per scale that may change per update
  double beta = 0.0;            // 0: automatic
  double seed_fraction = 0.05;  // phase-2 inclusion in the initial cell

  void validate() const;
};

struct Problem {
  TwoScaleModel model;
  PhaseMaterials materials;  // deterministic values; uncertain entries are overridden by midpoints
  UncertainSet uncertain;
};

/// x_a = 1 everywhere; phase 2 in a centered disk (2D) or ball (3D) covering
/// about `seed_fraction` of the cell.
DesignState initial_design(const TwoScaleModel& model, double seed_fraction);

/// Eqs. for the evolutionary weight schedule: step by (1 ∓ ER) toward W*, clamped.
double update_weight_target(double current, double target, double evolution_ratio);

struct UpdateResult {
  DesignState state;
  double weight = 0.0;  // Σ x_a V_a ρ^H of the new state
  int macro_flips = 0;
  int micro_flips = 0;
};

/// Assigns 1 to the top of the merged ranking and x_min to the rest, with the
/// rank cut chosen so the total weight is closest to `target_weight` (absolute
/// mass). Ties rank macro before micro, then by index.
UpdateResult concurrent_update(const TwoScaleModel& model, const PhaseMaterials& materials,
                               const DesignState& state, std::span<const double> xi_macro,
                               std::span<const double> xi_micro, double target_weight, double flip_cap = 1.0);

/// Largest mass change of a single element flip.
double weight_quantum(const TwoScaleModel& model, const PhaseMaterials& materials, const DesignState& state);

/// Relative change of the last N objective values against the N before.
std::optional<double> convergence_error(std::span<const double> history, int window);
bool check_convergence(std::span<const double> history, int window, double tolerance, bool weight_reached);

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;
  double expectation = 0.0;
  double std_dev = 0.0;
  double weight_target = 0.0;   // W^k the design was built for
  double weight_fraction = 0.0; // m / m0 of the design
  double macro_solid_fraction = 0.0;
  double micro_phase1_fraction = 0.0;
};

struct OptimizationResult {
  DesignState design;
  std::vector<IterationRecord> history;
  bool converged = false;
  Matrix effective_elasticity;
  double effective_density = 0.0;
  double weight = 0.0;
  double reference_weight = 0.0;
  double quantum = 0.0;
  std::size_t fea_calls_per_iteration = 0;
};

struct Evaluation {
  RobustObjective objective;
  EffectiveMaterial material;
  std::size_t fea_calls = 0;
};

/// Objective of a design: deterministic compliance (dcto, Ē = C, S̄D = 0) or
/// the worst-case objective (rcto).
Evaluation evaluate(const Problem& problem, const DesignState& state, Mode mode, double kappa);

using IterationCallback = std::function<void(const IterationRecord&, const DesignState&, const SensitivityField*)>;

OptimizationResult run(const Problem& problem, Mode mode, const OptimizerSettings& settings,
                       const IterationCallback& on_iteration = {});

}  // namespace cto
