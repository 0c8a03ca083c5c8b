#include "cto/beso.hpp"

#include "cto/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace cto {

std::string_view to_string(Mode mode) { return mode == Mode::dcto ? "dcto" : "rcto"; }

std::optional<Mode> parse_mode(std::string_view name) {
  if (name == "dcto") return Mode::dcto;
  if (name == "rcto") return Mode::rcto;
  return std::nullopt;
}

void OptimizerSettings::validate() const {
  require(target_weight > 0.0 && target_weight <= 1.0, "target weight fraction must lie in (0, 1]");
  require(evolution_ratio > 0.0 && evolution_ratio < 1.0, "evolution ratio must lie in (0, 1)");
  require(kappa >= 0.0, "kappa must be non-negative");
  require(tolerance > 0.0, "convergence tolerance must be positive");
  require(history_window >= 1, "history window must be at least 1");
  require(max_iterations >= 1, "at least one iteration is required");
  require(macro_filter_radius >= 0.0 && micro_filter_radius >= 0.0, "filter radii must be non-negative");
  require(flip_cap > 0.0 && flip_cap <= 1.0, "flip cap must lie in (0, 1]");
  require(beta >= 0.0, "beta must be non-negative");
  require(seed_fraction >= 0.0 && seed_fraction < 1.0, "seed fraction must lie in [0, 1)");
}

DesignState initial_design(const TwoScaleModel& model, double seed_fraction) {
  DesignState s;
  s.macro.assign(model.macro_grid().num_elements(), 1.0);
  const Grid& cell = model.cell_grid();
  s.micro.assign(cell.num_elements(), 1.0);
  if (seed_fraction <= 0.0) return s;
  const double measure = cell.domain_volume();
  const double radius = cell.dim == 2 ? std::sqrt(seed_fraction * measure / std::numbers::pi)
                                      : std::cbrt(3.0 * seed_fraction * measure / (4.0 * std::numbers::pi));
  std::array<double, 3> centre{0, 0, 0};
  for (int d = 0; d < cell.dim; ++d) centre[d] = 0.5 * cell.cells[d] * cell.spacing[d];
  for (int e = 0; e < cell.num_elements(); ++e) {
    const auto c = cell.element_centroid(e);
    double r2 = 0.0;
    for (int d = 0; d < cell.dim; ++d) r2 += (c[d] - centre[d]) * (c[d] - centre[d]);
    if (std::sqrt(r2) <= radius) s.micro[e] = model.xmin();
  }
  return s;
}

double update_weight_target(double current, double target, double evolution_ratio) {
  if (current > target) return std::max(current * (1.0 - evolution_ratio), target);
  if (current < target) return std::min(current * (1.0 + evolution_ratio), target);
  return target;
}

namespace {

bool solid(double x) { return x > 0.5; }

double weight_of(const TwoScaleModel& model, const PhaseMaterials& m, const DesignState& s) {
  return model.total_weight(s, effective_density(model.unit_cell(s), m.density1, m.density2));
}

struct RankEntry {
  double xi;
  int scale;  // 0 macro, 1 micro
  int index;
};

}  // namespace

double weight_quantum(const TwoScaleModel& model, const PhaseMaterials& m, const DesignState& state) {
  const UnitCell cell = model.unit_cell(state);
  const double rho_h = effective_density(cell, m.density1, m.density2);
  const double va = model.macro_grid().element_volume();
  double solid_volume = 0.0;
  for (double x : state.macro) solid_volume += x * va;
  const double macro_flip = va * rho_h * (1.0 - model.xmin());
  const double micro_flip =
      cell.voxel_volume() / cell.measure() * std::abs(m.density1 - m.density2) * (1.0 - model.xmin()) * solid_volume;
  return std::max(macro_flip, micro_flip);
}

UpdateResult concurrent_update(const TwoScaleModel& model, const PhaseMaterials& materials,
                               const DesignState& state, std::span<const double> xi_macro,
                               std::span<const double> xi_micro, double target_weight, double flip_cap) {
  model.validate(state);
  require(xi_macro.size() == state.macro.size() && xi_micro.size() == state.micro.size(),
          "sensitivity fields do not match the design");
  require(flip_cap > 0.0 && flip_cap <= 1.0, "flip cap must lie in (0, 1]");
  require(materials.density1 > materials.density2,
          "scales not comparable: phase 1 must be denser than phase 2");
  const double xmin = model.xmin();

  DesignState lightest = state;
  std::fill(lightest.macro.begin(), lightest.macro.end(), xmin);
  std::fill(lightest.micro.begin(), lightest.micro.end(), xmin);
  DesignState heaviest = state;
  std::fill(heaviest.macro.begin(), heaviest.macro.end(), 1.0);
  std::fill(heaviest.micro.begin(), heaviest.micro.end(), 1.0);
  const double w_lo = weight_of(model, materials, lightest);
  const double w_hi = weight_of(model, materials, heaviest);
  const double slack = 1e-12 * w_hi;
  if (target_weight < w_lo - slack) {
    std::ostringstream msg;
    msg << "weight target " << target_weight << " is below the lightest admissible design (" << w_lo
        << ", every element at x_min)";
    fail(ErrorCategory::infeasible, msg.str());
  }
  if (target_weight > w_hi + slack) {
    std::ostringstream msg;
    msg << "weight target " << target_weight << " exceeds the full phase-1 design (" << w_hi << ")";
    fail(ErrorCategory::infeasible, msg.str());
  }

  std::vector<RankEntry> rank;
  rank.reserve(xi_macro.size() + xi_micro.size());
  for (std::size_t i = 0; i < xi_macro.size(); ++i) {
    require(std::isfinite(xi_macro[i]), "macro sensitivity is not finite");
    rank.push_back({xi_macro[i], 0, static_cast<int>(i)});
  }
  for (std::size_t i = 0; i < xi_micro.size(); ++i) {
    require(std::isfinite(xi_micro[i]), "micro sensitivity is not finite");
    rank.push_back({xi_micro[i], 1, static_cast<int>(i)});
  }
  std::sort(rank.begin(), rank.end(), [](const RankEntry& a, const RankEntry& b) {
    if (a.xi != b.xi) return a.xi > b.xi;
    if (a.scale != b.scale) return a.scale < b.scale;
    return a.index < b.index;
  });

  const std::array<int, 2> sizes{static_cast<int>(state.macro.size()), static_cast<int>(state.micro.size())};
  std::array<int, 2> cap{};
  for (int s = 0; s < 2; ++s) cap[s] = std::max(1, static_cast<int>(std::floor(flip_cap * sizes[s])));
  auto current = [&](const RankEntry& r) {
    return solid(r.scale == 0 ? state.macro[r.index] : state.micro[r.index]);
  };

  // Design for rank cut k: the top k become solid, subject to the per-scale cap
  // (first additions and last removals in rank order survive), which keeps the
  // weight monotone in k.
  auto design = [&](int k) {
    DesignState d = state;
    for (auto& x : d.macro) x = solid(x) ? 1.0 : xmin;
    for (auto& x : d.micro) x = solid(x) ? 1.0 : xmin;
    std::array<int, 2> added{0, 0};
    for (int r = 0; r < k; ++r) {
      const RankEntry& e = rank[r];
      if (current(e) || added[e.scale] >= cap[e.scale]) continue;
      ++added[e.scale];
      (e.scale == 0 ? d.macro : d.micro)[e.index] = 1.0;
    }
    std::array<int, 2> removed{0, 0};
    for (int r = static_cast<int>(rank.size()) - 1; r >= k; --r) {
      const RankEntry& e = rank[r];
      if (!current(e) || removed[e.scale] >= cap[e.scale]) continue;
      ++removed[e.scale];
      (e.scale == 0 ? d.macro : d.micro)[e.index] = xmin;
    }
    return d;
  };

  int lo = 0;
  int hi = static_cast<int>(rank.size());
  // Smallest k whose weight reaches the target.
  while (lo < hi) {
    const int mid = lo + (hi - lo) / 2;
    if (weight_of(model, materials, design(mid)) >= target_weight) hi = mid;
    else lo = mid + 1;
  }
  int best = lo;
  double best_weight = weight_of(model, materials, design(lo));
  if (lo > 0) {
    const double w = weight_of(model, materials, design(lo - 1));
    if (std::abs(w - target_weight) < std::abs(best_weight - target_weight)) {
      best = lo - 1;
      best_weight = w;
    }
  }

  UpdateResult out;
  out.state = design(best);
  out.weight = best_weight;
  for (std::size_t i = 0; i < state.macro.size(); ++i) out.macro_flips += solid(state.macro[i]) != solid(out.state.macro[i]);
  for (std::size_t i = 0; i < state.micro.size(); ++i) out.micro_flips += solid(state.micro[i]) != solid(out.state.micro[i]);
  return out;
}

std::optional<double> convergence_error(std::span<const double> history, int window) {
  const int n = static_cast<int>(history.size());
  if (window < 1 || n < 2 * window) return std::nullopt;
  double recent = 0.0;
  double before = 0.0;
  for (int g = 1; g <= window; ++g) {
    recent += history[n - g];
    before += history[n - window - g];
  }
  return std::abs(recent - before) / std::abs(recent);
}

bool check_convergence(std::span<const double> history, int window, double tolerance, bool weight_reached) {
  if (!weight_reached) return false;
  const auto err = convergence_error(history, window);
  return err && *err <= tolerance;
}

Evaluation evaluate(const Problem& problem, const DesignState& state, Mode mode, double kappa) {
  Evaluation ev;
  if (mode == Mode::dcto) {
    DeterministicResult d =
        deterministic_evaluate(problem.model, state, problem.uncertain.nominal(problem.materials));
    ev.objective = {d.compliance, 0.0, kappa, d.compliance};
    ev.material = std::move(d.material);
    ev.fea_calls = d.fea_calls;
  } else {
    IhpaResult r = ihpa_evaluate(problem.model, state, problem.materials, problem.uncertain, kappa);
    ev.objective = r.objective;
    ev.material = std::move(r.material);
    ev.fea_calls = r.fea_calls;
  }
  return ev;
}

namespace {

IterationRecord make_record(int k, const RobustObjective& obj, double target, double weight, double m0,
                            const DesignState& s) {
  IterationRecord rec;
  rec.iteration = k;
  rec.objective = obj.value;
  rec.expectation = obj.expectation;
  rec.std_dev = obj.std_dev;
  rec.weight_target = target;
  rec.weight_fraction = weight / m0;
  rec.macro_solid_fraction =
      static_cast<double>(std::count_if(s.macro.begin(), s.macro.end(), solid)) / static_cast<double>(s.macro.size());
  rec.micro_phase1_fraction =
      static_cast<double>(std::count_if(s.micro.begin(), s.micro.end(), solid)) / static_cast<double>(s.micro.size());
  return rec;
}

std::string at_iteration(int k, const std::string& what) {
  return "iteration " + std::to_string(k) + ": " + what;
}

}  // namespace

OptimizationResult run(const Problem& problem, Mode mode, const OptimizerSettings& settings,
                       const IterationCallback& on_iteration) {
  settings.validate();
  problem.uncertain.validate();
  const TwoScaleModel& model = problem.model;
  const PhaseMaterials nominal = problem.uncertain.nominal(problem.materials);
  nominal.validate();
  require(nominal.density1 > nominal.density2, "scales not comparable: phase 1 must be denser than phase 2");

  const double macro_radius =
      settings.macro_filter_radius > 0.0 ? settings.macro_filter_radius : 3.0 * model.macro_grid().spacing[0];
  const double micro_radius =
      settings.micro_filter_radius > 0.0 ? settings.micro_filter_radius : 3.0 * model.cell_grid().spacing[0];
  const FilterKernel macro_kernel(model.macro_grid(), macro_radius, false);
  const FilterKernel micro_kernel(model.cell_grid(), micro_radius, true);

  DesignState state = initial_design(model, settings.seed_fraction);
  const double m0 = model.reference_weight(nominal.density1);
  double target = weight_of(model, nominal, state) / m0;

  OptimizationResult result;
  result.reference_weight = m0;
  std::vector<double> objectives;
  SensitivityField previous;

  for (int k = 0; k < settings.max_iterations; ++k) {
    RobustObjective objective;
    EffectiveMaterial material;
    SensitivityField alpha;
    std::size_t calls = 0;
    try {
      if (mode == Mode::dcto) {
        DeterministicResult d = deterministic_evaluate(model, state, nominal);
        objective = {d.compliance, 0.0, settings.kappa, d.compliance};
        calls = d.fea_calls;
        alpha = deterministic_sensitivity(model, state, d.material, d.u);
        material = std::move(d.material);
      } else {
        SignOptions signs;
        signs.beta = settings.beta;
        IhpaResult r = ihpa_evaluate(model, state, problem.materials, problem.uncertain, settings.kappa, signs);
        objective = r.objective;
        calls = r.fea_calls;
        alpha = robust_sensitivity(model, state, r, true);
        material = std::move(r.material);
      }
    } catch (const Error& e) {
      fail(e.category(), at_iteration(k, e.what()));
    }

    const double weight = model.total_weight(state, material.value.density);
    IterationRecord rec = make_record(k, objective, target, weight, m0, state);
    result.history.push_back(rec);
    objectives.push_back(objective.value);
    result.design = state;
    result.effective_elasticity = material.value.elasticity;
    result.effective_density = material.value.density;
    result.weight = weight;
    result.fea_calls_per_iteration = calls;

    // The schedule has arrived and the design carries the budget to within one flip.
    const bool reached = target == settings.target_weight &&
                         std::abs(weight - settings.target_weight * m0) <= weight_quantum(model, nominal, state);
    if (check_convergence(objectives, settings.history_window, settings.tolerance, reached)) {
      result.converged = true;
      if (on_iteration) on_iteration(rec, state, nullptr);
      break;
    }
    if (k + 1 == settings.max_iterations) {
      if (on_iteration) on_iteration(rec, state, nullptr);
      break;
    }

    SensitivityField xi = normalize(alpha, model, state, nominal);
    xi.macro = history_average(filter(xi.macro, macro_kernel), previous.macro);
    xi.micro = history_average(filter(xi.micro, micro_kernel), previous.micro);
    if (on_iteration) on_iteration(rec, state, &xi);
    previous = xi;

    target = update_weight_target(target, settings.target_weight, settings.evolution_ratio);
    try {
      UpdateResult up = concurrent_update(model, nominal, state, xi.macro, xi.micro, target * m0, settings.flip_cap);
      state = std::move(up.state);
    } catch (const Error& e) {
      fail(e.category(), at_iteration(k, e.what()));
    }
  }
  result.quantum = weight_quantum(model, nominal, result.design);
  return result;
}

}  // namespace cto
