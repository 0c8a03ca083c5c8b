#include "cto/uncertainty.hpp"

#include "cto/error.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

namespace cto {

void Interval::validate() const {
  require(std::isfinite(lo) && std::isfinite(hi), "interval bounds must be finite");
  require(lo <= hi, "interval lower bound exceeds upper bound");
}

void HybridParameter::validate() const {
  mean.validate();
  std_dev.validate();
  require(std_dev.lo >= 0.0, "standard deviation interval must be non-negative");
}

void UncertainSet::validate() const {
  for (std::size_t i = 0; i < parameters.size(); ++i) {
    parameters[i].validate();
    for (std::size_t j = 0; j < i; ++j) {
      require(parameters[i].parameter != parameters[j].parameter,
              "uncertain parameter listed twice: " + std::string(to_string(parameters[i].parameter)));
    }
  }
  auto has = [&](MaterialParameter p) {
    return std::any_of(parameters.begin(), parameters.end(), [&](const auto& h) { return h.parameter == p; });
  };
  require(!(has(MaterialParameter::poisson) &&
            (has(MaterialParameter::poisson1) || has(MaterialParameter::poisson2))),
          "a shared Poisson's ratio cannot be combined with per-phase ratios");
}

std::vector<MaterialParameter> UncertainSet::tags() const {
  std::vector<MaterialParameter> t;
  for (const auto& h : parameters) t.push_back(h.parameter);
  return t;
}

PhaseMaterials UncertainSet::nominal(const PhaseMaterials& base) const {
  PhaseMaterials m = base;
  for (const auto& h : parameters) set(m, h.parameter, h.mean.midpoint());
  return m;
}

namespace {

double sign_of(double f) { return f > 0.0 ? 1.0 : (f < 0.0 ? -1.0 : 0.0); }

double automatic_beta(const std::vector<PerturbationTerms>& terms) {
  std::vector<double> mags;
  for (const auto& t : terms) {
    for (double f : {t.f1, t.f2, t.f3}) {
      if (f != 0.0) mags.push_back(std::abs(f));
    }
  }
  if (mags.empty()) return 1.0;
  auto mid = mags.begin() + static_cast<std::ptrdiff_t>(mags.size() / 2);
  std::nth_element(mags.begin(), mid, mags.end());
  double median = *mid;
  if (mags.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(mags.begin(), mid));
  }
  return std::clamp(10.0 / median, 1.0, 1e4);
}

}  // namespace

DeterministicResult deterministic_evaluate(const TwoScaleModel& model, const DesignState& state,
                                           const PhaseMaterials& materials) {
  model.validate(state);
  DeterministicResult r;
  r.material = homogenize(model.unit_cell(state), materials);
  const ReducedPattern& pattern = model.pattern();
  const SymmetricSolver solver(model.dynamic_stiffness(state, r.material.value.elasticity, r.material.value.density));
  const Vector f = pattern.restrict_vector(model.load());
  const Vector u = solver.solve(f);
  r.compliance = f.dot(u);
  r.u = pattern.expand_vector(u);
  r.fea_calls = solver.solve_count();
  return r;
}

ParameterOperators parameter_to_matrices(const TwoScaleModel& model, const DesignState& state,
                                         const EffectiveMaterial& material, int index) {
  require(index >= 0 && index < static_cast<int>(material.first.size()), "parameter index out of range");
  const MaterialResponse& a = material.first[index];
  const MaterialResponse& b = material.second[index];
  return {model.dynamic_stiffness(state, a.elasticity, a.density),
          model.dynamic_stiffness(state, b.elasticity, b.density)};
}

SparseMatrix parameter_cross_matrix(const TwoScaleModel& model, const DesignState& state,
                                    const PhaseMaterials& materials, const EffectiveMaterial& material,
                                    MaterialParameter p, MaterialParameter q) {
  const UnitCell cell = model.unit_cell(state);
  const PhaseTensors t = phase_mixed_derivative(materials, model.dim(), p, q);
  const MaterialResponse r = material_response(cell, t, material.solution);
  return model.dynamic_stiffness(state, r.elasticity, r.density);
}

IhpaResult ihpa_evaluate(const TwoScaleModel& model, const DesignState& state, const PhaseMaterials& base,
                         const UncertainSet& uncertain, double kappa, const SignOptions& signs) {
  uncertain.validate();
  model.validate(state);
  require(kappa >= 0.0, "kappa must be non-negative");
  require(signs.beta >= 0.0, "beta must be non-negative");

  IhpaResult r;
  r.nominal = uncertain.nominal(base);
  r.nominal.validate();
  r.smooth = signs.smooth;
  const std::vector<MaterialParameter> tags = uncertain.tags();
  r.material = homogenize(model.unit_cell(state), r.nominal, tags);

  const ReducedPattern& pattern = model.pattern();
  const MaterialResponse& v = r.material.value;
  auto solver = std::make_shared<SymmetricSolver>(model.dynamic_stiffness(state, v.elasticity, v.density));
  const Vector f = pattern.restrict_vector(model.load());
  const Vector u0 = solver->solve(f);
  r.deterministic = f.dot(u0);
  r.u0 = pattern.expand_vector(u0);

  const int n = uncertain.size();
  for (int j = 0; j < n; ++j) {
    ParameterOperators ops = parameter_to_matrices(model, state, r.material, j);
    const Vector au0 = ops.first * u0;
    const Vector u1 = -solver->solve(au0);
    const Vector u2 = -solver->solve(au0);
    const Vector u3 = -solver->solve(2.0 * (ops.first * u2) + ops.second * u0);

    const HybridParameter& h = uncertain.parameters[j];
    PerturbationTerms t;
    t.g1 = f.dot(u1);
    t.g2 = f.dot(u2);
    t.g3 = f.dot(u3);
    t.mean_shift = h.mean.deviation();
    t.std_shift = h.std_dev.deviation();
    t.sigma = h.std_dev.midpoint();
    t.f1 = t.g1 * t.mean_shift;
    t.f2 = t.g2 * t.sigma;
    t.f3 = t.g3 * t.sigma * t.mean_shift + t.g2 * t.std_shift;
    r.terms.push_back(t);

    r.u1.push_back(pattern.expand_vector(u1));
    r.u2.push_back(pattern.expand_vector(u2));
    r.u3.push_back(pattern.expand_vector(u3));
    r.first_operators.push_back(std::move(ops.first));
    r.second_operators.push_back(std::move(ops.second));
  }

  r.beta = signs.beta > 0.0 ? signs.beta : automatic_beta(r.terms);
  double expectation = r.deterministic;
  double sd = 0.0;
  for (auto& t : r.terms) {
    auto s = [&](double x) { return signs.smooth ? std::tanh(r.beta * x) : sign_of(x); };
    t.s1 = s(t.f1);
    t.s2 = s(t.f2);
    t.s3 = s(t.f3);
    expectation += t.f1 * t.s1;
    sd += t.f2 * t.s2 + t.f3 * t.s3;
  }
  r.objective = {expectation, sd, kappa, expectation + kappa * sd};
  r.fea_calls = solver->solve_count();
  r.solver = std::move(solver);
  return r;
}

// ---------------------------------------------------------------------------
// Nested Monte Carlo

namespace {

using Ldlt = Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;

// Factorizes a fixed pattern repeatedly with the symbolic analysis done once.
class PatternSolver {
 public:
  explicit PatternSolver(const SparseMatrix& pattern) : matrix_(pattern) {
    if (matrix_.rows() > 0) ldlt_.analyzePattern(matrix_);
  }

  void factorize(const std::vector<double>& values) {
    std::copy(values.begin(), values.end(), matrix_.valuePtr());
    if (matrix_.rows() == 0) return;
    ldlt_.factorize(matrix_);
    if (ldlt_.info() != Eigen::Success) fail(ErrorCategory::singular, "sampled system is singular");
    const Vector d = ldlt_.vectorD().cwiseAbs();
    if (!(d.minCoeff() > 1e-13 * d.maxCoeff())) {
      fail(ErrorCategory::singular, "sampled system is singular (resonance at a sampled parameter point)");
    }
  }

  template <typename Rhs>
  Matrix solve(const Rhs& rhs) const {
    if (matrix_.rows() == 0) return Matrix::Zero(0, rhs.cols());
    return ldlt_.solve(rhs);
  }

 private:
  SparseMatrix matrix_;
  Ldlt ldlt_;
};

// Exact homogenized (D^H, ρ^H) for arbitrary phase properties on a fixed cell
// layout. Cell stiffness and load are affine in the phase matrices; the
// effective elasticity follows from D^H = <D> − χᵀR / |Y|.
class CellEvaluator {
 public:
  CellEvaluator(const UnitCell& cell)
      : nv_(voigt_size(cell.grid.dim)), measure_(cell.measure()) {
    const Grid& grid = cell.grid;
    const ElementBasis basis(grid);
    const DofMap map = DofMap::build(grid, true);
    std::vector<int> pinned;
    for (int d = 0; d < grid.dim; ++d) pinned.push_back(d);
    pattern_ = std::make_unique<ReducedPattern>(map, pinned);
    solver_ = std::make_unique<PatternSolver>(pattern_->pattern());

    std::vector<double> w1(grid.num_elements()), w2(grid.num_elements());
    double s1 = 0.0;
    double sx = 0.0;
    for (int e = 0; e < grid.num_elements(); ++e) {
      w1[e] = std::pow(cell.x[e], cell.penalty);
      w2[e] = 1.0 - w1[e];
      s1 += w1[e];
      sx += cell.x[e];
    }
    const int ne = grid.num_elements();
    average1_ = s1 * cell.voxel_volume() / measure_;
    average2_ = (ne - s1) * cell.voxel_volume() / measure_;
    fraction_ = sx * cell.voxel_volume() / measure_;

    const std::span<const int> free = pattern_->free_dofs();
    std::vector<int> full_to_free(map.num_dofs, -1);
    for (int i = 0; i < static_cast<int>(free.size()); ++i) full_to_free[free[i]] = i;

    for (int k = 0; k < nv_; ++k) {
      for (int l = k; l < nv_; ++l) {
        Matrix unit = Matrix::Zero(nv_, nv_);
        unit(k, l) = unit(l, k) = 1.0;
        const Matrix ke = basis.stiffness(unit);
        Matrix fe = Matrix::Zero(basis.num_dofs(), nv_);
        for (int g = 0; g < basis.num_points(); ++g) {
          fe.noalias() += basis.weight(g) * basis.strain_matrix(g).transpose() * unit;
        }
        std::vector<double> k1(pattern_->num_values(), 0.0), k2(pattern_->num_values(), 0.0);
        Matrix r1 = Matrix::Zero(pattern_->num_free(), nv_);
        Matrix r2 = Matrix::Zero(pattern_->num_free(), nv_);
        for (int e = 0; e < ne; ++e) {
          pattern_->scatter(k1, e, ke, w1[e]);
          pattern_->scatter(k2, e, ke, w2[e]);
          const auto dofs = map.element(e);
          for (int i = 0; i < basis.num_dofs(); ++i) {
            const int row = full_to_free[dofs[i]];
            if (row < 0) continue;
            r1.row(row) += w1[e] * fe.row(i);
            r2.row(row) += w2[e] * fe.row(i);
          }
        }
        stiffness1_.push_back(std::move(k1));
        stiffness2_.push_back(std::move(k2));
        load1_.push_back(std::move(r1));
        load2_.push_back(std::move(r2));
      }
    }
    values_.resize(pattern_->num_values());
  }

  double density(double rho1, double rho2) const { return fraction_ * rho1 + (1.0 - fraction_) * rho2; }

  Matrix elasticity(const Matrix& D1, const Matrix& D2) {
    std::fill(values_.begin(), values_.end(), 0.0);
    Matrix rhs = Matrix::Zero(pattern_->num_free(), nv_);
    int idx = 0;
    for (int k = 0; k < nv_; ++k) {
      for (int l = k; l < nv_; ++l, ++idx) {
        const double a = D1(k, l);
        const double b = D2(k, l);
        const auto& k1 = stiffness1_[idx];
        const auto& k2 = stiffness2_[idx];
        for (std::size_t s = 0; s < values_.size(); ++s) values_[s] += a * k1[s] + b * k2[s];
        rhs.noalias() += a * load1_[idx] + b * load2_[idx];
      }
    }
    solver_->factorize(values_);
    const Matrix chi = solver_->solve(rhs);
    Matrix D = average1_ * D1 + average2_ * D2 - (rhs.transpose() * chi) / measure_;
    return 0.5 * (D + D.transpose());
  }

 private:
  int nv_;
  double measure_;
  double average1_ = 0.0, average2_ = 0.0, fraction_ = 0.0;
  std::unique_ptr<ReducedPattern> pattern_;
  std::unique_ptr<PatternSolver> solver_;
  std::vector<std::vector<double>> stiffness1_, stiffness2_;
  std::vector<Matrix> load1_, load2_;
  std::vector<double> values_;
};

class ComplianceSampler {
 public:
  ComplianceSampler(const TwoScaleModel& model, const DesignState& state)
      : dim_(model.dim()),
        cell_(model.unit_cell(state)),
        macro_(model, state),
        solver_(model.pattern().pattern()),
        load_(model.pattern().restrict_vector(model.load())) {}

  double compliance(const PhaseMaterials& m) {
    const PhaseTensors t = phase_tensors(m, dim_);
    const Matrix D = cell_.elasticity(t.elasticity1, t.elasticity2);
    macro_.values(D, cell_.density(t.density1, t.density2), values_);
    solver_.factorize(values_);
    const Vector u = solver_.solve(load_);
    return load_.dot(u);
  }

 private:
  int dim_;
  CellEvaluator cell_;
  AffineMacroOperator macro_;
  PatternSolver solver_;
  Vector load_;
  std::vector<double> values_;
};

bool valid_draw(const PhaseMaterials& m) {
  auto ok_nu = [](double nu) { return nu > -1.0 && nu < 0.5; };
  return m.young1 > 0.0 && m.young2 > 0.0 && m.density1 >= 0.0 && m.density2 >= 0.0 && ok_nu(m.poisson1) &&
         ok_nu(m.poisson2);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

struct OuterPoint {
  std::vector<double> mean;
  std::vector<double> std_dev;
};

std::vector<OuterPoint> interval_points(const UncertainSet& set, const McsOptions& o) {
  const int n = set.size();
  std::vector<OuterPoint> pts;
  if (n == 0) {
    pts.push_back({});
    return pts;
  }
  // Latin hypercube over the 2n-dimensional (μ, σ) box.
  std::mt19937_64 rng(splitmix64(o.seed));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int m = o.interval_samples;
  std::vector<std::vector<double>> unit(2 * n, std::vector<double>(m));
  for (int d = 0; d < 2 * n; ++d) {
    std::vector<int> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int s = 0; s < m; ++s) unit[d][s] = (perm[s] + uni(rng)) / m;
  }
  auto lerp = [](const Interval& iv, double u) { return iv.lo + u * (iv.hi - iv.lo); };
  for (int s = 0; s < m; ++s) {
    OuterPoint p;
    for (int j = 0; j < n; ++j) {
      p.mean.push_back(lerp(set.parameters[j].mean, unit[2 * j][s]));
      p.std_dev.push_back(lerp(set.parameters[j].std_dev, unit[2 * j + 1][s]));
    }
    pts.push_back(std::move(p));
  }
  if (o.include_corners && 2 * n <= 12) {
    const int corners = 1 << (2 * n);
    for (int c = 0; c < corners; ++c) {
      OuterPoint p;
      for (int j = 0; j < n; ++j) {
        const auto& h = set.parameters[j];
        p.mean.push_back((c >> (2 * j)) & 1 ? h.mean.hi : h.mean.lo);
        p.std_dev.push_back((c >> (2 * j + 1)) & 1 ? h.std_dev.hi : h.std_dev.lo);
      }
      pts.push_back(std::move(p));
    }
  }
  return pts;
}

struct OuterResult {
  double mean = 0.0;
  double std_dev = 0.0;
  std::size_t resampled = 0;
};

OuterResult sample_point(ComplianceSampler& sampler, const PhaseMaterials& base, const UncertainSet& uncertain,
                         const OuterPoint& p, int draws, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  OuterResult r;
  double mean = 0.0;
  double m2 = 0.0;
  for (int s = 0; s < draws; ++s) {
    PhaseMaterials m = base;
    for (;;) {
      for (int j = 0; j < uncertain.size(); ++j) {
        set(m, uncertain.parameters[j].parameter, p.mean[j] + p.std_dev[j] * normal(rng));
      }
      if (valid_draw(m)) break;
      ++r.resampled;
      if (r.resampled > static_cast<std::size_t>(draws) * 100) {
        fail(ErrorCategory::invalid_argument, "sampled materials are almost never admissible");
      }
    }
    const double c = sampler.compliance(m);
    const double delta = c - mean;
    mean += delta / (s + 1);
    m2 += delta * (c - mean);
  }
  r.mean = mean;
  r.std_dev = draws > 1 ? std::sqrt(std::max(m2, 0.0) / (draws - 1)) : 0.0;
  return r;
}

}  // namespace

McsResult mcs_evaluate(const TwoScaleModel& model, const DesignState& state, const PhaseMaterials& base,
                       const UncertainSet& uncertain, const McsOptions& options) {
  uncertain.validate();
  model.validate(state);
  require(options.interval_samples >= 2 && options.random_samples >= 2,
          "Monte Carlo needs at least 2 interval points and 2 random samples");
  const PhaseMaterials nominal = uncertain.nominal(base);
  nominal.validate();

  const std::vector<OuterPoint> points = interval_points(uncertain, options);
  std::vector<OuterResult> results(points.size());

  unsigned threads = options.threads > 0 ? static_cast<unsigned>(options.threads)
                                         : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(points.size()));
  std::vector<std::exception_ptr> errors(threads);
  auto worker = [&](unsigned w) {
    try {
      ComplianceSampler sampler(model, state);
      for (std::size_t i = w; i < points.size(); i += threads) {
        const std::uint64_t seed = splitmix64(options.seed ^ splitmix64(i + 1));
        results[i] = sample_point(sampler, nominal, uncertain, points[i], options.random_samples, seed);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  McsResult out;
  out.interval_points = static_cast<int>(points.size());
  out.max_expectation = -std::numeric_limits<double>::infinity();
  for (const auto& r : results) {
    out.max_expectation = std::max(out.max_expectation, r.mean);
    out.max_std_dev = std::max(out.max_std_dev, r.std_dev);
    out.resampled += r.resampled;
  }
  out.fea_calls = points.size() * static_cast<std::size_t>(options.random_samples);
  return out;
}

}  // namespace cto
