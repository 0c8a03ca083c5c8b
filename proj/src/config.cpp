#include "cto/config.hpp"

#include "cto/error.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace cto {

namespace {

// Collects every problem instead of stopping at the first.
class Reader {
 public:
  std::vector<std::string> errors;

  void error(const std::string& path, const std::string& what) { errors.push_back(path + ": " + what); }

  bool is_map(const YAML::Node& n, const std::string& path) {
    if (n.IsMap()) return true;
    error(path, "expected a mapping");
    return false;
  }

  void allow(const YAML::Node& n, const std::string& path, std::initializer_list<std::string_view> keys) {
    if (!n.IsMap()) return;
    for (const auto& kv : n) {
      const std::string k = kv.first.as<std::string>();
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) error(join(path, k), "unknown key");
    }
  }

  static std::string join(const std::string& path, std::string_view key) {
    return path.empty() ? std::string(key) : path + "." + std::string(key);
  }

  YAML::Node child(const YAML::Node& n, std::string_view key) {
    if (!n.IsMap()) return YAML::Node(YAML::NodeType::Undefined);
    return n[std::string(key)];
  }

  YAML::Node required(const YAML::Node& n, const std::string& path, std::string_view key) {
    YAML::Node c = child(n, key);
    if (!c.IsDefined() || c.IsNull()) error(join(path, key), "required key is missing");
    return c;
  }

  template <typename T>
  std::optional<T> scalar(const YAML::Node& n, const std::string& path) {
    if (!n.IsDefined() || n.IsNull()) return std::nullopt;
    if (!n.IsScalar()) {
      error(path, "expected a scalar");
      return std::nullopt;
    }
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      error(path, "cannot read '" + n.Scalar() + "'");
      return std::nullopt;
    }
  }

  double number(const YAML::Node& n, const std::string& path) {
    const auto v = scalar<double>(n, path);
    if (v && !std::isfinite(*v)) error(path, "must be finite");
    return v.value_or(0.0);
  }

  template <typename T>
  std::vector<T> list(const YAML::Node& n, const std::string& path, std::size_t size) {
    std::vector<T> out;
    if (!n.IsDefined() || n.IsNull()) return out;
    if (!n.IsSequence() || (size && n.size() != size)) {
      error(path, size ? "expected a list of " + std::to_string(size) + " values" : "expected a list");
      return out;
    }
    for (std::size_t i = 0; i < n.size(); ++i) {
      const auto v = scalar<T>(n[i], path + "[" + std::to_string(i) + "]");
      out.push_back(v.value_or(T{}));
    }
    return out;
  }
};

struct Quantity {
  Interval mean;
  Interval std_dev;
  bool hybrid = false;
};

Interval read_interval(Reader& r, const YAML::Node& n, const std::string& path, double factor) {
  if (n.IsSequence()) {
    const auto v = r.list<double>(n, path, 2);
    if (v.size() != 2) return {};
    Interval iv{v[0] * factor, v[1] * factor};
    if (!(iv.lo <= iv.hi)) r.error(path, "lower bound exceeds upper bound");
    return iv;
  }
  return Interval::point(r.number(n, path) * factor);
}

Quantity read_quantity(Reader& r, const YAML::Node& n, const std::string& path, double factor) {
  Quantity q;
  if (!n.IsDefined() || n.IsNull()) return q;
  if (n.IsMap()) {
    r.allow(n, path, {"mean", "std_dev"});
    q.hybrid = true;
    q.mean = read_interval(r, r.required(n, path, "mean"), path + ".mean", factor);
    const YAML::Node sd = r.child(n, "std_dev");
    if (sd.IsDefined() && !sd.IsNull()) q.std_dev = read_interval(r, sd, path + ".std_dev", factor);
    if (q.std_dev.lo < 0.0) r.error(path + ".std_dev", "must be non-negative");
    return q;
  }
  q.mean = Interval::point(r.number(n, path) * factor);
  return q;
}

std::optional<double> modulus_factor(std::string_view unit) {
  if (unit == "GPa") return 1e3;
  if (unit == "MPa") return 1.0;
  if (unit == "Pa") return 1e-6;
  return std::nullopt;
}

std::optional<double> density_factor(std::string_view unit) {
  if (unit == "kg/m3") return 1e-12;
  if (unit == "g/cm3") return 1e-9;
  if (unit == "t/mm3") return 1.0;
  return std::nullopt;
}

template <std::size_t N, typename T>
std::array<T, N> to_array(const std::vector<T>& v, T fill) {
  std::array<T, N> a;
  a.fill(fill);
  for (std::size_t i = 0; i < v.size() && i < N; ++i) a[i] = v[i];
  return a;
}

}  // namespace

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::filesystem::path dir = std::filesystem::path(path).parent_path();
  return parse_config_text(ss.str(), dir.empty() ? "." : dir.string());
}

RunConfig parse_config_text(const std::string& text, const std::string& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    fail(ErrorCategory::config, std::string("config is not valid YAML: ") + e.what());
  }
  if (!root.IsDefined() || root.IsNull()) {
    fail(ErrorCategory::config,
         "config is empty; required keys: geometry.dim, geometry.macro.cells, geometry.macro.size, "
         "geometry.cell.cells, boundary.fixed, boundary.loads, materials.phase1, materials.phase2");
  }

  Reader r;
  RunConfig c;
  c.source = text;
  if (!r.is_map(root, "(root)")) fail(ErrorCategory::config, "config must be a mapping");
  r.allow(root, "", {"mode", "seed", "geometry", "boundary", "materials", "optimizer", "verify", "design"});

  if (const auto m = r.scalar<std::string>(r.child(root, "mode"), "mode")) {
    if (const auto mode = parse_mode(*m)) c.mode = *mode;
    else r.error("mode", "must be dcto or rcto");
  } else {
    c.notices.push_back("mode not given; using rcto");
  }
  if (const auto s = r.scalar<std::uint64_t>(r.child(root, "seed"), "seed")) c.seed = *s;

  // geometry
  const YAML::Node geo = r.required(root, "", "geometry");
  if (geo.IsDefined() && r.is_map(geo, "geometry")) {
    r.allow(geo, "geometry", {"dim", "macro", "cell"});
    c.dim = static_cast<int>(r.number(r.required(geo, "geometry", "dim"), "geometry.dim"));
    if (c.dim != 2 && c.dim != 3) r.error("geometry.dim", "must be 2 or 3");
    const std::size_t d = c.dim == 3 ? 3 : 2;
    const YAML::Node macro = r.required(geo, "geometry", "macro");
    if (macro.IsDefined() && r.is_map(macro, "geometry.macro")) {
      r.allow(macro, "geometry.macro", {"cells", "size"});
      c.macro_cells = to_array<3>(r.list<int>(r.required(macro, "geometry.macro", "cells"), "geometry.macro.cells", d), 1);
      c.macro_size =
          to_array<3>(r.list<double>(r.required(macro, "geometry.macro", "size"), "geometry.macro.size", d), 1.0);
    }
    const YAML::Node cell = r.required(geo, "geometry", "cell");
    if (cell.IsDefined() && r.is_map(cell, "geometry.cell")) {
      r.allow(cell, "geometry.cell", {"cells", "size"});
      c.cell_cells = to_array<3>(r.list<int>(r.required(cell, "geometry.cell", "cells"), "geometry.cell.cells", d), 1);
      const YAML::Node size = r.child(cell, "size");
      if (size.IsDefined()) c.cell_size = to_array<3>(r.list<double>(size, "geometry.cell.size", d), 1.0);
      else c.notices.push_back("geometry.cell.size not given; using a unit cell of side 1");
    }
    for (int a = 0; a < c.dim; ++a) {
      if (c.macro_cells[a] < 1 || c.cell_cells[a] < 1) r.error("geometry", "element counts must be positive");
      if (!(c.macro_size[a] > 0.0) || !(c.cell_size[a] > 0.0)) r.error("geometry", "sizes must be positive");
    }
  }

  // boundary
  const YAML::Node bc = r.required(root, "", "boundary");
  if (bc.IsDefined() && r.is_map(bc, "boundary")) {
    r.allow(bc, "boundary", {"fixed", "loads", "frequency_hz"});
    c.fixed = r.list<std::string>(r.required(bc, "boundary", "fixed"), "boundary.fixed", 0);
    if (c.fixed.empty()) r.error("boundary.fixed", "at least one fixed anchor is required");
    const YAML::Node loads = r.required(bc, "boundary", "loads");
    if (loads.IsDefined() && !loads.IsSequence()) r.error("boundary.loads", "expected a list");
    if (loads.IsSequence()) {
      for (std::size_t i = 0; i < loads.size(); ++i) {
        const std::string p = "boundary.loads[" + std::to_string(i) + "]";
        if (!r.is_map(loads[i], p)) continue;
        r.allow(loads[i], p, {"anchor", "force"});
        LoadSpec l;
        l.anchor = r.scalar<std::string>(r.required(loads[i], p, "anchor"), p + ".anchor").value_or("");
        l.force = to_array<3>(
            r.list<double>(r.required(loads[i], p, "force"), p + ".force", c.dim == 3 ? 3 : 2), 0.0);
        c.loads.push_back(l);
      }
    }
    if (const auto f = r.scalar<double>(r.child(bc, "frequency_hz"), "boundary.frequency_hz")) {
      c.frequency_hz = *f;
      if (*f < 0.0) r.error("boundary.frequency_hz", "must be non-negative");
    } else {
      c.notices.push_back("boundary.frequency_hz not given; static loading");
    }
  }

  // materials
  const YAML::Node mat = r.required(root, "", "materials");
  if (mat.IsDefined() && r.is_map(mat, "materials")) {
    r.allow(mat, "materials", {"units", "poisson_model", "phase1", "phase2"});
    double emod = 1e3;
    double edens = 1e-12;
    const YAML::Node units = r.child(mat, "units");
    if (units.IsDefined()) {
      r.allow(units, "materials.units", {"modulus", "density"});
      if (const auto u = r.scalar<std::string>(r.child(units, "modulus"), "materials.units.modulus")) {
        if (const auto f = modulus_factor(*u)) emod = *f;
        else r.error("materials.units.modulus", "unknown unit '" + *u + "' (GPa, MPa, Pa)");
      }
      if (const auto u = r.scalar<std::string>(r.child(units, "density"), "materials.units.density")) {
        if (*u == "g/mm3") {
          r.error("materials.units.density",
                  "'g/mm3' is inconsistent with steel-like values; use kg/m3, g/cm3 or t/mm3");
        } else if (const auto f = density_factor(*u)) {
          edens = *f;
        } else {
          r.error("materials.units.density", "unknown unit '" + *u + "' (kg/m3, g/cm3, t/mm3)");
        }
      }
    } else {
      c.notices.push_back("materials.units not given; using GPa and kg/m3");
    }
    bool split = false;
    if (const auto pm = r.scalar<std::string>(r.child(mat, "poisson_model"), "materials.poisson_model")) {
      if (*pm == "split") split = true;
      else if (*pm != "shared") r.error("materials.poisson_model", "must be shared or split");
    }

    std::array<Quantity, 2> young, poisson, density;
    for (int ph = 0; ph < 2; ++ph) {
      const std::string p = ph == 0 ? "materials.phase1" : "materials.phase2";
      const YAML::Node n = r.required(mat, "materials", ph == 0 ? "phase1" : "phase2");
      if (!n.IsDefined() || !r.is_map(n, p)) continue;
      r.allow(n, p, {"young", "poisson", "density"});
      young[ph] = read_quantity(r, r.required(n, p, "young"), p + ".young", emod);
      poisson[ph] = read_quantity(r, r.required(n, p, "poisson"), p + ".poisson", 1.0);
      density[ph] = read_quantity(r, r.required(n, p, "density"), p + ".density", edens);
    }
    c.materials = {young[0].mean.midpoint(),   young[1].mean.midpoint(),   poisson[0].mean.midpoint(),
                   poisson[1].mean.midpoint(), density[0].mean.midpoint(), density[1].mean.midpoint()};
    auto add = [&](MaterialParameter tag, const Quantity& q) {
      if (q.hybrid) c.uncertain.parameters.push_back({tag, q.mean, q.std_dev});
    };
    add(MaterialParameter::young1, young[0]);
    add(MaterialParameter::young2, young[1]);
    if (split) {
      add(MaterialParameter::poisson1, poisson[0]);
      add(MaterialParameter::poisson2, poisson[1]);
    } else if (poisson[0].hybrid || poisson[1].hybrid) {
      const bool same = poisson[0].hybrid && poisson[1].hybrid && poisson[0].mean.lo == poisson[1].mean.lo &&
                        poisson[0].mean.hi == poisson[1].mean.hi && poisson[0].std_dev.lo == poisson[1].std_dev.lo &&
                        poisson[0].std_dev.hi == poisson[1].std_dev.hi;
      if (same) add(MaterialParameter::poisson, poisson[0]);
      else r.error("materials", "a shared Poisson's ratio needs identical intervals in both phases (or poisson_model: split)");
    }
    add(MaterialParameter::density1, density[0]);
    add(MaterialParameter::density2, density[1]);
    if (r.errors.empty()) {
      if (!(c.materials.young1 > 0.0 && c.materials.young2 > 0.0)) r.error("materials", "Young's moduli must be positive");
      if (!(c.materials.density1 > c.materials.density2))
        r.error("materials", "phase 1 must be denser than phase 2");
      for (double nu : {c.materials.poisson1, c.materials.poisson2}) {
        if (!(nu > -1.0 && nu < 0.5)) r.error("materials", "Poisson's ratio must lie in (-1, 0.5)");
      }
    }
  }

  // optimizer
  const YAML::Node opt = r.child(root, "optimizer");
  OptimizerSettings& o = c.optimizer;
  bool kappa_given = false;
  if (opt.IsDefined() && r.is_map(opt, "optimizer")) {
    r.allow(opt, "optimizer",
            {"target_weight", "evolution_ratio", "penalty", "xmin", "kappa", "tolerance", "history_window",
             "max_iterations", "macro_filter_radius", "micro_filter_radius", "flip_cap", "beta", "seed_fraction"});
    auto num = [&](std::string_view key, double& out) {
      if (const auto v = r.scalar<double>(r.child(opt, key), "optimizer." + std::string(key))) {
        out = *v;
        return true;
      }
      return false;
    };
    num("target_weight", o.target_weight);
    num("evolution_ratio", o.evolution_ratio);
    num("penalty", c.penalty);
    num("xmin", c.xmin);
    kappa_given = num("kappa", o.kappa);
    num("tolerance", o.tolerance);
    double hw = o.history_window;
    if (num("history_window", hw)) o.history_window = static_cast<int>(hw);
    double mi = o.max_iterations;
    if (num("max_iterations", mi)) o.max_iterations = static_cast<int>(mi);
    num("macro_filter_radius", o.macro_filter_radius);
    num("micro_filter_radius", o.micro_filter_radius);
    num("flip_cap", o.flip_cap);
    num("seed_fraction", o.seed_fraction);
    const YAML::Node b = r.child(opt, "beta");
    if (b.IsDefined() && b.IsScalar() && b.Scalar() != "auto") num("beta", o.beta);
  }
  if (!kappa_given) c.notices.push_back("optimizer.kappa not given; using 1");
  if (r.errors.empty()) {
    try {
      o.validate();
      require(c.penalty >= 1.0, "penalty exponent must be at least 1");
      require(c.xmin > 0.0 && c.xmin < 1.0, "x_min must lie in (0, 1)");
    } catch (const Error& e) {
      r.error("optimizer", e.what());
    }
  }

  // verify
  const YAML::Node ver = r.child(root, "verify");
  if (ver.IsDefined() && r.is_map(ver, "verify")) {
    r.allow(ver, "verify", {"interval_samples", "random_samples", "threads"});
    if (const auto v = r.scalar<int>(r.child(ver, "interval_samples"), "verify.interval_samples"))
      c.verify.interval_samples = *v;
    if (const auto v = r.scalar<int>(r.child(ver, "random_samples"), "verify.random_samples"))
      c.verify.random_samples = *v;
    if (const auto v = r.scalar<int>(r.child(ver, "threads"), "verify.threads")) c.verify.threads = *v;
    if (c.verify.interval_samples < 2 || c.verify.random_samples < 2)
      r.error("verify", "sample counts must be at least 2");
  }
  c.verify.seed = c.seed;

  // design
  const YAML::Node des = r.child(root, "design");
  if (des.IsDefined() && r.is_map(des, "design")) {
    r.allow(des, "design", {"macro_field", "micro_field"});
    auto path = [&](std::string_view key) -> std::optional<std::string> {
      const auto v = r.scalar<std::string>(r.child(des, key), "design." + std::string(key));
      if (!v) return std::nullopt;
      const std::filesystem::path p(*v);
      return p.is_absolute() ? p.string() : (std::filesystem::path(base_dir) / p).string();
    };
    c.macro_field = path("macro_field");
    c.micro_field = path("micro_field");
  }

  // anchors
  if (r.errors.empty()) {
    const Grid g = macro_grid(c);
    for (const auto& a : c.fixed) {
      try {
        anchor_nodes(g, a);
      } catch (const Error& e) {
        r.error("boundary.fixed", e.what());
      }
    }
    for (const auto& l : c.loads) {
      try {
        anchor_nodes(g, l.anchor);
      } catch (const Error& e) {
        r.error("boundary.loads", e.what());
      }
    }
  }

  if (!r.errors.empty()) {
    std::string msg = "invalid config (" + std::to_string(r.errors.size()) + " problem" +
                      (r.errors.size() == 1 ? "" : "s") + "):";
    for (const auto& e : r.errors) msg += "\n  " + e;
    fail(ErrorCategory::config, msg);
  }
  return c;
}

std::vector<int> anchor_nodes(const Grid& grid, std::string_view anchor) {
  std::array<std::optional<int>, 3> fix;
  bool centre = false;
  std::size_t pos = 0;
  require(!anchor.empty(), "empty anchor");
  while (pos <= anchor.size()) {
    const std::size_t end = std::min(anchor.find('-', pos), anchor.size());
    const std::string_view w = anchor.substr(pos, end - pos);
    auto set_axis = [&](int axis, int value) {
      require(axis < grid.dim, "anchor '" + std::string(anchor) + "' uses an axis the mesh does not have");
      require(!fix[axis], "anchor '" + std::string(anchor) + "' constrains one axis twice");
      fix[axis] = value;
    };
    if (w == "left") set_axis(0, 0);
    else if (w == "right") set_axis(0, grid.cells[0]);
    else if (w == "bottom") set_axis(1, 0);
    else if (w == "top") set_axis(1, grid.cells[1]);
    else if (w == "front") set_axis(2, 0);
    else if (w == "back") set_axis(2, grid.cells[2]);
    else if (w == "center") centre = true;
    else require(false, "unknown anchor word '" + std::string(w) + "' in '" + std::string(anchor) + "'");
    pos = end + 1;
  }
  if (centre) {
    for (std::size_t a = 0; a < fix.size() && static_cast<int>(a) < grid.dim; ++a) {
      if (!fix[a].has_value()) fix[a].emplace(grid.cells[a] / 2);
    }
  }
  std::vector<int> nodes;
  const int nz = grid.dim == 3 ? grid.cells[2] : 0;
  for (int k = 0; k <= nz; ++k) {
    if (fix[2] && *fix[2] != k) continue;
    for (int j = 0; j <= grid.cells[1]; ++j) {
      if (fix[1] && *fix[1] != j) continue;
      for (int i = 0; i <= grid.cells[0]; ++i) {
        if (fix[0] && *fix[0] != i) continue;
        nodes.push_back(grid.node_index(i, j, k));
      }
    }
  }
  return nodes;
}

Grid macro_grid(const RunConfig& c) {
  std::array<double, 3> h{1, 1, 1};
  for (int a = 0; a < c.dim; ++a) h[a] = c.macro_size[a] / c.macro_cells[a];
  std::array<int, 3> n = c.macro_cells;
  if (c.dim == 2) n[2] = 1;
  return Grid::make(c.dim, n, h);
}

Grid cell_grid(const RunConfig& c) {
  std::array<double, 3> h{1, 1, 1};
  for (int a = 0; a < c.dim; ++a) h[a] = c.cell_size[a] / c.cell_cells[a];
  std::array<int, 3> n = c.cell_cells;
  if (c.dim == 2) n[2] = 1;
  return Grid::make(c.dim, n, h);
}

Mesh build_mesh(const RunConfig& c) {
  Mesh m;
  m.grid = macro_grid(c);
  std::set<int> fixed;
  for (const auto& a : c.fixed) {
    for (int n : anchor_nodes(m.grid, a)) {
      for (int d = 0; d < c.dim; ++d) fixed.insert(n * c.dim + d);
    }
  }
  m.fixed_dofs.assign(fixed.begin(), fixed.end());
  for (const auto& l : c.loads) {
    const std::vector<int> nodes = anchor_nodes(m.grid, l.anchor);
    for (int n : nodes) {
      for (int d = 0; d < c.dim; ++d) {
        if (l.force[d] != 0.0) m.loads.emplace_back(n * c.dim + d, l.force[d] / static_cast<double>(nodes.size()));
      }
    }
  }
  return m;
}

Problem build_problem(const RunConfig& c) {
  TwoScaleModel model(build_mesh(c), cell_grid(c), angular_frequency(c.frequency_hz), c.penalty, c.xmin);
  return Problem{std::move(model), c.materials, c.uncertain};
}

}  // namespace cto
