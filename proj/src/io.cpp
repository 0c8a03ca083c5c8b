#include "cto/io.hpp"

#include "cto/error.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace cto {

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::optional<FieldFormat> parse_field_format(std::string_view name) {
  if (name == "csv") return FieldFormat::csv;
  if (name == "vtk") return FieldFormat::vtk;
  return std::nullopt;
}

namespace {

double parse_number(std::string_view s, const std::string& where) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    fail(ErrorCategory::io, where + ": cannot read number '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t end = line.find(sep, pos);
    out.push_back(line.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

void check_field(const Grid& grid, std::span<const double> field) {
  require(static_cast<int>(field.size()) == grid.num_elements(), "field size does not match the grid");
}

}  // namespace

std::string field_csv(const Grid& grid, std::span<const double> field) {
  check_field(grid, field);
  std::string out = grid.dim == 2 ? "i,j,value\n" : "i,j,k,value\n";
  for (int e = 0; e < grid.num_elements(); ++e) {
    const auto c = grid.element_coords(e);
    out += std::to_string(c[0]) + "," + std::to_string(c[1]) + ",";
    if (grid.dim == 3) out += std::to_string(c[2]) + ",";
    out += format_number(field[e]) + "\n";
  }
  return out;
}

std::string field_vtk(const Grid& grid, std::span<const double> field, std::string_view name) {
  check_field(grid, field);
  const bool three = grid.dim == 3;
  std::string out = "# vtk DataFile Version 3.0\n";
  out += std::string(name) + "\nASCII\nDATASET STRUCTURED_POINTS\n";
  out += "DIMENSIONS " + std::to_string(grid.cells[0] + 1) + " " + std::to_string(grid.cells[1] + 1) + " " +
         std::to_string(three ? grid.cells[2] + 1 : 1) + "\n";
  out += "ORIGIN 0 0 0\n";
  out += "SPACING " + format_number(grid.spacing[0]) + " " + format_number(grid.spacing[1]) + " " +
         format_number(three ? grid.spacing[2] : 1.0) + "\n";
  out += "CELL_DATA " + std::to_string(grid.num_elements()) + "\n";
  out += "SCALARS " + std::string(name) + " double 1\nLOOKUP_TABLE default\n";
  for (double v : field) out += format_number(v) + "\n";
  return out;
}

void write_text(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCategory::io, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorCategory::io, "write failed for " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::io, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_field(const std::string& path, const Grid& grid, std::span<const double> field, FieldFormat format,
                 std::string_view name) {
  write_text(path, format == FieldFormat::csv ? field_csv(grid, field) : field_vtk(grid, field, name));
}

std::vector<double> read_field(const std::string& path, const Grid& grid) {
  const std::vector<std::string> lines = lines_of(read_text(path));
  require(!lines.empty(), path + " is empty");
  std::vector<double> field;
  if (lines[0].rfind("# vtk", 0) == 0) {
    std::size_t i = 0;
    while (i < lines.size() && lines[i].rfind("LOOKUP_TABLE", 0) != 0) ++i;
    for (++i; i < lines.size(); ++i) {
      if (!lines[i].empty()) field.push_back(parse_number(lines[i], path));
    }
  } else {
    const int cols = grid.dim == 3 ? 4 : 3;
    field.assign(grid.num_elements(), 0.0);
    std::vector<bool> seen(grid.num_elements(), false);
    for (std::size_t l = 1; l < lines.size(); ++l) {
      if (lines[l].empty()) continue;
      const auto parts = split(lines[l], ',');
      if (static_cast<int>(parts.size()) != cols) fail(ErrorCategory::io, path + ": malformed row");
      std::array<int, 3> ijk{0, 0, 0};
      for (int d = 0; d < cols - 1; ++d) {
        const double v = parse_number(parts[d], path);
        ijk[d] = static_cast<int>(v);
        if (ijk[d] < 0 || ijk[d] >= grid.cells[d]) fail(ErrorCategory::io, path + ": index out of range");
      }
      const int e = grid.element_index(ijk[0], ijk[1], ijk[2]);
      if (seen[e]) fail(ErrorCategory::io, path + ": element listed twice");
      seen[e] = true;
      field[e] = parse_number(parts[cols - 1], path);
    }
    for (bool s : seen) {
      if (!s) fail(ErrorCategory::io, path + ": field is incomplete");
    }
  }
  if (static_cast<int>(field.size()) != grid.num_elements()) {
    fail(ErrorCategory::io, path + ": field size does not match the grid");
  }
  return field;
}

std::string history_csv(std::span<const IterationRecord> history) {
  std::string out =
      "iteration,objective,expectation,std_dev,weight_target,weight_fraction,macro_solid_fraction,"
      "micro_phase1_fraction\n";
  for (const auto& r : history) {
    out += std::to_string(r.iteration);
    for (double v : {r.objective, r.expectation, r.std_dev, r.weight_target, r.weight_fraction,
                     r.macro_solid_fraction, r.micro_phase1_fraction}) {
      out += "," + format_number(v);
    }
    out += "\n";
  }
  return out;
}

void write_history(const std::string& path, std::span<const IterationRecord> history) {
  write_text(path, history_csv(history));
}

std::vector<IterationRecord> read_history(const std::string& path) {
  const std::vector<std::string> lines = lines_of(read_text(path));
  std::vector<IterationRecord> out;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    if (lines[l].empty()) continue;
    const auto p = split(lines[l], ',');
    if (p.size() != 8) fail(ErrorCategory::io, path + ": malformed history row");
    IterationRecord r;
    r.iteration = static_cast<int>(parse_number(p[0], path));
    r.objective = parse_number(p[1], path);
    r.expectation = parse_number(p[2], path);
    r.std_dev = parse_number(p[3], path);
    r.weight_target = parse_number(p[4], path);
    r.weight_fraction = parse_number(p[5], path);
    r.macro_solid_fraction = parse_number(p[6], path);
    r.micro_phase1_fraction = parse_number(p[7], path);
    out.push_back(r);
  }
  return out;
}

std::string effective_matrix_text(const Matrix& elasticity, double density) {
  std::ostringstream out;
  out << "# effective elasticity (MPa, Voigt order " << (elasticity.rows() == 3 ? "xx yy xy" : "xx yy zz yz xz xy")
      << ")\n";
  out << std::scientific << std::setprecision(9);
  for (int i = 0; i < elasticity.rows(); ++i) {
    for (int j = 0; j < elasticity.cols(); ++j) out << (j ? " " : "") << std::setw(17) << elasticity(i, j);
    out << "\n";
  }
  out << "# effective density (t/mm^3)\n" << density << "\n";
  return out.str();
}

double VerificationReport::relative_error(double ihpa, double mcs) {
  if (mcs == 0.0) return ihpa == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::abs(ihpa - mcs) / std::abs(mcs);
}

DesignState configured_design(const RunConfig& config, const TwoScaleModel& model) {
  DesignState s = initial_design(model, config.optimizer.seed_fraction);
  if (config.macro_field) s.macro = read_field(*config.macro_field, model.macro_grid());
  if (config.micro_field) s.micro = read_field(*config.micro_field, model.cell_grid());
  model.validate(s);
  return s;
}

VerificationReport verify(const RunConfig& config) {
  const Problem problem = build_problem(config);
  const DesignState state = configured_design(config, problem.model);
  const IhpaResult ihpa =
      ihpa_evaluate(problem.model, state, problem.materials, problem.uncertain, config.optimizer.kappa);
  const McsResult mcs = mcs_evaluate(problem.model, state, problem.materials, problem.uncertain, config.verify);
  VerificationReport r;
  r.ihpa_expectation = ihpa.objective.expectation;
  r.ihpa_std_dev = ihpa.objective.std_dev;
  r.mcs_expectation = mcs.max_expectation;
  r.mcs_std_dev = mcs.max_std_dev;
  r.kappa = config.optimizer.kappa;
  r.ihpa_calls = ihpa.fea_calls;
  r.mcs_calls = mcs.fea_calls;
  r.resampled = mcs.resampled;
  r.interval_points = mcs.interval_points;
  return r;
}

std::string report_text(const VerificationReport& r) {
  std::ostringstream out;
  auto pct = [](double e) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << 100.0 * e << "%";
    return s.str();
  };
  out << "Comparison of IHPA and MCS (kappa = " << format_number(r.kappa) << ")\n";
  out << std::left << std::setw(20) << "quantity" << std::setw(26) << "IHPA" << std::setw(26) << "MCS"
      << "relative error\n";
  auto row = [&](const char* name, double a, double b) {
    out << std::left << std::setw(20) << name << std::setw(26) << format_number(a) << std::setw(26)
        << format_number(b) << pct(VerificationReport::relative_error(a, b)) << "\n";
  };
  row("expectation", r.ihpa_expectation, r.mcs_expectation);
  row("standard deviation", r.ihpa_std_dev, r.mcs_std_dev);
  row("objective", r.ihpa_objective(), r.mcs_objective());
  out << std::left << std::setw(20) << "FEA calls" << std::setw(26) << r.ihpa_calls << std::setw(26) << r.mcs_calls
      << "\n";
  out << "interval points: " << r.interval_points << ", resampled draws: " << r.resampled << "\n";
  return out.str();
}

void write_bundle(const std::string& dir, const RunConfig& config, Mode mode, const OptimizationResult& result,
                  FieldFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCategory::io, "cannot create output directory " + dir + ": " + ec.message());
  const std::filesystem::path d(dir);
  const Grid macro = macro_grid(config);
  const Grid cell = cell_grid(config);
  write_text((d / "config.yaml").string(), config.source);
  std::string run = "mode: " + std::string(to_string(mode)) + "\nseed: " + std::to_string(config.seed) + "\n";
  run += "converged: " + std::string(result.converged ? "true" : "false") + "\n";
  run += "iterations: " + std::to_string(result.history.size()) + "\n";
  if (!result.history.empty()) run += "objective: " + format_number(result.history.back().objective) + "\n";
  run += "weight: " + format_number(result.weight) + "\n";
  run += "reference_weight: " + format_number(result.reference_weight) + "\n";
  run += "weight_quantum: " + format_number(result.quantum) + "\n";
  run += "fea_calls_per_iteration: " + std::to_string(result.fea_calls_per_iteration) + "\n";
  write_text((d / "run.txt").string(), run);
  write_history((d / "history.csv").string(), result.history);
  write_field((d / "macro.csv").string(), macro, result.design.macro, FieldFormat::csv);
  write_field((d / "micro.csv").string(), cell, result.design.micro, FieldFormat::csv);
  if (format == FieldFormat::vtk) {
    write_field((d / "macro.vtk").string(), macro, result.design.macro, FieldFormat::vtk);
    write_field((d / "micro.vtk").string(), cell, result.design.micro, FieldFormat::vtk);
  }
  write_text((d / "effective_elasticity.txt").string(),
             effective_matrix_text(result.effective_elasticity, result.effective_density));
}

namespace {

std::string run_value(const std::string& text, std::string_view key) {
  for (const auto& line : lines_of(text)) {
    if (line.rfind(std::string(key) + ": ", 0) == 0) return line.substr(key.size() + 2);
  }
  fail(ErrorCategory::io, "bundle run.txt lacks '" + std::string(key) + "'");
}

}  // namespace

BundleCheck reevaluate_bundle(const std::string& dir) {
  const std::filesystem::path d(dir);
  RunConfig config = parse_config_text(read_text((d / "config.yaml").string()), dir);
  const std::string run = read_text((d / "run.txt").string());
  const auto mode = parse_mode(run_value(run, "mode"));
  if (!mode) fail(ErrorCategory::io, "bundle run.txt has an unknown mode");
  const Problem problem = build_problem(config);
  DesignState state;
  state.macro = read_field((d / "macro.csv").string(), problem.model.macro_grid());
  state.micro = read_field((d / "micro.csv").string(), problem.model.cell_grid());
  const auto history = read_history((d / "history.csv").string());
  if (history.empty()) fail(ErrorCategory::io, "bundle history is empty");
  const Evaluation ev = evaluate(problem, state, *mode, config.optimizer.kappa);
  return {history.back().objective, ev.objective.value};
}

void export_bundle(const std::string& dir, const std::string& out_dir, FieldFormat format) {
  const std::filesystem::path d(dir);
  const RunConfig config = parse_config_text(read_text((d / "config.yaml").string()), dir);
  const Grid macro = macro_grid(config);
  const Grid cell = cell_grid(config);
  const std::vector<double> xm = read_field((d / "macro.csv").string(), macro);
  const std::vector<double> xc = read_field((d / "micro.csv").string(), cell);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorCategory::io, "cannot create output directory " + out_dir + ": " + ec.message());
  const std::filesystem::path o(out_dir);
  const char* ext = format == FieldFormat::csv ? ".csv" : ".vtk";
  write_field((o / (std::string("macro") + ext)).string(), macro, xm, format, "macro_density");
  write_field((o / (std::string("micro") + ext)).string(), cell, xc, format, "micro_density");
}

}  // namespace cto
