#pragma once

// Result files: density fields (CSV, legacy VTK), iteration history, the
// effective elasticity block and the IHPA/MCS comparison report.

#include "cto/beso.hpp"
#include "cto/config.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cto {

/// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

enum class FieldFormat { csv, vtk };
std::optional<FieldFormat> parse_field_format(std::string_view name);

/// CSV with header i,j[,k],value, x fastest.
std::string field_csv(const Grid& grid, std::span<const double> field);
/// Legacy ASCII STRUCTURED_POINTS with one CELL_DATA scalar, x fastest.
std::string field_vtk(const Grid& grid, std::span<const double> field, std::string_view name);

void write_field(const std::string& path, const Grid& grid, std::span<const double> field, FieldFormat format,
                 std::string_view name = "density");
std::vector<double> read_field(const std::string& path, const Grid& grid);

std::string history_csv(std::span<const IterationRecord> history);
void write_history(const std::string& path, std::span<const IterationRecord> history);
std::vector<IterationRecord> read_history(const std::string& path);

/// Plain-text block with D^H (rows of the Voigt matrix) and ρ^H.
std::string effective_matrix_text(const Matrix& elasticity, double density);

struct VerificationReport {
  double ihpa_expectation = 0.0;
  double ihpa_std_dev = 0.0;
  double mcs_expectation = 0.0;
  double mcs_std_dev = 0.0;
  double kappa = 1.0;
  std::size_t ihpa_calls = 0;
  std::size_t mcs_calls = 0;
  std::size_t resampled = 0;
  int interval_points = 0;

  double ihpa_objective() const { return ihpa_expectation + kappa * ihpa_std_dev; }
  double mcs_objective() const { return mcs_expectation + kappa * mcs_std_dev; }
  /// |a − b| / |b| with b the MCS value; 0 when both vanish.
  static double relative_error(double ihpa, double mcs);
};

VerificationReport verify(const RunConfig& config);
std::string report_text(const VerificationReport& report);

/// Design used by verify: the configured fields, or the initial design.
DesignState configured_design(const RunConfig& config, const TwoScaleModel& model);

void write_text(const std::string& path, std::string_view text);
std::string read_text(const std::string& path);

/// Writes config echo, run settings, fields, history and D^H into `dir`.
void write_bundle(const std::string& dir, const RunConfig& config, Mode mode, const OptimizationResult& result,
                  FieldFormat format = FieldFormat::csv);

struct BundleCheck {
  double logged = 0.0;
  double recomputed = 0.0;
};

/// Re-evaluates the final design of a bundle and returns the logged and
/// recomputed objective.
BundleCheck reevaluate_bundle(const std::string& dir);

/// Re-exports the final fields of a bundle in another format.
void export_bundle(const std::string& dir, const std::string& out_dir, FieldFormat format);

}  // namespace cto
