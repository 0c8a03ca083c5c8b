#pragma once

// Run configuration (YAML). See docs/config.md for the grammar.

#include "cto/beso.hpp"
#include "cto/uncertainty.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cto {

struct LoadSpec {
  std::string anchor;
  std::array<double, 3> force{0, 0, 0};  // N, total over the anchor's nodes
};

struct RunConfig {
  Mode mode = Mode::rcto;
  std::uint64_t seed = 1;

  int dim = 2;
  std::array<int, 3> macro_cells{1, 1, 1};
  std::array<double, 3> macro_size{1, 1, 1};  // mm
  std::array<int, 3> cell_cells{1, 1, 1};
  std::array<double, 3> cell_size{1, 1, 1};

  std::vector<std::string> fixed;  // anchors with all DOFs fixed
  std::vector<LoadSpec> loads;
  double frequency_hz = 0.0;

  PhaseMaterials materials;  // MPa, tonne/mm³
  UncertainSet uncertain;
  double penalty = 3.0;
  double xmin = 1e-6;
  OptimizerSettings optimizer;
  McsOptions verify;

  std::optional<std::string> macro_field;  // resolved paths
  std::optional<std::string> micro_field;

  std::vector<std::string> notices;  // defaults that were applied
  std::string source;                // original text
};

RunConfig parse_config(const std::string& path);
/// `base_dir` resolves relative field paths.
RunConfig parse_config_text(const std::string& text, const std::string& base_dir = ".");

/// Node indices selected by an anchor such as "left", "right-bottom" or
/// "right-center". Each word fixes one axis; "center" fixes every remaining
/// axis at its middle node; unconstrained axes span the whole face or edge.
std::vector<int> anchor_nodes(const Grid& grid, std::string_view anchor);

Grid macro_grid(const RunConfig& config);
Grid cell_grid(const RunConfig& config);
Mesh build_mesh(const RunConfig& config);
Problem build_problem(const RunConfig& config);

}  // namespace cto
