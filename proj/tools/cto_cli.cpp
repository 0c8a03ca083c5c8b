// cto: concurrent two-scale topology optimization under hybrid uncertainty.
//
//   cto run    --config FILE [--out DIR] [--mode dcto|rcto] [--seed N] [--dump-iterations] [--format csv|vtk]
//   cto verify --config FILE [--out DIR] [--seed N]
//   cto export --bundle DIR --out DIR [--format csv|vtk]

#include "cto/config.hpp"
#include "cto/error.hpp"
#include "cto/io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

namespace {

int report(const cto::Error& e) {
  std::cerr << "error(" << cto::to_string(e.category()) << "): " << e.what() << "\n";
  return cto::exit_code(e.category());
}

void log_notices(const cto::RunConfig& c) {
  for (const auto& n : c.notices) std::cerr << "note: " << n << "\n";
}

std::string iteration_dir(const std::string& out, int k) {
  char name[32];
  std::snprintf(name, sizeof name, "iter_%04d", k);
  return (std::filesystem::path(out) / "iterations" / name).string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concurrent two-scale topology optimization under hybrid interval-random uncertainty"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "cto_out";
  std::string mode_name;
  std::string format_name = "csv";
  std::uint64_t seed = 0;
  bool dump = false;
  std::string bundle;

  auto* run = app.add_subcommand("run", "optimize the design described by a config");
  run->add_option("--config", config_path, "config file (YAML)")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--mode", mode_name, "dcto or rcto (overrides the config)")->check(CLI::IsMember({"dcto", "rcto"}));
  run->add_option("--seed", seed, "seed (overrides the config)");
  run->add_flag("--dump-iterations", dump, "write fields and filtered sensitivities of every iteration");
  run->add_option("--format", format_name, "field format: csv or vtk")->check(CLI::IsMember({"csv", "vtk"}));

  auto* ver = app.add_subcommand("verify", "compare the perturbation analysis against Monte Carlo");
  ver->add_option("--config", config_path, "config file (YAML)")->required();
  ver->add_option("--out", out_dir, "output directory");
  ver->add_option("--seed", seed, "seed (overrides the config)");

  auto* exp = app.add_subcommand("export", "re-export the fields of a result bundle");
  exp->add_option("--bundle", bundle, "result directory written by run")->required();
  exp->add_option("--out", out_dir, "output directory");
  exp->add_option("--format", format_name, "csv or vtk")->check(CLI::IsMember({"csv", "vtk"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cto::exit_code(cto::ErrorCategory::invalid_argument);
  }

  try {
    const cto::FieldFormat format = *cto::parse_field_format(format_name);
    if (*run) {
      cto::RunConfig config = cto::parse_config(config_path);
      log_notices(config);
      if (!mode_name.empty()) config.mode = *cto::parse_mode(mode_name);
      if (run->count("--seed")) config.seed = seed;
      const cto::Problem problem = cto::build_problem(config);
      cto::IterationCallback cb = [&](const cto::IterationRecord& r, const cto::DesignState& s,
                                      const cto::SensitivityField* xi) {
        std::cerr << "it " << r.iteration << "  objective " << cto::format_number(r.objective) << "  W "
                  << cto::format_number(r.weight_fraction) << "\n";
        if (!dump) return;
        const std::string d = iteration_dir(out_dir, r.iteration);
        std::filesystem::create_directories(d);
        cto::write_field(d + "/macro.csv", problem.model.macro_grid(), s.macro, cto::FieldFormat::csv);
        cto::write_field(d + "/micro.csv", problem.model.cell_grid(), s.micro, cto::FieldFormat::csv);
        if (xi) {
          cto::write_field(d + "/sensitivity_macro.csv", problem.model.macro_grid(), xi->macro, cto::FieldFormat::csv);
          cto::write_field(d + "/sensitivity_micro.csv", problem.model.cell_grid(), xi->micro, cto::FieldFormat::csv);
        }
      };
      const cto::OptimizationResult result = cto::run(problem, config.mode, config.optimizer, cb);
      cto::write_bundle(out_dir, config, config.mode, result, format);
      std::cout << (result.converged ? "converged" : "stopped") << " after " << result.history.size()
                << " iterations; objective " << cto::format_number(result.history.back().objective) << "\n";
      std::cout << cto::effective_matrix_text(result.effective_elasticity, result.effective_density);
    } else if (*ver) {
      cto::RunConfig config = cto::parse_config(config_path);
      log_notices(config);
      if (ver->count("--seed")) config.verify.seed = config.seed = seed;
      const std::string text = cto::report_text(cto::verify(config));
      std::cout << text;
      if (ver->count("--out")) {
        std::filesystem::create_directories(out_dir);
        cto::write_text((std::filesystem::path(out_dir) / "verify_report.txt").string(), text);
      }
    } else if (*exp) {
      cto::export_bundle(bundle, out_dir, format);
    }
  } catch (const cto::Error& e) {
    return report(e);
  } catch (const std::filesystem::filesystem_error& e) {
    return report(cto::Error(cto::ErrorCategory::io, e.what()));
  } catch (const std::exception& e) {
    std::cerr << "error(internal): " << e.what() << "\n";
    return 1;
  }
  return 0;
}
