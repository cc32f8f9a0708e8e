#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "stdml/config.hpp"
#include "stdml/mc.hpp"

namespace stdml {

/// Runs one command line (args[0] is the program name) and returns the
/// process exit code: 0 success, 1 usage, 2 validation, 3 numerical.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "OLS", "DID", "Oracle", "DML-<X|XS|XSZ>-<CF|noCF>" or
/// "DML-<noRE|RE>-<noCF|pixelCF|blockCF>".
MethodSpec parse_method(const std::string& name);

/// Expands the presets pixel_table / block_table and applies K and L.
std::vector<MethodSpec> methods_from_config(const RunConfig& cfg, const std::string& fallback);

Scenario scenario_from_config(const RunConfig& cfg);
SweepOptions sweep_options_from_config(const RunConfig& cfg);
StdmlConfig stdml_from_config(const RunConfig& cfg);

/// Method, Estimate, Standard Error, CI Lower, CI Upper; 3 decimals.
std::string render_estimates(const std::vector<EffectEstimate>& rows);

struct ImportanceTable {
  std::vector<std::string> columns;              // covariates then "spatial"
  std::vector<std::vector<double>> rows;         // Y0, Y1, D
  std::vector<std::string> feature_names;        // per-feature detail
  std::vector<std::vector<double>> detail;
};

/// Folds coordinate and basis-feature importances into one "spatial" column.
ImportanceTable importance_table(const FirstStageResult& fs, std::size_t n_covariates);
std::string render_importance(const ImportanceTable& table);

}  // namespace stdml
