#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "stdml/dgp.hpp"
#include "stdml/dml.hpp"

namespace stdml {

enum class EstimatorKind { OLS, DID, STDML, ORACLE };

/// One estimator evaluated in a sweep. ORACLE plugs the true conditional
/// means and propensities in as first-stage predictions.
struct MethodSpec {
  std::string name;
  EstimatorKind kind = EstimatorKind::STDML;
  FeatureSet features = FeatureSet::XSZ;
  CrossFitMode cf = CrossFitMode::by_pixel;
  ReMode re = ReMode::none;
  int basis_size = 100;
  int k = 10;

  void validate(bool has_blocks) const;
};

MethodSpec ols_method();
MethodSpec did_method();
MethodSpec oracle_method();
/// Named "DML-<features>-CF" / "DML-<features>-noCF" when `block_style` is
/// false, "DML-<RE|noRE>-<pixelCF|blockCF|noCF>" otherwise.
MethodSpec stdml_method(FeatureSet features, CrossFitMode cf, ReMode re = ReMode::none,
                        bool block_style = false);

/// Eight rows of the pixel-design comparison: OLS, DID, and X/XS/XSZ with
/// and without cross-fitting.
std::vector<MethodSpec> pixel_table_methods();
/// Eight rows of the block-design comparison: OLS, DID, and {noRE, RE} x
/// {noCF, pixelCF, blockCF} with XSZ features.
std::vector<MethodSpec> block_table_methods();

using Scenario = std::variant<PixelSimConfig, BlockSimConfig>;

struct SweepOptions {
  unsigned threads = 1;  // replicates run concurrently
  LearnerConfig outcome_cfg = LearnerConfig::continuous_defaults();
  LearnerConfig treatment_cfg = LearnerConfig::binary_defaults();
  NeighborScheme neighbors = NeighborScheme::queen8;
  /// Abort when a method fails on more than this share of replicates.
  double max_failure_share = 0.10;
};

struct ReplicateResult {
  int replicate = 0;
  std::string method;
  bool ok = false;
  double gamma_hat = 0.0;
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  std::string error;
};

struct MetricSummary {
  std::string method;
  double bias = 0.0;
  double mse = 0.0;
  double ci_length = 0.0;
  double coverage = 0.0;
  double bias_se = 0.0;
  double mse_se = 0.0;
  double ci_length_se = 0.0;
  double coverage_se = 0.0;
  int n_ok = 0;
  int n_failed = 0;
};

struct SweepResult {
  double gamma_true = 0.0;
  std::vector<std::string> methods;
  std::vector<MetricSummary> summaries;         // one per method, input order
  std::vector<ReplicateResult> replicates;      // replicate-major
  std::vector<std::uint64_t> dataset_hashes;    // one per replicate
  std::vector<std::uint64_t> method_hashes;     // replicate-major, hash of the data each method saw
  int regenerations = 0;
};

/// Metrics over successful replicates; MC standard errors use the sample
/// standard deviation over sqrt(n).
MetricSummary summarize(const std::string& method, std::span<const ReplicateResult> reps, double truth);

SweepResult run_sweep(const Scenario& scenario, const std::vector<MethodSpec>& methods, int n_reps,
                      std::uint64_t seed, const SweepOptions& opts = {});

/// Evaluates one method on one dataset (used by run_sweep and the CLI).
EffectEstimate evaluate_method(const MethodSpec& method, const SimResult& sim, std::uint64_t seed,
                               const SweepOptions& opts);

/// FNV-1a over every field of the dataset.
std::uint64_t dataset_hash(const GridDataset& data);

/// Fixed-width text table, 3 decimals: Method, Bias, MSE, CI length, Coverage, Failed.
std::string render_table(const std::vector<MetricSummary>& rows);

/// Full-precision CSV; '#' lines are skipped on parsing.
void write_summary_csv(std::ostream& out, const std::vector<MetricSummary>& rows);
std::vector<MetricSummary> parse_summary_csv(std::istream& in);
void write_replicates_csv(std::ostream& out, const SweepResult& result);

/// Box summary of the estimates per method with a reference line at the truth.
std::string render_sweep_svg(const SweepResult& result, const std::string& title);

}  // namespace stdml
