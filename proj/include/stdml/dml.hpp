#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stdml/lattice.hpp"
#include "stdml/treelearn.hpp"

namespace stdml {

/// Two-period gridded panel. Y values at unobserved cells are NaN and the
/// observation masks say which cells count.
struct GridDataset {
  Grid grid{1, 1, 1.0};
  std::vector<double> y0;
  std::vector<double> y1;
  std::vector<std::uint8_t> observed0;
  std::vector<std::uint8_t> observed1;
  std::vector<int> d;
  Eigen::MatrixXd x;  // n x p observed covariates, no intercept column
  std::vector<std::string> covariate_names;
  std::optional<BlockPartition> blocks;
  /// Pixels taking part in the analysis. Cells absent from an ingested file
  /// are inactive: no outcomes, no folds, skipped by neighbor means.
  std::vector<std::uint8_t> active;

  std::size_t size() const noexcept { return grid.size(); }
  std::size_t covariate_count() const noexcept { return static_cast<std::size_t>(x.cols()); }
  bool observed(std::size_t i, int t) const { return (t == 0 ? observed0 : observed1)[i] != 0; }
  double y(std::size_t i, int t) const { return (t == 0 ? y0 : y1)[i]; }
  std::size_t active_count() const;

  /// Throws ShapeError/DomainError when any invariant is broken.
  void validate() const;
};

/// Fully observed, all-active dataset scaffold of the right shapes.
GridDataset make_dataset(const Grid& grid, std::size_t covariates);

enum class CrossFitMode { none, by_pixel, by_block };
enum class FeatureSet { X, XS, XSZ };
enum class ReMode { none, block_re };

struct FoldAssignment {
  int k = 1;
  CrossFitMode mode = CrossFitMode::none;
  std::vector<int> fold;  // per pixel in [0, k), -1 for inactive pixels

  std::vector<std::size_t> sizes() const;
};

FoldAssignment assign_folds(const GridDataset& data, int k, CrossFitMode mode, std::uint64_t seed);

struct FirstStageOptions {
  FeatureSet features = FeatureSet::XSZ;
  ReMode re = ReMode::none;
  int basis_size = 100;
  LearnerConfig outcome_cfg = LearnerConfig::continuous_defaults();
  LearnerConfig treatment_cfg = LearnerConfig::binary_defaults();
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

/// First-stage predictions. Unpredicted cells are NaN.
struct FirstStageResult {
  std::vector<double> y0_hat;
  std::vector<double> y1_hat;
  std::vector<double> d_hat;
  std::vector<std::string> feature_names;
  /// Split-count importance averaged over folds, rows Y0, Y1, D.
  std::vector<std::vector<double>> importance;
  std::vector<std::string> diagnostics;
};

/// Feature matrix for the chosen feature set (covariates, coordinates, and
/// Wendland features) with column names.
Eigen::MatrixXd build_features(const GridDataset& data, FeatureSet set, int basis_size,
                               std::vector<std::string>* names = nullptr);

FirstStageResult first_stage(const GridDataset& data, const FoldAssignment& folds,
                             const FirstStageOptions& opts);

struct ResidualPanel {
  std::vector<double> r0;      // NaN where Y_i0 is unobserved
  std::vector<double> r1;
  std::vector<double> rd;      // NaN for inactive pixels
  std::vector<double> rd_bar;
  std::vector<std::size_t> isolated;  // pixels without an observed neighbor
};

ResidualPanel residuals(const GridDataset& data, const FirstStageResult& preds, const Neighborhood& nb);

inline constexpr double kNormal975 = 1.959964;

struct EffectEstimate {
  std::string method;
  std::vector<std::string> names;
  Eigen::VectorXd theta;
  Eigen::MatrixXd cov;
  double gamma = 0.0;
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  std::size_t n_rows = 0;
  std::map<std::string, std::string> metadata;

  double coef(const std::string& name) const;
  double ci_length() const noexcept { return ci_upper - ci_lower; }
  bool covers(double truth) const noexcept { return ci_lower <= truth && truth <= ci_upper; }
};

struct SecondStageOptions {
  bool include_neighbors = true;
  /// Drop pixels without observed neighbors instead of zero-filling R̄^D.
  bool drop_isolated = false;
};

/// Stacked residual regression
///   R^Y_it = β + δt + α R^D_i + ᾱ R̄^D_i + γ t R^D_i + γ̄ t R̄^D_i + ε_it
/// with HC0 covariance; the ᾱ, γ̄ columns are dropped without neighbors.
EffectEstimate second_stage(const ResidualPanel& panel, const SecondStageOptions& opts = {});

/// Y_it on (1, X_i, t, D_i, t D_i) with HC0 errors.
EffectEstimate baseline_ols(const GridDataset& data);

/// baseline_ols plus the neighbor-treatment terms D̄_i and t D̄_i.
EffectEstimate baseline_did(const GridDataset& data, const Neighborhood& nb);

/// (post_T - post_C) - (pre_T - pre_C).
double naive_did(double pre_treated, double pre_control, double post_treated, double post_control);

struct GroupMeans {
  double pre_treated = 0.0;
  double pre_control = 0.0;
  double post_treated = 0.0;
  double post_control = 0.0;
};

/// Observed-cell outcome means by treatment group and period.
GroupMeans group_means(const GridDataset& data);

struct StdmlConfig {
  FeatureSet features = FeatureSet::XSZ;
  CrossFitMode cf = CrossFitMode::by_pixel;
  int k = 10;
  ReMode re = ReMode::none;
  int basis_size = 100;
  NeighborScheme neighbors = NeighborScheme::queen8;
  std::uint64_t seed = 1;
  LearnerConfig outcome_cfg = LearnerConfig::continuous_defaults();
  LearnerConfig treatment_cfg = LearnerConfig::binary_defaults();
  unsigned threads = 1;
  /// Defaults to the full model except under block cross-fitting.
  std::optional<bool> include_neighbors;
  bool drop_isolated = false;
};

struct StdmlRun {
  FoldAssignment folds;
  FirstStageResult first_stage;
  ResidualPanel panel;
  EffectEstimate estimate;
};

StdmlRun run_stdml_detailed(const GridDataset& data, const StdmlConfig& cfg);
EffectEstimate run_stdml(const GridDataset& data, const StdmlConfig& cfg);

/// Second stage on externally supplied first-stage predictions.
EffectEstimate estimate_from_predictions(const GridDataset& data, const FirstStageResult& preds,
                                         const Neighborhood& nb, const SecondStageOptions& opts = {});

std::string to_string(FeatureSet f);
std::string to_string(CrossFitMode m);
std::string to_string(ReMode m);
std::string to_string(NeighborScheme s);
FeatureSet parse_feature_set(const std::string& s);
CrossFitMode parse_cross_fit(const std::string& s);
ReMode parse_re_mode(const std::string& s);
NeighborScheme parse_neighbor_scheme(const std::string& s);

/// key=value text record of an estimate (schema in README).
void write_estimate_record(std::ostream& out, const EffectEstimate& est);
EffectEstimate read_estimate_record(std::istream& in);
/// Several concatenated records, each opened by its '# estimate record' line.
std::vector<EffectEstimate> read_estimate_records(std::istream& in);

}  // namespace stdml
