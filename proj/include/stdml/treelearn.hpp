#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stdml/lattice.hpp"

namespace stdml {

struct TreePrior {
  double base = 0.95;   // P(split) at the root
  double power = 2.0;   // decay with depth: base * (1 + depth)^-power
};

struct LearnerConfig {
  int n_trees = 200;
  int burn_in = 100;
  int kept_draws = 1000;
  TreePrior tree_prior;
  double leaf_k = 2.0;
  double sigma_df = 3.0;
  double sigma_quantile = 0.90;
  int n_cutpoints = 100;
  int min_leaf_size = 5;
  std::uint64_t seed = 1;
  /// Forbid every split; each tree stays a single leaf.
  bool root_only = false;

  static LearnerConfig continuous_defaults() { return {}; }
  static LearnerConfig binary_defaults() {
    LearnerConfig c;
    c.n_trees = 50;
    return c;
  }
  void validate() const;
};

enum class ResponseKind { continuous, binary };

/// One node of a stored tree. Internal nodes send x[var] < value to `left`
/// and the rest to `left + 1`; leaves have var < 0 and hold the leaf mean.
struct FlatNode {
  std::int32_t var = -1;
  std::int32_t left = -1;
  double value = 0.0;
};

/// Posterior draws of a fitted sum-of-trees model.
struct TreeEnsembleModel {
  ResponseKind kind = ResponseKind::continuous;
  std::size_t n_features = 0;
  int n_trees = 0;
  int n_draws = 0;

  // Continuous: y = center + scale * f. Binary: P(y=1) = Phi(offset + f).
  double center = 0.0;
  double scale = 1.0;
  double offset = 0.0;

  /// Set when the training response was constant; predictions return it.
  bool constant = false;
  double constant_value = 0.0;

  std::vector<std::vector<double>> cutpoints;  // per feature, increasing
  std::vector<FlatNode> nodes;
  std::vector<std::uint32_t> tree_offsets;     // n_draws * n_trees + 1 entries

  std::vector<double> split_count_totals;      // per feature, summed over kept draws
  std::vector<double> sigma2_draws;            // original response units, continuous only

  // Prior hyperparameters on the internal (scaled) response.
  double leaf_prior_sd = 0.0;
  double sigma_prior_lambda = 0.0;
  double sigma_prior_df = 0.0;

  std::vector<std::string> warnings;

  std::span<const FlatNode> tree(int draw, int t) const;
};

/// Block intercepts α_g and their variance τ² per kept draw.
struct RandomEffectsFit {
  int n_blocks = 0;
  std::vector<double> alpha_draws;  // n_draws x n_blocks, row-major
  std::vector<double> tau2_draws;

  std::vector<double> alpha_mean() const;
  double tau2_mean() const;
};

struct RandomEffectsModel {
  TreeEnsembleModel trees;
  RandomEffectsFit effects;
};

TreeEnsembleModel fit_continuous(const Eigen::MatrixXd& features, std::span<const double> y,
                                 const LearnerConfig& cfg);

TreeEnsembleModel fit_binary(const Eigen::MatrixXd& features, std::span<const int> d,
                             const LearnerConfig& cfg);

/// Sum-of-trees plus block random intercepts. `blocks` holds one label in
/// [0, n_blocks) per training row.
RandomEffectsModel fit_continuous_re(const Eigen::MatrixXd& features, std::span<const double> y,
                                     std::span<const int> blocks, int n_blocks,
                                     const LearnerConfig& cfg);

/// Posterior-mean prediction (probabilities for binary models).
std::vector<double> predict(const TreeEnsembleModel& model, const Eigen::MatrixXd& features);

/// Tree predictions plus posterior-mean block intercepts.
std::vector<double> predict_with_effects(const RandomEffectsModel& model,
                                         const Eigen::MatrixXd& features,
                                         std::span<const int> blocks);

/// Average number of internal nodes splitting on each feature per kept draw.
std::vector<double> variable_importance(const TreeEnsembleModel& model);

/// Sum per-feature importances into groups; group[f] indexes the output.
std::vector<double> group_importance(std::span<const double> importance,
                                     std::span<const int> group, int n_groups);

/// Quantile cutpoint grid of one feature (at most `max_cuts` values, all
/// strictly above the minimum and at most the maximum).
std::vector<double> quantile_cutpoints(std::span<const double> values, int max_cuts);

/// Text dump of every stored tree, one node per line.
void write_model_dump(std::ostream& out, const TreeEnsembleModel& model);

}  // namespace stdml
