#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "stdml/dml.hpp"
#include "stdml/gausfield.hpp"

namespace stdml {

/// Pixel-level design: five Matérn covariate fields of which the first
/// `p_observed` are released, logistic treatment, two-period outcomes.
struct PixelSimConfig {
  int m = 32;
  MaternSpec field{0.3, 2.0, 1.0};
  double sigma2 = 1.0;
  double gamma = 3.0;
  int p_observed = 3;
  double missing_frac = 0.2;
  /// Treatment logit is h1 / temperature; 1 keeps the design verbatim.
  double logit_temperature = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Block design: treatment assigned per block from block-mean covariates and
/// block intercepts shared by both periods.
struct BlockSimConfig {
  int m = 32;
  MaternSpec field{0.3, 2.0, 1.0};
  double sigma2 = 0.25;
  double tau2 = 0.25;
  double gamma = 3.0;
  int p_observed = 3;
  int block_size = 4;
  double missing_frac = 0.0;
  double logit_temperature = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

inline constexpr int kSimCovariates = 5;

struct SimTruth {
  double gamma = 0.0;
  Eigen::MatrixXd fields;          // n x 5, all covariates including hidden ones
  std::vector<double> propensity;  // P(D_i = 1)
  /// E[Y_it | all covariates, block effect], with D replaced by its propensity.
  std::vector<double> mean0;
  std::vector<double> mean1;
  std::vector<double> block_effects;  // block design only
  int regenerations = 0;              // replicates redrawn after a degenerate treatment
  std::uint64_t seed = 0;
};

struct SimResult {
  GridDataset data;
  SimTruth truth;
};

double expit(double x);

/// Treatment logit sin(πx1x2) + 20(x3 − 0.5)² + 10x4 + 5x5.
double h1(std::span<const double> x);

/// Outcome mean x1 + t·x1 + 3x4 + 5t·x5 + γ t d.
double h2(int t, std::span<const double> x, double d, double gamma);

SimResult simulate_pixel(const PixelSimConfig& cfg);
SimResult simulate_block(const BlockSimConfig& cfg);

/// Column means of `values` over each block (brute-force loop reference is
/// in the tests).
Eigen::MatrixXd block_means(const Eigen::MatrixXd& values, const BlockPartition& blocks);

}  // namespace stdml
