#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "stdml/lattice.hpp"

namespace stdml {

/// Matérn correlation parameters; distance enters as d / range.
struct MaternSpec {
  double range = 0.3;
  double smoothness = 2.0;
  double variance = 1.0;
};

/// 2^(1-nu)/Gamma(nu) (d/rho)^nu K_nu(d/rho), equal to 1 at d = 0.
double matern_correlation(double d, const MaternSpec& spec);

struct FieldSample {
  std::vector<double> values;
  MaternSpec spec;
  std::uint64_t seed = 0;
};

enum class FieldMethod { circulant, dense };

/// Reusable exact sampler for a stationary Matérn field on a grid.
///
/// Circulant embedding on a torus padded to at least twice the grid
/// extent; the torus doubles (up to three times) until the embedding is
/// nonnegative definite, otherwise a dense Cholesky factor with escalating
/// diagonal jitter is used.
class FieldSampler {
 public:
  FieldSampler(const Grid& grid, const MaternSpec& spec, bool force_dense = false);

  FieldSample draw(std::uint64_t seed) const;

  FieldMethod method() const noexcept { return method_; }
  int torus_rows() const noexcept { return torus_rows_; }
  int torus_cols() const noexcept { return torus_cols_; }
  /// Diagonal jitter added before the Cholesky succeeded (dense path only).
  double jitter() const noexcept { return jitter_; }

 private:
  bool try_circulant(int torus_rows, int torus_cols);
  void build_dense();

  Grid grid_;
  MaternSpec spec_;
  FieldMethod method_ = FieldMethod::circulant;
  int torus_rows_ = 0;
  int torus_cols_ = 0;
  std::vector<double> sqrt_eigen_;  // scaled sqrt of circulant eigenvalues
  Eigen::MatrixXd chol_;            // lower factor on the dense path
  double jitter_ = 0.0;
};

/// Dense covariance matrix of the grid under `spec` (test oracle and fallback).
Eigen::MatrixXd matern_covariance(const Grid& grid, const MaternSpec& spec);

FieldSample sample_field(const Grid& grid, const MaternSpec& spec, std::uint64_t seed);

/// Independent fields with sub-seeds derive_seed(seed, {j}).
struct CovariateFields {
  std::vector<FieldSample> fields;
  int observed = 3;

  /// n x count matrix of all fields.
  Eigen::MatrixXd all() const;
  /// n x observed matrix of the leading observed fields.
  Eigen::MatrixXd observed_matrix() const;
};

std::uint64_t covariate_subseed(std::uint64_t seed, int j);

CovariateFields sample_covariates(const Grid& grid, const MaternSpec& spec, int count,
                                  std::uint64_t seed, int observed = 3);

}  // namespace stdml
