#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace stdml {

/// Least-squares fit with heteroskedasticity-consistent (HC0) covariance.
struct LinearFit {
  std::vector<std::string> names;
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;
  Eigen::VectorXd residuals;
};

/// Solves min |y - Z b| by column-pivoted QR. The covariance is
/// (Z'Z)^-1 Z' diag(e^2) Z (Z'Z)^-1 with e the fitted residuals.
/// Throws SingularityError naming the dependent columns when Z is rank deficient.
LinearFit ols_hc0(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                  std::vector<std::string> names);

}  // namespace stdml
