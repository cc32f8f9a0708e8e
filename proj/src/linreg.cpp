#include "stdml/linreg.hpp"

#include <string>

#include "stdml/errors.hpp"

namespace stdml {

LinearFit ols_hc0(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                  std::vector<std::string> names) {
  const auto n = design.rows();
  const auto p = design.cols();
  if (response.size() != n)
    throw ShapeError("ols_hc0: " + std::to_string(response.size()) + " responses for " +
                     std::to_string(n) + " design rows");
  if (static_cast<Eigen::Index>(names.size()) != p)
    throw ShapeError("ols_hc0: column names do not match design width");
  if (n < p)
    throw SingularityError("ols_hc0: fewer rows (" + std::to_string(n) + ") than columns (" +
                               std::to_string(p) + ")",
                           names);
  if (!design.allFinite() || !response.allFinite())
    throw DomainError("ols_hc0: design and response must be finite");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    std::vector<std::string> dependent;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < p; ++k) dependent.push_back(names[perm[k]]);
    std::string msg = "design matrix is rank deficient (rank " + std::to_string(qr.rank()) +
                      " of " + std::to_string(p) + "); collinear columns:";
    for (const auto& c : dependent) msg += " " + c;
    throw SingularityError(msg, dependent);
  }

  LinearFit fit;
  fit.names = std::move(names);
  fit.coef = qr.solve(response);
  fit.residuals = response - design * fit.coef;

  // (Z'Z)^-1 = P R^-1 R^-T P' with Z P = Q R.
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const auto perm = qr.colsPermutation();
  const Eigen::MatrixXd bread = perm * (r_inv * r_inv.transpose()) * perm.transpose();

  const Eigen::MatrixXd weighted = design.array().colwise() * fit.residuals.array();
  const Eigen::MatrixXd meat = weighted.transpose() * weighted;
  const Eigen::MatrixXd cov = bread * meat * bread;
  fit.cov = 0.5 * (cov + cov.transpose());
  return fit;
}

}  // namespace stdml
