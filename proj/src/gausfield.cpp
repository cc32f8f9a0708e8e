#include "stdml/gausfield.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <string>

#include "stdml/errors.hpp"
#include "stdml/random.hpp"

namespace stdml {
namespace {

// The FFTW planner is not reentrant.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

void validate(const MaternSpec& spec) {
  if (!(spec.range > 0.0) || !(spec.smoothness > 0.0) || !(spec.variance > 0.0))
    throw ConfigError("Matérn range, smoothness and variance must be positive");
}

// In-place 2-D complex DFT of a rows x cols array (row-major).
void dft2(std::vector<std::complex<double>>& data, int rows, int cols, int sign) {
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_2d(rows, cols, buf, buf, sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::lock_guard lock(fftw_planner_mutex());
  fftw_destroy_plan(plan);
}

}  // namespace

double matern_correlation(double d, const MaternSpec& spec) {
  validate(spec);
  if (std::isnan(d) || d < 0.0) throw DomainError("matern_correlation: distance must be >= 0");
  if (d == 0.0) return 1.0;
  const double nu = spec.smoothness;
  // Distance scaled by sqrt(2 nu) so that nu=3/2 gives (1+sqrt3 d/rho)exp(-sqrt3 d/rho).
  const double x = std::sqrt(2.0 * nu) * d / spec.range;
  const double k = std::cyl_bessel_k(nu, x);
  if (k == 0.0) return 0.0;
  const double log_value =
      (1.0 - nu) * std::log(2.0) - std::lgamma(nu) + nu * std::log(x) + std::log(k);
  return std::min(1.0, std::exp(log_value));
}

Eigen::MatrixXd matern_covariance(const Grid& grid, const MaternSpec& spec) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    cov(i, i) = spec.variance;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double c = spec.variance *
                       matern_correlation(distance(grid.coord(i), grid.coord(j)), spec);
      cov(i, j) = c;
      cov(j, i) = c;
    }
  }
  return cov;
}

FieldSampler::FieldSampler(const Grid& grid, const MaternSpec& spec, bool force_dense)
    : grid_(grid), spec_(spec) {
  validate(spec);
  if (!force_dense && grid.size() > 1) {
    int tr = std::max(2, 2 * (grid.rows() - 1));
    int tc = std::max(2, 2 * (grid.cols() - 1));
    // Very smooth fields need a long torus before the wrapped covariance
    // decays enough; beyond ~4M torus cells the dense path is cheaper.
    for (; static_cast<double>(tr) * tc <= 4.2e6; tr *= 2, tc *= 2) {
      if (try_circulant(tr, tc)) {
        method_ = FieldMethod::circulant;
        return;
      }
    }
  }
  build_dense();
}

bool FieldSampler::try_circulant(int tr, int tc) {
  const double h = grid_.spacing();
  std::vector<std::complex<double>> base(static_cast<std::size_t>(tr) * tc);
  for (int a = 0; a < tr; ++a) {
    const double dy = h * std::min(a, tr - a);
    for (int b = 0; b < tc; ++b) {
      const double dx = h * std::min(b, tc - b);
      base[static_cast<std::size_t>(a) * tc + b] =
          spec_.variance * matern_correlation(std::hypot(dx, dy), spec_);
    }
  }
  dft2(base, tr, tc, FFTW_FORWARD);
  double max_eig = 0.0;
  double min_eig = 0.0;
  for (const auto& z : base) {
    max_eig = std::max(max_eig, z.real());
    min_eig = std::min(min_eig, z.real());
  }
  // Roundoff-level negatives are clamped; anything larger rejects the torus.
  if (min_eig < -1e-10 * std::max(1.0, max_eig)) return false;
  const double total = static_cast<double>(tr) * tc;
  sqrt_eigen_.resize(base.size());
  for (std::size_t k = 0; k < base.size(); ++k)
    sqrt_eigen_[k] = std::sqrt(std::max(0.0, base[k].real()) / total);
  torus_rows_ = tr;
  torus_cols_ = tc;
  return true;
}

void FieldSampler::build_dense() {
  method_ = FieldMethod::dense;
  const Eigen::MatrixXd cov = matern_covariance(grid_, spec_);
  const auto n = cov.rows();
  double jitter = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov + jitter * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) {
      chol_ = llt.matrixL();
      jitter_ = jitter;
      return;
    }
    jitter = jitter == 0.0 ? 1e-12 * spec_.variance : jitter * 10.0;
  }
  throw NumericalError("Cholesky of the " + std::to_string(n) + "x" + std::to_string(n) +
                       " Matérn covariance failed after jitter up to " +
                       std::to_string(jitter / 10.0) + " (range " +
                       std::to_string(spec_.range) + ", smoothness " +
                       std::to_string(spec_.smoothness) + ")");
}

FieldSample FieldSampler::draw(std::uint64_t seed) const {
  Rng rng(seed);
  FieldSample out;
  out.spec = spec_;
  out.seed = seed;
  out.values.resize(grid_.size());
  if (method_ == FieldMethod::dense) {
    Eigen::VectorXd z(chol_.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = std_normal(rng);
    const Eigen::VectorXd f = chol_.triangularView<Eigen::Lower>() * z;
    for (Eigen::Index i = 0; i < f.size(); ++i) out.values[i] = f[i];
    return out;
  }
  std::vector<std::complex<double>> w(sqrt_eigen_.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double re = std_normal(rng);
    const double im = std_normal(rng);
    w[k] = sqrt_eigen_[k] * std::complex<double>(re, im);
  }
  dft2(w, torus_rows_, torus_cols_, FFTW_FORWARD);
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    const std::size_t k =
        static_cast<std::size_t>(grid_.row_of(i)) * torus_cols_ + grid_.col_of(i);
    out.values[i] = w[k].real();
  }
  return out;
}

FieldSample sample_field(const Grid& grid, const MaternSpec& spec, std::uint64_t seed) {
  return FieldSampler(grid, spec).draw(seed);
}

std::uint64_t covariate_subseed(std::uint64_t seed, int j) {
  return derive_seed(seed, {0xC0FA, static_cast<std::uint64_t>(j)});
}

CovariateFields sample_covariates(const Grid& grid, const MaternSpec& spec, int count,
                                  std::uint64_t seed, int observed) {
  if (count < 1) throw ConfigError("sample_covariates: count must be >= 1");
  if (observed < 0 || observed > count)
    throw ConfigError("sample_covariates: observed count outside [0, count]");
  const FieldSampler sampler(grid, spec);
  CovariateFields out;
  out.observed = observed;
  for (int j = 0; j < count; ++j) out.fields.push_back(sampler.draw(covariate_subseed(seed, j)));
  return out;
}

Eigen::MatrixXd CovariateFields::all() const {
  const auto n = fields.empty() ? 0 : static_cast<Eigen::Index>(fields.front().values.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(fields.size()));
  for (std::size_t j = 0; j < fields.size(); ++j)
    for (Eigen::Index i = 0; i < n; ++i) x(i, static_cast<Eigen::Index>(j)) = fields[j].values[i];
  return x;
}

Eigen::MatrixXd CovariateFields::observed_matrix() const { return all().leftCols(observed); }

}  // namespace stdml
