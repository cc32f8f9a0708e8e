#include "stdml/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "stdml/errors.hpp"
#include "stdml/random.hpp"

namespace stdml {
namespace {

constexpr int kMaxRegenerations = 1000;

// Sub-seed tags for the independent pieces of a replicate.
enum : std::uint64_t { kTagFields = 1, kTagTreatment = 2, kTagNoise = 3, kTagMissing = 4, kTagBlocks = 5,
               kTagRegenerate = 6 };

void check_common(int m, const MaternSpec& field, double sigma2, int p_observed, double missing_frac,
                  double temperature) {
  if (m < 2) throw ConfigError("simulation grid side m must be >= 2");
  if (!(field.range > 0.0) || !(field.smoothness > 0.0) || !(field.variance > 0.0))
    throw ConfigError("Matérn range, smoothness and variance must be positive");
  if (!(sigma2 >= 0.0)) throw ConfigError("noise variance must be >= 0");
  if (p_observed < 0 || p_observed > kSimCovariates)
    throw ConfigError("p_observed must lie in [0, " + std::to_string(kSimCovariates) + "]");
  if (!(missing_frac >= 0.0 && missing_frac < 1.0)) throw ConfigError("missing_frac must lie in [0, 1)");
  if (!(temperature > 0.0)) throw ConfigError("logit temperature must be positive");
}

// One Bernoulli draw per entry; false when every draw came out equal.
bool draw_treatment(const std::vector<double>& p, std::uint64_t seed, std::vector<int>& d) {
  d.resize(p.size());
  Rng rng(derive_seed(seed, {kTagTreatment}));
  std::size_t ones = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    d[i] = uniform01(rng) < p[i] ? 1 : 0;
    ones += static_cast<std::size_t>(d[i]);
  }
  return ones > 0 && ones < p.size();
}

// Seed of a regenerated replicate. With most propensities near 0 or 1 a
// degenerate draw usually means degenerate covariate fields, so the whole
// replicate is redrawn, not only the treatment.
std::uint64_t attempt_seed(std::uint64_t seed, int attempt) {
  return attempt == 0 ? seed : derive_seed(seed, {kTagRegenerate, static_cast<std::uint64_t>(attempt)});
}

[[noreturn]] void degenerate_failure() {
  throw DomainError("treatment stayed degenerate after " + std::to_string(kMaxRegenerations) + " regenerations");
}

// Masks exactly round(frac * 2n) of the 2n outcome cells.
void apply_missingness(GridDataset& ds, double frac, std::uint64_t seed) {
  const std::size_t n = ds.size();
  const auto masked = static_cast<std::size_t>(std::llround(frac * static_cast<double>(2 * n)));
  if (masked == 0) return;
  std::vector<std::size_t> cells(2 * n);
  std::iota(cells.begin(), cells.end(), 0);
  Rng rng(derive_seed(seed, {kTagMissing}));
  std::shuffle(cells.begin(), cells.end(), rng);
  for (std::size_t k = 0; k < masked; ++k) {
    const std::size_t c = cells[k];
    if (c < n) {
      ds.observed0[c] = 0;
      ds.y0[c] = std::numeric_limits<double>::quiet_NaN();
    } else {
      ds.observed1[c - n] = 0;
      ds.y1[c - n] = std::numeric_limits<double>::quiet_NaN();
    }
  }
}

struct Outcomes {
  std::vector<double> y0, y1, mean0, mean1;
};

Outcomes draw_outcomes(const Eigen::MatrixXd& fields, const std::vector<int>& d, const std::vector<double>& p,
                       const std::vector<double>& intercept, double gamma, double sigma2, std::uint64_t seed) {
  const std::size_t n = d.size();
  Outcomes out;
  out.y0.resize(n);
  out.y1.resize(n);
  out.mean0.resize(n);
  out.mean1.resize(n);
  Rng rng(derive_seed(seed, {kTagNoise}));
  const double sd = std::sqrt(sigma2);
  double x[kSimCovariates];
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < kSimCovariates; ++j) x[j] = fields(static_cast<Eigen::Index>(i), j);
    const double a = intercept.empty() ? 0.0 : intercept[i];
    const double e0 = sd * std_normal(rng);
    const double e1 = sd * std_normal(rng);
    out.y0[i] = a + h2(0, x, d[i], gamma) + e0;
    out.y1[i] = a + h2(1, x, d[i], gamma) + e1;
    out.mean0[i] = a + h2(0, x, p[i], gamma);
    out.mean1[i] = a + h2(1, x, p[i], gamma);
  }
  return out;
}

GridDataset assemble(const Grid& grid, const Eigen::MatrixXd& fields, int p_observed, const std::vector<int>& d,
                     Outcomes& y) {
  GridDataset ds = make_dataset(grid, static_cast<std::size_t>(p_observed));
  ds.x = fields.leftCols(p_observed);
  ds.d = d;
  ds.y0 = std::move(y.y0);
  ds.y1 = std::move(y.y1);
  return ds;
}

}  // namespace

void PixelSimConfig::validate() const {
  check_common(m, field, sigma2, p_observed, missing_frac, logit_temperature);
}

void BlockSimConfig::validate() const {
  check_common(m, field, sigma2, p_observed, missing_frac, logit_temperature);
  if (!(tau2 >= 0.0)) throw ConfigError("block effect variance must be >= 0");
  if (block_size < 1 || m % block_size != 0)
    throw ConfigError("block size " + std::to_string(block_size) + " does not tile a " + std::to_string(m) +
                      "x" + std::to_string(m) + " grid");
}

double expit(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double h1(std::span<const double> x) {
  if (x.size() < kSimCovariates) throw ShapeError("h1 needs five covariates");
  return std::sin(std::numbers::pi * x[0] * x[1]) + 20.0 * (x[2] - 0.5) * (x[2] - 0.5) + 10.0 * x[3] +
         5.0 * x[4];
}

double h2(int t, std::span<const double> x, double d, double gamma) {
  if (x.size() < kSimCovariates) throw ShapeError("h2 needs five covariates");
  return x[0] + t * x[0] + 3.0 * x[3] + 5.0 * t * x[4] + gamma * t * d;
}

SimResult simulate_pixel(const PixelSimConfig& cfg) {
  cfg.validate();
  const Grid grid = build_grid(cfg.m, cfg.m, 1.0 / (cfg.m - 1));
  const std::size_t n = grid.size();
  SimResult res;
  res.truth.gamma = cfg.gamma;
  res.truth.seed = cfg.seed;
  std::vector<int> d;
  std::uint64_t seed = cfg.seed;
  for (int attempt = 0;; ++attempt) {
    if (attempt > kMaxRegenerations) degenerate_failure();
    seed = attempt_seed(cfg.seed, attempt);
    res.truth.fields = sample_covariates(grid, cfg.field, kSimCovariates, derive_seed(seed, {kTagFields})).all();
    res.truth.propensity.resize(n);
    double x[kSimCovariates];
    for (std::size_t i = 0; i < n; ++i) {
      for (int j = 0; j < kSimCovariates; ++j) x[j] = res.truth.fields(static_cast<Eigen::Index>(i), j);
      res.truth.propensity[i] = expit(h1(x) / cfg.logit_temperature);
    }
    if (draw_treatment(res.truth.propensity, seed, d)) {
      res.truth.regenerations = attempt;
      break;
    }
  }
  Outcomes y = draw_outcomes(res.truth.fields, d, res.truth.propensity, {}, cfg.gamma, cfg.sigma2, seed);
  res.truth.mean0 = y.mean0;
  res.truth.mean1 = y.mean1;
  res.data = assemble(grid, res.truth.fields, cfg.p_observed, d, y);
  apply_missingness(res.data, cfg.missing_frac, seed);
  return res;
}

Eigen::MatrixXd block_means(const Eigen::MatrixXd& values, const BlockPartition& blocks) {
  if (blocks.labels.size() != static_cast<std::size_t>(values.rows()))
    throw ShapeError("block_means: labels do not match rows");
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(blocks.count, values.cols());
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(blocks.count);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    const int g = blocks.labels[static_cast<std::size_t>(i)];
    if (g < 0) continue;
    sums.row(g) += values.row(i);
    counts[g] += 1.0;
  }
  return sums.array().colwise() / counts.array();
}

SimResult simulate_block(const BlockSimConfig& cfg) {
  cfg.validate();
  const Grid grid = build_grid(cfg.m, cfg.m, 1.0 / (cfg.m - 1));
  const std::size_t n = grid.size();
  const BlockPartition blocks = rectangular_blocks(grid, cfg.block_size, cfg.block_size);
  SimResult res;
  res.truth.gamma = cfg.gamma;
  res.truth.seed = cfg.seed;
  std::vector<double> block_p(static_cast<std::size_t>(blocks.count));
  std::vector<int> block_d;
  std::uint64_t seed = cfg.seed;
  for (int attempt = 0;; ++attempt) {
    if (attempt > kMaxRegenerations) degenerate_failure();
    seed = attempt_seed(cfg.seed, attempt);
    res.truth.fields = sample_covariates(grid, cfg.field, kSimCovariates, derive_seed(seed, {kTagFields})).all();
    const Eigen::MatrixXd xbar = block_means(res.truth.fields, blocks);
    double x[kSimCovariates];
    for (int g = 0; g < blocks.count; ++g) {
      for (int j = 0; j < kSimCovariates; ++j) x[j] = xbar(g, j);
      block_p[static_cast<std::size_t>(g)] = expit(h1(x) / cfg.logit_temperature);
    }
    if (draw_treatment(block_p, seed, block_d)) {
      res.truth.regenerations = attempt;
      break;
    }
  }

  Rng rng(derive_seed(seed, {kTagBlocks}));
  const double tau = std::sqrt(cfg.tau2);
  res.truth.block_effects.resize(static_cast<std::size_t>(blocks.count));
  for (auto& a : res.truth.block_effects) a = tau * std_normal(rng);

  std::vector<int> d(n);
  std::vector<double> intercept(n);
  res.truth.propensity.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = static_cast<std::size_t>(blocks.labels[i]);
    d[i] = block_d[g];
    intercept[i] = res.truth.block_effects[g];
    res.truth.propensity[i] = block_p[g];
  }
  Outcomes y = draw_outcomes(res.truth.fields, d, res.truth.propensity, intercept, cfg.gamma, cfg.sigma2, seed);
  res.truth.mean0 = y.mean0;
  res.truth.mean1 = y.mean1;
  res.data = assemble(grid, res.truth.fields, cfg.p_observed, d, y);
  res.data.blocks = blocks;
  apply_missingness(res.data, cfg.missing_frac, seed);
  return res;
}

}  // namespace stdml
