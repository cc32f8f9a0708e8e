#include <doctest.h>

#include <cmath>
#include <numeric>

#include "stdml/dgp.hpp"
#include "stdml/errors.hpp"
#include "stdml/linreg.hpp"

using namespace stdml;

TEST_CASE("treatment logit surface") {
  CHECK(h1(std::vector<double>{0, 0, 0.5, 0, 0}) == 0.0);
  CHECK(std::abs(h1(std::vector<double>{1, 0.5, 0.5, 0, 0}) - 1.0) < 1e-15);
  CHECK(h1(std::vector<double>{0, 0, 0, 1, 1}) == doctest::Approx(20.0));
  CHECK_THROWS_AS(h1(std::vector<double>{0, 0}), ShapeError);
}

TEST_CASE("outcome mean surface") {
  const std::vector<double> zero(5, 0.0);
  CHECK(h2(0, zero, 1, 3.0) == 0.0);
  CHECK(h2(1, std::vector<double>{1, 0, 0, 0, 0}, 0, 3.0) == 2.0);
  CHECK(h2(1, zero, 1, 3.0) == 3.0);
  CHECK(h2(1, std::vector<double>{0, 0, 0, 1, 1}, 0, 3.0) == 8.0);
  CHECK(expit(0.0) == 0.5);
  CHECK(expit(-800.0) >= 0.0);
  CHECK(expit(800.0) == 1.0);
}

TEST_CASE("pixel design shapes, masking and truth") {
  PixelSimConfig cfg;
  cfg.seed = 3;
  const SimResult sim = simulate_pixel(cfg);
  const GridDataset& ds = sim.data;
  ds.validate();
  CHECK(ds.size() == 1024);
  CHECK(ds.covariate_count() == 3);
  CHECK(ds.grid.spacing() == doctest::Approx(1.0 / 31));
  CHECK(sim.truth.fields.cols() == 5);
  CHECK(ds.x == sim.truth.fields.leftCols(3));
  std::size_t masked = 0, treated = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    masked += !ds.observed0[i];
    masked += !ds.observed1[i];
    treated += static_cast<std::size_t>(ds.d[i]);
    CHECK(std::isnan(ds.y0[i]) == !ds.observed0[i]);
  }
  CHECK(masked == 410);  // round(0.2 * 2048)
  CHECK(treated > 0);
  CHECK(treated < ds.size());
  // Truth means follow the outcome surface at the propensity.
  for (std::size_t i : {0ul, 100ul, 900ul}) {
    std::vector<double> x(5);
    for (int j = 0; j < 5; ++j) x[static_cast<std::size_t>(j)] = sim.truth.fields(static_cast<Eigen::Index>(i), j);
    CHECK(sim.truth.propensity[i] == doctest::Approx(expit(h1(x))));
    CHECK(sim.truth.mean1[i] == doctest::Approx(h2(1, x, sim.truth.propensity[i], 3.0)));
  }
}

TEST_CASE("masked share stays within the binomial tolerance over a batch") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    PixelSimConfig cfg;
    cfg.m = 16;
    cfg.seed = seed;
    const auto sim = simulate_pixel(cfg);
    double masked = 0;
    for (std::size_t i = 0; i < sim.data.size(); ++i) masked += !sim.data.observed0[i] + !sim.data.observed1[i];
    const double n = static_cast<double>(sim.data.size());
    CHECK(std::abs(masked / (2 * n) - 0.2) <= 1.0 / std::sqrt(2 * n));
  }
}

TEST_CASE("simulation is seed-deterministic") {
  PixelSimConfig cfg;
  cfg.m = 16;
  cfg.seed = 5;
  const auto a = simulate_pixel(cfg);
  const auto b = simulate_pixel(cfg);
  CHECK(a.data.d == b.data.d);
  CHECK(a.data.x == b.data.x);
  CHECK(a.data.observed1 == b.data.observed1);
  cfg.seed = 6;
  CHECK(simulate_pixel(cfg).data.x != a.data.x);
}

TEST_CASE("degenerate treatment is redrawn and counted") {
  // A huge temperature flattens the propensity to 1/2 and a four-pixel grid
  // gives an all-equal draw one time in eight.
  int total = 0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    PixelSimConfig cfg;
    cfg.m = 2;
    cfg.missing_frac = 0.0;
    cfg.logit_temperature = 1e6;
    cfg.seed = seed;
    const auto sim = simulate_pixel(cfg);
    const int ones = std::accumulate(sim.data.d.begin(), sim.data.d.end(), 0);
    CHECK(ones > 0);
    CHECK(ones < 4);
    total += sim.truth.regenerations;
  }
  CHECK(total > 0);
}

TEST_CASE("block design") {
  BlockSimConfig cfg;
  cfg.seed = 7;
  const SimResult sim = simulate_block(cfg);
  const GridDataset& ds = sim.data;
  REQUIRE(ds.blocks.has_value());
  CHECK(ds.blocks->count == 64);
  for (const auto& members : ds.blocks->members()) {
    CHECK(members.size() == 16);
    for (std::size_t i : members) CHECK(ds.d[i] == ds.d[members.front()]);
  }
  for (std::size_t i = 0; i < ds.size(); ++i) CHECK(ds.observed0[i] + ds.observed1[i] == 2);
  CHECK(sim.truth.block_effects.size() == 64);
  CHECK_THROWS_AS(([] {
                    BlockSimConfig bad;
                    bad.m = 30;
                    bad.validate();
                  }()),
                  ConfigError);
}

TEST_CASE("block means agree with a brute-force loop") {
  const Grid g = build_grid(8, 12, 1.0);
  const auto blocks = rectangular_blocks(g, 4, 4);
  Eigen::MatrixXd v = Eigen::MatrixXd::Random(static_cast<Eigen::Index>(g.size()), 5);
  const Eigen::MatrixXd fast = block_means(v, blocks);
  for (int b = 0; b < blocks.count; ++b)
    for (int j = 0; j < 5; ++j) {
      double s = 0;
      int c = 0;
      for (std::size_t i = 0; i < g.size(); ++i)
        if (blocks.labels[i] == b) {
          s += v(static_cast<Eigen::Index>(i), j);
          ++c;
        }
      CHECK(fast(b, j) == s / c);
    }
}

TEST_CASE("zero block variance reduces to the pixel outcome model") {
  // Same seed: covariate fields and outcome noise coincide, so outcomes differ
  // only through the treatment indicator.
  BlockSimConfig bc;
  bc.tau2 = 0.0;
  bc.sigma2 = 1.0;
  bc.missing_frac = 0.0;
  PixelSimConfig pc;
  pc.missing_frac = 0.0;
  // Pick a seed where neither design had to regenerate, so both use the
  // same fields and noise.
  SimResult b, p;
  for (std::uint64_t seed = 11;; ++seed) {
    bc.seed = pc.seed = seed;
    b = simulate_block(bc);
    p = simulate_pixel(pc);
    if (b.truth.regenerations == 0 && p.truth.regenerations == 0) break;
  }
  CHECK(b.data.x == p.data.x);
  for (std::size_t i = 0; i < b.data.size(); ++i) {
    CHECK(b.data.y0[i] == doctest::Approx(p.data.y0[i]).epsilon(1e-12));
    CHECK(b.data.y1[i] - 3.0 * b.data.d[i] == doctest::Approx(p.data.y1[i] - 3.0 * p.data.d[i]).epsilon(1e-12));
  }
}

TEST_CASE("hidden covariates confound treatment and outcome") {
  // Partial correlation of D and the period-1 outcome given the observed
  // covariates, averaged over replicates.
  double total = 0;
  const int reps = 20;
  for (int r = 0; r < reps; ++r) {
    PixelSimConfig cfg;
    cfg.seed = 100 + static_cast<std::uint64_t>(r);
    cfg.gamma = 0.0;
    cfg.missing_frac = 0.0;
    const auto sim = simulate_pixel(cfg);
    const auto n = static_cast<Eigen::Index>(sim.data.size());
    Eigen::MatrixXd z(n, 4);
    z.col(0).setOnes();
    z.rightCols(3) = sim.data.x;
    Eigen::VectorXd d(n), y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      d[i] = sim.data.d[static_cast<std::size_t>(i)];
      y[i] = sim.data.y1[static_cast<std::size_t>(i)];
    }
    const auto rd = ols_hc0(z, d, {"1", "a", "b", "c"}).residuals;
    const auto ry = ols_hc0(z, y, {"1", "a", "b", "c"}).residuals;
    total += rd.dot(ry) / std::sqrt(rd.squaredNorm() * ry.squaredNorm());
  }
  INFO("mean partial correlation " << total / reps);
  CHECK(std::abs(total / reps) > 0.05);
}

TEST_CASE("configuration validation") {
  PixelSimConfig cfg;
  cfg.missing_frac = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.missing_frac = 0.2;
  cfg.p_observed = 6;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.p_observed = 3;
  cfg.field.smoothness = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
