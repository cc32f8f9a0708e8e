#include <doctest.h>

#include <cmath>
#include <sstream>

#include "stdml/commands.hpp"
#include "stdml/errors.hpp"
#include "stdml/mc.hpp"

using namespace stdml;

namespace {

ReplicateResult rep(int r, const std::string& m, double g, double lo, double hi, bool ok = true) {
  ReplicateResult x;
  x.replicate = r;
  x.method = m;
  x.ok = ok;
  x.gamma_hat = g;
  x.ci_lower = lo;
  x.ci_upper = hi;
  return x;
}

std::string sweep_csv(const SweepResult& res) {
  std::ostringstream out;
  write_summary_csv(out, res.summaries);
  write_replicates_csv(out, res);
  return out.str();
}

}  // namespace

TEST_CASE("summary metrics by hand") {
  const std::vector<ReplicateResult> reps{rep(0, "A", 2.5, 2.0, 3.5), rep(1, "A", 3.5, 3.1, 3.9),
                                          rep(2, "A", 3.0, 2.0, 4.0), rep(3, "A", 0.0, 0.0, 0.0, false),
                                          rep(0, "B", 1.0, 0.0, 2.0)};
  const auto s = summarize("A", reps, 3.0);
  CHECK(s.n_ok == 3);
  CHECK(s.n_failed == 1);
  CHECK(s.bias == doctest::Approx(0.0));
  CHECK(s.mse == doctest::Approx(0.5 / 3));
  CHECK(s.ci_length == doctest::Approx((1.5 + 0.8 + 2.0) / 3));
  CHECK(s.coverage == doctest::Approx(2.0 / 3));
  CHECK(s.bias_se == doctest::Approx(0.5 / std::sqrt(3.0)));
  CHECK(s.coverage_se == doctest::Approx(std::sqrt(2.0 / 9 / 3)));
}

TEST_CASE("MSE equals squared bias plus the biased variance") {
  std::vector<ReplicateResult> reps;
  const double g[] = {2.1, 3.7, 2.9, 3.3, 4.05, 1.8, 3.0};
  for (int r = 0; r < 7; ++r) reps.push_back(rep(r, "M", g[r], g[r] - 1, g[r] + 1));
  const auto s = summarize("M", reps, 3.0);
  const double root_n = std::sqrt(7.0);
  const double var = std::pow(s.bias_se * root_n, 2);
  CHECK(s.mse == doctest::Approx(s.bias * s.bias + (1.0 - 1.0 / 7) * var).epsilon(1e-12));
}

TEST_CASE("table lists one row per method in input order") {
  MetricSummary a, b;
  a.method = "OLS";
  a.bias = 2.3456;
  b.method = "DML-XSZ-CF";
  b.bias = -0.01;
  b.n_failed = 2;
  const auto text = render_table({a, b});
  std::istringstream in(text);
  std::string header, r1, r2, extra;
  std::getline(in, header);
  std::getline(in, r1);
  std::getline(in, r2);
  CHECK_FALSE(std::getline(in, extra));
  CHECK(header.find("Method") < header.find("Bias"));
  CHECK(header.find("Bias") < header.find("MSE"));
  CHECK(header.find("MSE") < header.find("CI length"));
  CHECK(header.find("CI length") < header.find("Coverage"));
  CHECK(header.find("Coverage") < header.find("Failed"));
  CHECK(r1.rfind("OLS", 0) == 0);
  CHECK(r1.find("2.346") != std::string::npos);
  CHECK(r2.rfind("DML-XSZ-CF", 0) == 0);
  CHECK(r2.find("-0.010") != std::string::npos);
  CHECK_THROWS_AS(render_table({}), ShapeError);
}

TEST_CASE("summary CSV round trip") {
  MetricSummary a;
  a.method = "DID";
  a.bias = 0.1 + 0.2;
  a.mse = 1.0 / 3;
  a.ci_length = 1e-300;
  a.coverage = 0.95;
  a.bias_se = 0.123456789012345678;
  a.n_ok = 99;
  a.n_failed = 1;
  std::stringstream io;
  io << "# comment line\n";
  write_summary_csv(io, {a});
  const auto back = parse_summary_csv(io);
  REQUIRE(back.size() == 1);
  CHECK(back[0].method == "DID");
  CHECK(back[0].bias == a.bias);
  CHECK(back[0].mse == a.mse);
  CHECK(back[0].ci_length == a.ci_length);
  CHECK(back[0].bias_se == a.bias_se);
  CHECK(back[0].n_ok == 99);
  CHECK(back[0].n_failed == 1);
  std::istringstream bad("method,bias\nOLS,1\n");
  CHECK_THROWS_AS(parse_summary_csv(bad), ValidationError);
}

TEST_CASE("methods in a replicate see the same dataset") {
  PixelSimConfig cfg;
  cfg.m = 12;
  const auto res = run_sweep(cfg, {ols_method(), did_method(), oracle_method()}, 4, 17);
  REQUIRE(res.method_hashes.size() == 12);
  for (int r = 0; r < 4; ++r)
    for (int m = 0; m < 3; ++m) CHECK(res.method_hashes[static_cast<std::size_t>(r * 3 + m)] == res.dataset_hashes[static_cast<std::size_t>(r)]);
  CHECK(res.dataset_hashes[0] != res.dataset_hashes[1]);
  CHECK(res.gamma_true == 3.0);
}

TEST_CASE("sweep output is identical for serial and parallel runs") {
  PixelSimConfig cfg;
  cfg.m = 12;
  SweepOptions opts;
  opts.outcome_cfg.n_trees = 10;
  opts.outcome_cfg.burn_in = 10;
  opts.outcome_cfg.kept_draws = 10;
  opts.treatment_cfg = opts.outcome_cfg;
  auto dml = stdml_method(FeatureSet::XSZ, CrossFitMode::by_pixel);
  dml.basis_size = 16;
  dml.k = 3;
  const std::vector<MethodSpec> methods{ols_method(), did_method(), dml};
  const auto serial = run_sweep(cfg, methods, 4, 23, opts);
  opts.threads = 4;
  const auto parallel = run_sweep(cfg, methods, 4, 23, opts);
  CHECK(sweep_csv(serial) == sweep_csv(parallel));
}

TEST_CASE("method seeds do not depend on which other methods run") {
  PixelSimConfig cfg;
  cfg.m = 12;
  SweepOptions opts;
  opts.outcome_cfg.n_trees = 10;
  opts.outcome_cfg.burn_in = 10;
  opts.outcome_cfg.kept_draws = 10;
  opts.treatment_cfg = opts.outcome_cfg;
  auto dml = stdml_method(FeatureSet::X, CrossFitMode::by_pixel);
  dml.k = 3;
  const auto alone = run_sweep(cfg, {dml}, 3, 29, opts);
  const auto mixed = run_sweep(cfg, {ols_method(), dml}, 3, 29, opts);
  for (int r = 0; r < 3; ++r)
    CHECK(alone.replicates[static_cast<std::size_t>(r)].gamma_hat ==
          mixed.replicates[static_cast<std::size_t>(2 * r + 1)].gamma_hat);
}

TEST_CASE("failed replicates are counted and abort past the threshold") {
  // Four pixels with half the cells masked leave fewer rows than OLS columns.
  PixelSimConfig cfg;
  cfg.m = 2;
  cfg.missing_frac = 0.5;
  SweepOptions opts;
  CHECK_THROWS_AS(run_sweep(cfg, {ols_method()}, 3, 1, opts), NumericalError);
  opts.max_failure_share = 1.0;
  const auto res = run_sweep(cfg, {ols_method()}, 3, 1, opts);
  CHECK(res.summaries[0].n_failed == 3);
  CHECK(res.summaries[0].n_ok == 0);
  CHECK(std::isnan(res.summaries[0].bias));
  CHECK_FALSE(res.replicates[0].error.empty());
}

TEST_CASE("oracle first stage gives nominal coverage") {
  PixelSimConfig cfg;
  SweepOptions opts;
  opts.threads = 4;
  const auto res = run_sweep(cfg, {oracle_method()}, 200, 31, opts);
  const auto& s = res.summaries[0];
  INFO("coverage " << s.coverage << " bias " << s.bias);
  CHECK(s.coverage >= 0.90);
  CHECK(std::abs(s.bias) < 3 * s.bias_se + 1e-9);
}

TEST_CASE("sweep configuration errors") {
  PixelSimConfig cfg;
  cfg.m = 8;
  CHECK_THROWS_AS(run_sweep(cfg, {ols_method()}, 1, 1), ConfigError);
  CHECK_THROWS_AS(run_sweep(cfg, {}, 5, 1), ConfigError);
  CHECK_THROWS_AS(run_sweep(cfg, {ols_method(), ols_method()}, 5, 1), ConfigError);
  CHECK_THROWS_AS(run_sweep(cfg, {stdml_method(FeatureSet::XSZ, CrossFitMode::by_block, ReMode::none, true)}, 5, 1),
                  ConfigError);
}

TEST_CASE("method names parse back to their specs") {
  for (const auto& m : pixel_table_methods()) {
    const auto p = parse_method(m.name);
    CHECK(p.name == m.name);
    CHECK(p.kind == m.kind);
    CHECK(p.features == m.features);
    CHECK(p.cf == m.cf);
  }
  for (const auto& m : block_table_methods()) {
    const auto p = parse_method(m.name);
    CHECK(p.name == m.name);
    CHECK(p.cf == m.cf);
    CHECK(p.re == m.re);
  }
  CHECK(pixel_table_methods().size() == 8);
  CHECK(block_table_methods().size() == 8);
  CHECK(parse_method("Oracle").kind == EstimatorKind::ORACLE);
  CHECK_THROWS(parse_method("DML-XYZ-CF"));
}

TEST_CASE("sweep figure has one box per method") {
  PixelSimConfig cfg;
  cfg.m = 10;
  const auto res = run_sweep(cfg, {ols_method(), did_method()}, 5, 3);
  const auto svg = render_sweep_svg(res, "demo");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("OLS") != std::string::npos);
  CHECK(svg.find("DID") != std::string::npos);
}
