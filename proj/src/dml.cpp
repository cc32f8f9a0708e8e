#include "stdml/dml.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "stdml/errors.hpp"
#include "stdml/linreg.hpp"
#include "stdml/parallel.hpp"
#include "stdml/random.hpp"

namespace stdml {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

EffectEstimate make_estimate(std::string method, LinearFit fit, std::size_t rows) {
  EffectEstimate est;
  est.method = std::move(method);
  est.names = std::move(fit.names);
  est.theta = std::move(fit.coef);
  est.cov = std::move(fit.cov);
  est.n_rows = rows;
  const auto it = std::find(est.names.begin(), est.names.end(), "gamma");
  if (it == est.names.end()) throw ShapeError("estimate has no gamma coefficient");
  const auto g = static_cast<Eigen::Index>(it - est.names.begin());
  est.gamma = est.theta[g];
  est.se = std::sqrt(std::max(0.0, est.cov(g, g)));
  est.ci_lower = est.gamma - kNormal975 * est.se;
  est.ci_upper = est.gamma + kNormal975 * est.se;
  return est;
}

// Treatment-interaction regression on the raw outcomes shared by the OLS and
// DID baselines.
EffectEstimate outcome_regression(const GridDataset& data, const std::vector<double>* d_bar,
                                  std::string method) {
  data.validate();
  const std::size_t p = data.covariate_count();
  std::vector<std::string> names{"intercept"};
  for (std::size_t j = 0; j < p; ++j) names.push_back("beta_" + data.covariate_names[j]);
  names.insert(names.end(), {"delta", "alpha"});
  if (d_bar) names.push_back("alpha_bar");
  names.push_back("gamma");
  if (d_bar) names.push_back("gamma_bar");

  std::vector<std::pair<std::size_t, int>> rows;
  for (int t = 0; t < 2; ++t)
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data.active[i] && data.observed(i, t)) rows.emplace_back(i, t);

  Eigen::MatrixXd z(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto [i, t] = rows[r];
    const auto row = static_cast<Eigen::Index>(r);
    Eigen::Index c = 0;
    z(row, c++) = 1.0;
    for (std::size_t j = 0; j < p; ++j) z(row, c++) = data.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    const double tt = t;
    const double di = data.d[i];
    z(row, c++) = tt;
    z(row, c++) = di;
    if (d_bar) z(row, c++) = (*d_bar)[i];
    z(row, c++) = tt * di;
    if (d_bar) z(row, c++) = tt * (*d_bar)[i];
    y[row] = data.y(i, t);
  }
  return make_estimate(std::move(method), ols_hc0(z, y, std::move(names)), rows.size());
}

}  // namespace

std::size_t GridDataset::active_count() const {
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), std::uint8_t{1}));
}

void GridDataset::validate() const {
  const std::size_t n = grid.size();
  auto check = [&](std::size_t got, const char* what) {
    if (got != n)
      throw ShapeError(std::string("dataset: ") + what + " has " + std::to_string(got) +
                       " entries for " + std::to_string(n) + " pixels");
  };
  check(y0.size(), "Y0");
  check(y1.size(), "Y1");
  check(observed0.size(), "Y0 mask");
  check(observed1.size(), "Y1 mask");
  check(d.size(), "D");
  check(active.size(), "active mask");
  check(static_cast<std::size_t>(x.rows()), "covariate matrix");
  if (covariate_names.size() != static_cast<std::size_t>(x.cols()))
    throw ShapeError("dataset: covariate names do not match covariate columns");
  if (blocks) check(blocks->labels.size(), "block labels");
  if (active_count() == 0) throw ShapeError("dataset: no active pixels");
  for (std::size_t i = 0; i < n; ++i) {
    if (!active[i]) {
      if (observed0[i] || observed1[i]) throw ShapeError("dataset: inactive pixel with observed outcome");
      continue;
    }
    if (d[i] != 0 && d[i] != 1) throw DomainError("dataset: treatment must be 0/1");
    if ((observed0[i] && !std::isfinite(y0[i])) || (observed1[i] && !std::isfinite(y1[i])))
      throw DomainError("dataset: observed outcomes must be finite");
    if (!x.row(static_cast<Eigen::Index>(i)).allFinite())
      throw DomainError("dataset: covariates must be finite on active pixels");
    if (blocks && blocks->labels[i] < 0) throw ShapeError("dataset: active pixel without a block label");
  }
}

GridDataset make_dataset(const Grid& grid, std::size_t covariates) {
  GridDataset ds;
  const std::size_t n = grid.size();
  ds.grid = grid;
  ds.y0.assign(n, 0.0);
  ds.y1.assign(n, 0.0);
  ds.observed0.assign(n, 1);
  ds.observed1.assign(n, 1);
  ds.d.assign(n, 0);
  ds.x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(covariates));
  for (std::size_t j = 0; j < covariates; ++j) ds.covariate_names.push_back("X" + std::to_string(j + 1));
  ds.active.assign(n, 1);
  return ds;
}

std::vector<std::size_t> FoldAssignment::sizes() const {
  std::vector<std::size_t> out(static_cast<std::size_t>(k), 0);
  for (int f : fold)
    if (f >= 0) ++out[static_cast<std::size_t>(f)];
  return out;
}

FoldAssignment assign_folds(const GridDataset& data, int k, CrossFitMode mode, std::uint64_t seed) {
  FoldAssignment fa;
  fa.mode = mode;
  const std::size_t n = data.size();
  fa.fold.assign(n, -1);
  if (mode == CrossFitMode::none) {
    fa.k = 1;
    for (std::size_t i = 0; i < n; ++i)
      if (data.active[i]) fa.fold[i] = 0;
    return fa;
  }
  if (k < 2) throw ConfigError("cross-fitting needs K >= 2, got " + std::to_string(k));
  fa.k = k;

  // Units are active pixels or blocks holding active pixels.
  std::vector<std::size_t> units;
  std::vector<int> unit_of(n, -1);
  if (mode == CrossFitMode::by_pixel) {
    for (std::size_t i = 0; i < n; ++i)
      if (data.active[i]) {
        unit_of[i] = static_cast<int>(units.size());
        units.push_back(i);
      }
  } else {
    if (!data.blocks) throw ConfigError("block cross-fitting requires block labels");
    std::vector<int> block_unit(static_cast<std::size_t>(data.blocks->count), -1);
    for (std::size_t i = 0; i < n; ++i) {
      if (!data.active[i]) continue;
      const int g = data.blocks->labels[i];
      if (block_unit[static_cast<std::size_t>(g)] < 0) {
        block_unit[static_cast<std::size_t>(g)] = static_cast<int>(units.size());
        units.push_back(static_cast<std::size_t>(g));
      }
      unit_of[i] = block_unit[static_cast<std::size_t>(g)];
    }
  }
  if (static_cast<std::size_t>(k) > units.size())
    throw ConfigError("K=" + std::to_string(k) + " exceeds the number of units (" +
                      std::to_string(units.size()) + ")");

  std::vector<std::size_t> order(units.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {0xF01D}));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> unit_fold(units.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    unit_fold[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i)
    if (unit_of[i] >= 0) fa.fold[i] = unit_fold[static_cast<std::size_t>(unit_of[i])];
  return fa;
}

Eigen::MatrixXd build_features(const GridDataset& data, FeatureSet set, int basis_size,
                               std::vector<std::string>* names) {
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto p = static_cast<Eigen::Index>(data.covariate_count());
  Eigen::MatrixXd basis;
  if (set == FeatureSet::XSZ) basis = build_basis(data.grid, knots_per_side_for(basis_size)).features;
  const Eigen::Index width = p + (set == FeatureSet::X ? 0 : 2) + basis.cols();
  Eigen::MatrixXd out(n, width);
  out.leftCols(p) = data.x;
  if (names) *names = data.covariate_names;
  if (set != FeatureSet::X) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Point2 s = data.grid.coord(static_cast<std::size_t>(i));
      out(i, p) = s.x;
      out(i, p + 1) = s.y;
    }
    if (names) names->insert(names->end(), {"s_x", "s_y"});
  }
  if (basis.cols() > 0) {
    out.rightCols(basis.cols()) = basis;
    if (names)
      for (Eigen::Index l = 0; l < basis.cols(); ++l) names->push_back("Z" + std::to_string(l + 1));
  }
  return out;
}

FirstStageResult first_stage(const GridDataset& data, const FoldAssignment& folds,
                             const FirstStageOptions& opts) {
  data.validate();
  const std::size_t n = data.size();
  if (folds.fold.size() != n) throw ShapeError("first_stage: fold labels do not match the grid");
  if (opts.re == ReMode::block_re && !data.blocks)
    throw ConfigError("block random effects require block labels");

  FirstStageResult res;
  const Eigen::MatrixXd features = build_features(data, opts.features, opts.basis_size, &res.feature_names);
  const std::size_t q = static_cast<std::size_t>(features.cols());
  res.y0_hat.assign(n, kNaN);
  res.y1_hat.assign(n, kNaN);
  res.d_hat.assign(n, kNaN);
  res.importance.assign(3, std::vector<double>(q, 0.0));

  const bool cross = folds.mode != CrossFitMode::none;
  const int k_folds = cross ? folds.k : 1;

  struct TaskOutput {
    std::vector<std::size_t> rows;
    std::vector<double> values;
    std::vector<double> importance;
    std::string diagnostic;
  };
  std::vector<TaskOutput> outputs(static_cast<std::size_t>(k_folds) * 3);

  parallel_for(outputs.size(), opts.threads, [&](std::size_t task) {
    const int fold = static_cast<int>(task / 3);
    const int target = static_cast<int>(task % 3);  // 0: Y0, 1: Y1, 2: D
    const char* target_name = target == 0 ? "Y0" : target == 1 ? "Y1" : "D";
    TaskOutput& out = outputs[task];

    std::vector<Eigen::Index> train;
    for (std::size_t i = 0; i < n; ++i) {
      if (!data.active[i]) continue;
      if (cross && folds.fold[i] == fold) continue;
      if (target < 2 && !data.observed(i, target)) continue;
      train.push_back(static_cast<Eigen::Index>(i));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!data.active[i]) continue;
      if (cross && folds.fold[i] != fold) continue;
      if (target < 2 && !data.observed(i, target)) continue;
      out.rows.push_back(i);
    }
    if (out.rows.empty()) return;

    const Eigen::MatrixXd x_train = features(train, Eigen::all);
    std::vector<Eigen::Index> test_idx(out.rows.begin(), out.rows.end());
    const Eigen::MatrixXd x_test = features(test_idx, Eigen::all);
    try {
      if (target < 2) {
        LearnerConfig cfg = opts.outcome_cfg;
        cfg.seed = derive_seed(opts.seed, {static_cast<std::uint64_t>(fold), static_cast<std::uint64_t>(target)});
        std::vector<double> y(train.size());
        for (std::size_t r = 0; r < train.size(); ++r) y[r] = data.y(static_cast<std::size_t>(train[r]), target);
        const TreeEnsembleModel* model = nullptr;
        TreeEnsembleModel plain;
        RandomEffectsModel with_re;
        if (opts.re == ReMode::block_re) {
          // Training blocks relabelled 0..G'-1.
          std::vector<int> remap(static_cast<std::size_t>(data.blocks->count), -1);
          std::vector<int> labels(train.size());
          int next = 0;
          for (std::size_t r = 0; r < train.size(); ++r) {
            const int g = data.blocks->labels[static_cast<std::size_t>(train[r])];
            if (remap[static_cast<std::size_t>(g)] < 0) remap[static_cast<std::size_t>(g)] = next++;
            labels[r] = remap[static_cast<std::size_t>(g)];
          }
          with_re = fit_continuous_re(x_train, y, labels, next, cfg);
          model = &with_re.trees;
        } else {
          plain = fit_continuous(x_train, y, cfg);
          model = &plain;
        }
        out.values = predict(*model, x_test);
        out.importance = variable_importance(*model);
        if (!model->warnings.empty())
          out.diagnostic = std::string(target_name) + " fold " + std::to_string(fold) + ": " + model->warnings.front();
      } else {
        std::vector<int> d(train.size());
        std::size_t ones = 0;
        for (std::size_t r = 0; r < train.size(); ++r) {
          d[r] = data.d[static_cast<std::size_t>(train[r])];
          ones += static_cast<std::size_t>(d[r]);
        }
        if (ones == 0 || ones == d.size()) {
          const double p = ones == 0 ? 0.0 : 1.0;
          out.values.assign(out.rows.size(), p);
          out.importance.assign(q, 0.0);
          out.diagnostic = "D fold " + std::to_string(fold) + ": single-class training data; predicting " +
                           (ones == 0 ? std::string("0") : std::string("1"));
        } else {
          LearnerConfig cfg = opts.treatment_cfg;
          cfg.seed = derive_seed(opts.seed, {static_cast<std::uint64_t>(fold), 2});
          const TreeEnsembleModel model = fit_binary(x_train, d, cfg);
          out.values = predict(model, x_test);
          out.importance = variable_importance(model);
        }
      }
    } catch (const Error& e) {
      throw Error("first stage " + std::string(target_name) + " failed in fold " + std::to_string(fold) +
                      ": " + e.what(),
                  e.code());
    }
  });

  std::vector<int> fits_per_target(3, 0);
  for (std::size_t task = 0; task < outputs.size(); ++task) {
    const int target = static_cast<int>(task % 3);
    const TaskOutput& out = outputs[task];
    auto& dest = target == 0 ? res.y0_hat : target == 1 ? res.y1_hat : res.d_hat;
    for (std::size_t r = 0; r < out.rows.size(); ++r) dest[out.rows[r]] = out.values[r];
    if (!out.importance.empty()) {
      ++fits_per_target[static_cast<std::size_t>(target)];
      for (std::size_t f = 0; f < q; ++f) res.importance[static_cast<std::size_t>(target)][f] += out.importance[f];
    }
    if (!out.diagnostic.empty()) res.diagnostics.push_back(out.diagnostic);
  }
  for (int t = 0; t < 3; ++t)
    if (fits_per_target[static_cast<std::size_t>(t)] > 0)
      for (auto& v : res.importance[static_cast<std::size_t>(t)]) v /= fits_per_target[static_cast<std::size_t>(t)];
  return res;
}

ResidualPanel residuals(const GridDataset& data, const FirstStageResult& preds, const Neighborhood& nb) {
  const std::size_t n = data.size();
  if (preds.y0_hat.size() != n || preds.y1_hat.size() != n || preds.d_hat.size() != n)
    throw ShapeError("residuals: predictions are not aligned with the dataset");
  if (nb.lists.size() != n) throw ShapeError("residuals: neighborhood does not match the grid");
  ResidualPanel panel;
  panel.r0.assign(n, kNaN);
  panel.r1.assign(n, kNaN);
  panel.rd.assign(n, kNaN);
  for (std::size_t i = 0; i < n; ++i) {
    if (!data.active[i]) continue;
    if (data.observed0[i]) panel.r0[i] = data.y0[i] - preds.y0_hat[i];
    if (data.observed1[i]) panel.r1[i] = data.y1[i] - preds.y1_hat[i];
    panel.rd[i] = static_cast<double>(data.d[i]) - preds.d_hat[i];
  }
  NeighborMeans nm = neighbor_mean(panel.rd, nb);
  panel.rd_bar = std::move(nm.values);
  for (std::size_t i : nm.isolated)
    if (data.active[i]) panel.isolated.push_back(i);
  return panel;
}

EffectEstimate second_stage(const ResidualPanel& panel, const SecondStageOptions& opts) {
  const std::size_t n = panel.rd.size();
  if (panel.r0.size() != n || panel.r1.size() != n || panel.rd_bar.size() != n)
    throw ShapeError("second_stage: residual vectors differ in length");
  std::vector<char> skip(n, 0);
  if (opts.drop_isolated)
    for (std::size_t i : panel.isolated) skip[i] = 1;

  std::vector<std::pair<std::size_t, int>> rows;
  std::size_t per_period[2] = {0, 0};
  for (int t = 0; t < 2; ++t) {
    const auto& r = t == 0 ? panel.r0 : panel.r1;
    for (std::size_t i = 0; i < n; ++i) {
      if (skip[i] || std::isnan(r[i]) || std::isnan(panel.rd[i])) continue;
      rows.emplace_back(i, t);
      ++per_period[t];
    }
  }
  if (per_period[0] == 0 || per_period[1] == 0)
    throw ShapeError("second_stage: need at least one observed row in each period");

  std::vector<std::string> names{"beta", "delta", "alpha"};
  if (opts.include_neighbors) names.push_back("alpha_bar");
  names.push_back("gamma");
  if (opts.include_neighbors) names.push_back("gamma_bar");

  Eigen::MatrixXd z(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto [i, t] = rows[r];
    const auto row = static_cast<Eigen::Index>(r);
    const double tt = t;
    const double rd = panel.rd[i];
    const double rb = panel.rd_bar[i];
    Eigen::Index c = 0;
    z(row, c++) = 1.0;
    z(row, c++) = tt;
    z(row, c++) = rd;
    if (opts.include_neighbors) z(row, c++) = rb;
    z(row, c++) = tt * rd;
    if (opts.include_neighbors) z(row, c++) = tt * rb;
    y[row] = t == 0 ? panel.r0[i] : panel.r1[i];
  }
  EffectEstimate est = make_estimate("second-stage", ols_hc0(z, y, std::move(names)), rows.size());
  est.metadata["isolated_pixels"] = std::to_string(panel.isolated.size());
  return est;
}

EffectEstimate baseline_ols(const GridDataset& data) { return outcome_regression(data, nullptr, "OLS"); }

EffectEstimate baseline_did(const GridDataset& data, const Neighborhood& nb) {
  data.validate();
  if (nb.lists.size() != data.size()) throw ShapeError("baseline_did: neighborhood does not match the grid");
  std::vector<double> d(data.size(), kNaN);
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.active[i]) d[i] = data.d[i];
  const NeighborMeans nm = neighbor_mean(d, nb);
  EffectEstimate est = outcome_regression(data, &nm.values, "DID");
  est.metadata["neighbors"] = to_string(nb.scheme);
  return est;
}

double naive_did(double pre_treated, double pre_control, double post_treated, double post_control) {
  return (post_treated - post_control) - (pre_treated - pre_control);
}

GroupMeans group_means(const GridDataset& data) {
  double sum[2][2] = {{0, 0}, {0, 0}};
  double cnt[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.active[i]) continue;
    for (int t = 0; t < 2; ++t) {
      if (!data.observed(i, t)) continue;
      sum[t][data.d[i]] += data.y(i, t);
      cnt[t][data.d[i]] += 1.0;
    }
  }
  auto mean = [&](int t, int g) { return cnt[t][g] > 0 ? sum[t][g] / cnt[t][g] : kNaN; };
  return {mean(0, 1), mean(0, 0), mean(1, 1), mean(1, 0)};
}

EffectEstimate estimate_from_predictions(const GridDataset& data, const FirstStageResult& preds,
                                         const Neighborhood& nb, const SecondStageOptions& opts) {
  return second_stage(residuals(data, preds, nb), opts);
}

StdmlRun run_stdml_detailed(const GridDataset& data, const StdmlConfig& cfg) {
  StdmlRun run;
  run.folds = assign_folds(data, cfg.k, cfg.cf, derive_seed(cfg.seed, {0xF0}));
  FirstStageOptions fo;
  fo.features = cfg.features;
  fo.re = cfg.re;
  fo.basis_size = cfg.basis_size;
  fo.outcome_cfg = cfg.outcome_cfg;
  fo.treatment_cfg = cfg.treatment_cfg;
  fo.seed = derive_seed(cfg.seed, {0xF1});
  fo.threads = cfg.threads;
  run.first_stage = first_stage(data, run.folds, fo);
  const Neighborhood nb = build_neighborhood(data.grid, cfg.neighbors);
  run.panel = residuals(data, run.first_stage, nb);
  SecondStageOptions so;
  so.include_neighbors = cfg.include_neighbors.value_or(cfg.cf != CrossFitMode::by_block);
  so.drop_isolated = cfg.drop_isolated;
  run.estimate = second_stage(run.panel, so);

  auto& meta = run.estimate.metadata;
  run.estimate.method = "DML-" + to_string(cfg.features) + "-" + (cfg.re == ReMode::none ? "noRE" : "RE") +
                        "-" + to_string(cfg.cf);
  meta["features"] = to_string(cfg.features);
  meta["cf_mode"] = to_string(cfg.cf);
  meta["K"] = std::to_string(run.folds.k);
  meta["re_mode"] = to_string(cfg.re);
  meta["L"] = cfg.features == FeatureSet::XSZ ? std::to_string(cfg.basis_size) : "0";
  meta["neighbors"] = to_string(cfg.neighbors);
  meta["include_neighbors"] = so.include_neighbors ? "true" : "false";
  meta["seed"] = std::to_string(cfg.seed);
  meta["outcome_trees"] = std::to_string(cfg.outcome_cfg.n_trees);
  meta["treatment_trees"] = std::to_string(cfg.treatment_cfg.n_trees);
  meta["burn_in"] = std::to_string(cfg.outcome_cfg.burn_in);
  meta["kept_draws"] = std::to_string(cfg.outcome_cfg.kept_draws);
  std::string sizes;
  for (std::size_t s : run.folds.sizes()) sizes += (sizes.empty() ? "" : ",") + std::to_string(s);
  meta["fold_sizes"] = sizes;
  meta["diagnostics"] = std::to_string(run.first_stage.diagnostics.size());
  return run;
}

EffectEstimate run_stdml(const GridDataset& data, const StdmlConfig& cfg) {
  return run_stdml_detailed(data, cfg).estimate;
}

double EffectEstimate::coef(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ShapeError("no coefficient named " + name);
  return theta[static_cast<Eigen::Index>(it - names.begin())];
}

std::string to_string(FeatureSet f) {
  switch (f) {
    case FeatureSet::X: return "X";
    case FeatureSet::XS: return "XS";
    case FeatureSet::XSZ: return "XSZ";
  }
  return "?";
}

std::string to_string(CrossFitMode m) {
  switch (m) {
    case CrossFitMode::none: return "noCF";
    case CrossFitMode::by_pixel: return "pixelCF";
    case CrossFitMode::by_block: return "blockCF";
  }
  return "?";
}

std::string to_string(ReMode m) { return m == ReMode::none ? "none" : "block_re"; }

std::string to_string(NeighborScheme s) { return s == NeighborScheme::queen8 ? "queen8" : "rook4"; }

FeatureSet parse_feature_set(const std::string& s) {
  if (s == "X") return FeatureSet::X;
  if (s == "XS") return FeatureSet::XS;
  if (s == "XSZ") return FeatureSet::XSZ;
  throw ConfigError("unknown feature set '" + s + "' (expected X, XS or XSZ)");
}

CrossFitMode parse_cross_fit(const std::string& s) {
  if (s == "none" || s == "noCF") return CrossFitMode::none;
  if (s == "by_pixel" || s == "pixel" || s == "pixelCF") return CrossFitMode::by_pixel;
  if (s == "by_block" || s == "block" || s == "blockCF") return CrossFitMode::by_block;
  throw ConfigError("unknown cross-fitting mode '" + s + "' (expected none, by_pixel or by_block)");
}

ReMode parse_re_mode(const std::string& s) {
  if (s == "none" || s == "noRE") return ReMode::none;
  if (s == "block_re" || s == "RE") return ReMode::block_re;
  throw ConfigError("unknown random-effects mode '" + s + "' (expected none or block_re)");
}

NeighborScheme parse_neighbor_scheme(const std::string& s) {
  if (s == "queen8") return NeighborScheme::queen8;
  if (s == "rook4") return NeighborScheme::rook4;
  throw ConfigError("unknown neighbor scheme '" + s + "' (expected queen8 or rook4)");
}

void write_estimate_record(std::ostream& out, const EffectEstimate& est) {
  out << "# estimate record v1\n";
  out << "method=" << est.method << '\n';
  out << "n_rows=" << est.n_rows << '\n';
  out << "gamma=" << fmt_full(est.gamma) << '\n';
  out << "se=" << fmt_full(est.se) << '\n';
  out << "ci_lower=" << fmt_full(est.ci_lower) << '\n';
  out << "ci_upper=" << fmt_full(est.ci_upper) << '\n';
  std::string names;
  for (const auto& nm : est.names) names += (names.empty() ? "" : ",") + nm;
  out << "coefficients=" << names << '\n';
  for (std::size_t a = 0; a < est.names.size(); ++a)
    out << "coef." << est.names[a] << '=' << fmt_full(est.theta[static_cast<Eigen::Index>(a)]) << '\n';
  for (std::size_t a = 0; a < est.names.size(); ++a)
    for (std::size_t b = 0; b < est.names.size(); ++b)
      out << "cov." << est.names[a] << '.' << est.names[b] << '='
          << fmt_full(est.cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b))) << '\n';
  for (const auto& [k, v] : est.metadata) out << "meta." << k << '=' << v << '\n';
}

EffectEstimate read_estimate_record(std::istream& in) {
  EffectEstimate est;
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError({"line " + std::to_string(lineno) + ": expected key=value"});
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ValidationError({"estimate record: missing key '" + key + "'"});
    return it->second;
  };
  est.method = get("method");
  est.n_rows = std::stoull(get("n_rows"));
  est.gamma = std::stod(get("gamma"));
  est.se = std::stod(get("se"));
  est.ci_lower = std::stod(get("ci_lower"));
  est.ci_upper = std::stod(get("ci_upper"));
  std::stringstream names(get("coefficients"));
  for (std::string nm; std::getline(names, nm, ',');) est.names.push_back(nm);
  const auto p = static_cast<Eigen::Index>(est.names.size());
  est.theta.resize(p);
  est.cov.resize(p, p);
  for (Eigen::Index a = 0; a < p; ++a) {
    est.theta[a] = std::stod(get("coef." + est.names[static_cast<std::size_t>(a)]));
    for (Eigen::Index b = 0; b < p; ++b)
      est.cov(a, b) = std::stod(get("cov." + est.names[static_cast<std::size_t>(a)] + "." +
                                    est.names[static_cast<std::size_t>(b)]));
  }
  for (const auto& [k, v] : kv)
    if (k.rfind("meta.", 0) == 0) est.metadata[k.substr(5)] = v;
  return est;
}

std::vector<EffectEstimate> read_estimate_records(std::istream& in) {
  std::vector<std::string> chunks;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("# estimate record", 0) == 0 || chunks.empty()) chunks.emplace_back();
    chunks.back() += line + '\n';
  }
  std::vector<EffectEstimate> out;
  for (const auto& c : chunks) {
    std::istringstream ss(c);
    out.push_back(read_estimate_record(ss));
  }
  return out;
}

}  // namespace stdml
