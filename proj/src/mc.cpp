#include "stdml/mc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "stdml/errors.hpp"
#include "stdml/parallel.hpp"
#include "stdml/random.hpp"
#include "stdml/svg.hpp"

namespace stdml {
namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

struct Fnv {
  std::uint64_t h = kFnvOffset;
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t k = 0; k < n; ++k) {
      h ^= c[k];
      h *= kFnvPrime;
    }
  }
  template <class T>
  void value(const T& v) {
    bytes(&v, sizeof v);
  }
  template <class T>
  void range(const std::vector<T>& v) {
    value(v.size());
    if (!v.empty()) bytes(v.data(), v.size() * sizeof(T));
  }
};

std::uint64_t name_tag(const std::string& name) {
  Fnv f;
  f.bytes(name.data(), name.size());
  return f.h;
}

std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

bool has_blocks(const Scenario& s) { return std::holds_alternative<BlockSimConfig>(s); }

SimResult simulate(const Scenario& s, std::uint64_t seed) {
  return std::visit(
      [&](auto cfg) {
        cfg.seed = seed;
        if constexpr (std::is_same_v<decltype(cfg), PixelSimConfig>)
          return simulate_pixel(cfg);
        else
          return simulate_block(cfg);
      },
      s);
}

}  // namespace

void MethodSpec::validate(bool blocks) const {
  if (name.empty()) throw ConfigError("method name must not be empty");
  if (name.find_first_of(",\n") != std::string::npos)
    throw ConfigError("method name '" + name + "' must not contain commas or newlines");
  if (kind != EstimatorKind::STDML) return;
  if (!blocks && (cf == CrossFitMode::by_block || re == ReMode::block_re))
    throw ConfigError(name + ": block cross-fitting and block random effects need a block design");
  if (cf != CrossFitMode::none && k < 2) throw ConfigError(name + ": K must be >= 2");
  if (features == FeatureSet::XSZ) knots_per_side_for(basis_size);
}

MethodSpec ols_method() { return {"OLS", EstimatorKind::OLS}; }
MethodSpec did_method() { return {"DID", EstimatorKind::DID}; }
MethodSpec oracle_method() { return {"Oracle", EstimatorKind::ORACLE}; }

MethodSpec stdml_method(FeatureSet features, CrossFitMode cf, ReMode re, bool block_style) {
  MethodSpec m;
  m.kind = EstimatorKind::STDML;
  m.features = features;
  m.cf = cf;
  m.re = re;
  if (block_style)
    m.name = std::string("DML-") + (re == ReMode::none ? "noRE" : "RE") + "-" + to_string(cf);
  else
    m.name = "DML-" + to_string(features) + "-" + (cf == CrossFitMode::none ? "noCF" : "CF");
  return m;
}

std::vector<MethodSpec> pixel_table_methods() {
  std::vector<MethodSpec> out{ols_method(), did_method()};
  for (FeatureSet f : {FeatureSet::X, FeatureSet::XS, FeatureSet::XSZ})
    for (CrossFitMode cf : {CrossFitMode::none, CrossFitMode::by_pixel}) out.push_back(stdml_method(f, cf));
  return out;
}

std::vector<MethodSpec> block_table_methods() {
  std::vector<MethodSpec> out{ols_method(), did_method()};
  for (ReMode re : {ReMode::none, ReMode::block_re})
    for (CrossFitMode cf : {CrossFitMode::none, CrossFitMode::by_pixel, CrossFitMode::by_block})
      out.push_back(stdml_method(FeatureSet::XSZ, cf, re, true));
  return out;
}

std::uint64_t dataset_hash(const GridDataset& data) {
  Fnv f;
  f.value(data.grid.rows());
  f.value(data.grid.cols());
  f.value(data.grid.spacing());
  f.range(data.y0);
  f.range(data.y1);
  f.range(data.observed0);
  f.range(data.observed1);
  f.range(data.d);
  f.range(data.active);
  f.value(data.x.rows());
  f.value(data.x.cols());
  f.bytes(data.x.data(), static_cast<std::size_t>(data.x.size()) * sizeof(double));
  for (const auto& nm : data.covariate_names) f.bytes(nm.data(), nm.size() + 1);
  if (data.blocks) {
    f.value(data.blocks->count);
    f.range(data.blocks->labels);
  }
  return f.h;
}

EffectEstimate evaluate_method(const MethodSpec& method, const SimResult& sim, std::uint64_t seed,
                               const SweepOptions& opts) {
  const GridDataset& data = sim.data;
  EffectEstimate est;
  switch (method.kind) {
    case EstimatorKind::OLS:
      est = baseline_ols(data);
      break;
    case EstimatorKind::DID:
      est = baseline_did(data, build_neighborhood(data.grid, opts.neighbors));
      break;
    case EstimatorKind::ORACLE: {
      FirstStageResult preds;
      preds.y0_hat = sim.truth.mean0;
      preds.y1_hat = sim.truth.mean1;
      preds.d_hat = sim.truth.propensity;
      est = estimate_from_predictions(data, preds, build_neighborhood(data.grid, opts.neighbors));
      break;
    }
    case EstimatorKind::STDML: {
      StdmlConfig cfg;
      cfg.features = method.features;
      cfg.cf = method.cf;
      cfg.k = method.k;
      cfg.re = method.re;
      cfg.basis_size = method.basis_size;
      cfg.neighbors = opts.neighbors;
      cfg.seed = seed;
      cfg.outcome_cfg = opts.outcome_cfg;
      cfg.treatment_cfg = opts.treatment_cfg;
      est = run_stdml(data, cfg);
      break;
    }
  }
  est.method = method.name;
  return est;
}

MetricSummary summarize(const std::string& method, std::span<const ReplicateResult> reps, double truth) {
  MetricSummary s;
  s.method = method;
  std::vector<double> g, sq, len, cover;
  for (const auto& r : reps) {
    if (r.method != method) continue;
    if (!r.ok) {
      ++s.n_failed;
      continue;
    }
    ++s.n_ok;
    g.push_back(r.gamma_hat);
    sq.push_back((r.gamma_hat - truth) * (r.gamma_hat - truth));
    len.push_back(r.ci_upper - r.ci_lower);
    cover.push_back(r.ci_lower <= truth && truth <= r.ci_upper ? 1.0 : 0.0);
  }
  if (s.n_ok == 0) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.bias = s.mse = s.ci_length = s.coverage = nan;
    s.bias_se = s.mse_se = s.ci_length_se = s.coverage_se = nan;
    return s;
  }
  const double root_n = std::sqrt(static_cast<double>(s.n_ok));
  s.bias = mean_of(g) - truth;
  s.mse = mean_of(sq);
  s.ci_length = mean_of(len);
  s.coverage = mean_of(cover);
  s.bias_se = sd_of(g) / root_n;
  s.mse_se = sd_of(sq) / root_n;
  s.ci_length_se = sd_of(len) / root_n;
  s.coverage_se = std::sqrt(s.coverage * (1.0 - s.coverage) / s.n_ok);
  return s;
}

SweepResult run_sweep(const Scenario& scenario, const std::vector<MethodSpec>& methods, int n_reps,
                      std::uint64_t seed, const SweepOptions& opts) {
  if (n_reps < 2) throw ConfigError("a sweep needs at least 2 replicates");
  if (methods.empty()) throw ConfigError("a sweep needs at least one method");
  const bool blocks = has_blocks(scenario);
  for (std::size_t a = 0; a < methods.size(); ++a) {
    methods[a].validate(blocks);
    for (std::size_t b = 0; b < a; ++b)
      if (methods[a].name == methods[b].name) throw ConfigError("duplicate method name " + methods[a].name);
  }

  const std::size_t n_methods = methods.size();
  SweepResult out;
  for (const auto& m : methods) out.methods.push_back(m.name);
  out.replicates.resize(static_cast<std::size_t>(n_reps) * n_methods);
  out.dataset_hashes.resize(static_cast<std::size_t>(n_reps));
  out.method_hashes.resize(out.replicates.size());
  std::vector<int> regenerations(static_cast<std::size_t>(n_reps), 0);
  std::vector<double> truths(static_cast<std::size_t>(n_reps), 0.0);

  parallel_for(static_cast<std::size_t>(n_reps), opts.threads, [&](std::size_t rep) {
    const SimResult sim = simulate(scenario, derive_seed(seed, {0xDA7A, rep}));
    out.dataset_hashes[rep] = dataset_hash(sim.data);
    regenerations[rep] = sim.truth.regenerations;
    truths[rep] = sim.truth.gamma;
    for (std::size_t m = 0; m < n_methods; ++m) {
      ReplicateResult& r = out.replicates[rep * n_methods + m];
      r.replicate = static_cast<int>(rep);
      r.method = methods[m].name;
      try {
        const EffectEstimate est =
            evaluate_method(methods[m], sim, derive_seed(seed, {0xE571, rep, name_tag(methods[m].name)}), opts);
        r.ok = std::isfinite(est.gamma) && std::isfinite(est.se);
        r.gamma_hat = est.gamma;
        r.se = est.se;
        r.ci_lower = est.ci_lower;
        r.ci_upper = est.ci_upper;
        if (!r.ok) r.error = "non-finite estimate";
      } catch (const NumericalError& e) {
        r.ok = false;
        r.error = e.what();
      }
      out.method_hashes[rep * n_methods + m] = dataset_hash(sim.data);
    }
  });

  out.gamma_true = truths.front();
  for (int g : regenerations) out.regenerations += g;
  std::string failures;
  for (const auto& m : methods) {
    out.summaries.push_back(summarize(m.name, out.replicates, out.gamma_true));
    const auto& s = out.summaries.back();
    if (s.n_failed > opts.max_failure_share * n_reps) {
      failures += m.name + " failed on " + std::to_string(s.n_failed) + "/" + std::to_string(n_reps) +
                  " replicates:\n";
      for (const auto& r : out.replicates)
        if (r.method == m.name && !r.ok)
          failures += "  replicate " + std::to_string(r.replicate) + ": " + r.error + "\n";
    }
  }
  if (!failures.empty()) throw NumericalError("sweep aborted\n" + failures);
  return out;
}

std::string render_table(const std::vector<MetricSummary>& rows) {
  if (rows.empty()) throw ShapeError("render_table: no results");
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.method.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %8s %8s %10s %9s %7s\n", static_cast<int>(width), "Method", "Bias", "MSE",
                "CI length", "Coverage", "Failed");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %8.3f %8.3f %10.3f %9.3f %7d\n", static_cast<int>(width),
                  r.method.c_str(), r.bias, r.mse, r.ci_length, r.coverage, r.n_failed);
    out += buf;
  }
  return out;
}

void write_summary_csv(std::ostream& out, const std::vector<MetricSummary>& rows) {
  out << "method,bias,mse,ci_length,coverage,bias_se,mse_se,ci_length_se,coverage_se,n_ok,n_failed\n";
  for (const auto& r : rows)
    out << r.method << ',' << fmt_full(r.bias) << ',' << fmt_full(r.mse) << ',' << fmt_full(r.ci_length) << ','
        << fmt_full(r.coverage) << ',' << fmt_full(r.bias_se) << ',' << fmt_full(r.mse_se) << ','
        << fmt_full(r.ci_length_se) << ',' << fmt_full(r.coverage_se) << ',' << r.n_ok << ',' << r.n_failed
        << '\n';
}

std::vector<MetricSummary> parse_summary_csv(std::istream& in) {
  std::vector<MetricSummary> rows;
  std::string line;
  bool header = true;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 11) throw ValidationError({"line " + std::to_string(lineno) + ": expected 11 fields"});
    MetricSummary r;
    try {
      r.method = f[0];
      r.bias = std::stod(f[1]);
      r.mse = std::stod(f[2]);
      r.ci_length = std::stod(f[3]);
      r.coverage = std::stod(f[4]);
      r.bias_se = std::stod(f[5]);
      r.mse_se = std::stod(f[6]);
      r.ci_length_se = std::stod(f[7]);
      r.coverage_se = std::stod(f[8]);
      r.n_ok = std::stoi(f[9]);
      r.n_failed = std::stoi(f[10]);
    } catch (const std::logic_error&) {
      throw ValidationError({"line " + std::to_string(lineno) + ": unparseable number"});
    }
    rows.push_back(r);
  }
  return rows;
}

void write_replicates_csv(std::ostream& out, const SweepResult& result) {
  out << "replicate,method,ok,gamma_hat,se,ci_lower,ci_upper,dataset_hash\n";
  for (const auto& r : result.replicates) {
    char hash[24];
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(result.dataset_hashes[static_cast<std::size_t>(r.replicate)]));
    out << r.replicate << ',' << r.method << ',' << (r.ok ? 1 : 0) << ',' << fmt_full(r.gamma_hat) << ','
        << fmt_full(r.se) << ',' << fmt_full(r.ci_lower) << ',' << fmt_full(r.ci_upper) << ',' << hash << '\n';
  }
}

std::string render_sweep_svg(const SweepResult& result, const std::string& title) {
  std::vector<BoxGroup> groups;
  for (const auto& m : result.methods) {
    BoxGroup g{m, {}};
    for (const auto& r : result.replicates)
      if (r.method == m && r.ok) g.values.push_back(r.gamma_hat);
    groups.push_back(std::move(g));
  }
  return box_plot_svg(title, groups, result.gamma_true);
}

}  // namespace stdml
