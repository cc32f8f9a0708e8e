#include "stdml/commands.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "stdml/errors.hpp"
#include "stdml/gridfile.hpp"
#include "stdml/svg.hpp"

namespace stdml {
namespace {

const std::set<std::string> kKnownKeys = {
    "verb", "seed", "threads",
    // simulation
    "design", "m", "rho", "nu", "sigma2", "tau2", "gamma", "missing_frac", "p_observed", "logit_temperature",
    "block_size",
    // estimation
    "methods", "features", "cf", "re", "K", "L", "L_values", "neighbors", "include_neighbors", "drop_isolated",
    "reps",
    // learners
    "learner.outcome_trees", "learner.treatment_trees", "learner.burn_in", "learner.kept_draws",
    "learner.cutpoints"};

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string seed;
  std::string threads;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config_path, "key=value configuration file");
  cmd->add_option("--set", a.sets, "override a configuration entry (key=value), repeatable");
  cmd->add_option("--seed", a.seed, "master seed");
  cmd->add_option("--threads", a.threads, "worker threads");
}

RunConfig resolve(const CommonArgs& a, const std::string& verb, bool need_seed) {
  RunConfig cfg;
  if (!a.config_path.empty()) cfg.load_file(a.config_path);
  for (const auto& s : a.sets) cfg.assign(s);
  if (!a.seed.empty()) cfg.set("seed", a.seed);
  if (!a.threads.empty()) cfg.set("threads", a.threads);
  cfg.set("verb", verb);
  cfg.check_known(kKnownKeys);
  if (need_seed && !cfg.has("seed")) throw UsageError(verb + ": a master seed is required (--seed or seed=)");
  if (cfg.has("seed")) cfg.get_u64("seed", 0);
  return cfg;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  return out;
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

LearnerConfig learner_from(const RunConfig& cfg, LearnerConfig base, const char* trees_key) {
  base.n_trees = cfg.get_int(trees_key, base.n_trees);
  base.burn_in = cfg.get_int("learner.burn_in", base.burn_in);
  base.kept_draws = cfg.get_int("learner.kept_draws", base.kept_draws);
  base.n_cutpoints = cfg.get_int("learner.cutpoints", base.n_cutpoints);
  base.validate();
  return base;
}

int cmd_simulate(const RunConfig& cfg, const std::string& out_path, const std::string& truth_path,
                 std::ostream& out) {
  const Scenario scenario = scenario_from_config(cfg);
  const std::uint64_t seed = cfg.get_u64("seed", 0);
  const SimResult sim = std::visit(
      [&](auto c) {
        c.seed = seed;
        if constexpr (std::is_same_v<decltype(c), PixelSimConfig>)
          return simulate_pixel(c);
        else
          return simulate_block(c);
      },
      scenario);
  const std::string header = cfg.header_block() + "# treatment_regenerations=" +
                             std::to_string(sim.truth.regenerations) + "\n";
  {
    auto f = open_output(out_path);
    write_grid_file(f, sim.data, header);
  }
  if (!truth_path.empty()) {
    auto f = open_output(truth_path);
    write_truth_file(f, sim.data, sim.truth, cfg.header_block());
  }
  out << dataset_summary(sim.data);
  out << "treatment regenerations: " << sim.truth.regenerations << "\n";
  return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::string& prefix, std::ostream& out) {
  const Scenario scenario = scenario_from_config(cfg);
  const bool block = std::holds_alternative<BlockSimConfig>(scenario);
  const auto methods = methods_from_config(cfg, block ? "block_table" : "pixel_table");
  const int reps = cfg.get_int("reps", 30);
  const SweepResult res = run_sweep(scenario, methods, reps, cfg.get_u64("seed", 0), sweep_options_from_config(cfg));
  const std::string header = cfg.header_block();
  {
    auto f = open_output(prefix + ".csv");
    f << header;
    write_summary_csv(f, res.summaries);
  }
  {
    auto f = open_output(prefix + "_replicates.csv");
    f << header;
    write_replicates_csv(f, res);
  }
  {
    auto f = open_output(prefix + ".svg");
    f << "<!--\n" << header << "-->\n";
    f << render_sweep_svg(res, std::string(block ? "Block" : "Pixel") + " design, " + std::to_string(reps) +
                                   " replicates");
  }
  out << render_table(res.summaries);
  out << "treatment regenerations: " << res.regenerations << "\n";
  return 0;
}

int cmd_fit(const RunConfig& cfg, const std::string& data_path, const std::string& record_path, std::ostream& out) {
  const GridDataset data = ingest(data_path);
  out << dataset_summary(data);
  const Neighborhood nb = build_neighborhood(data.grid, parse_neighbor_scheme(cfg.get("neighbors", "queen8")));
  std::vector<EffectEstimate> rows;
  for (const auto& name : cfg.get_list("methods", {"OLS", "DID", "DML"})) {
    if (name == "OLS") {
      rows.push_back(baseline_ols(data));
    } else if (name == "DID") {
      rows.push_back(baseline_did(data, nb));
    } else if (name == "DML") {
      rows.push_back(run_stdml(data, stdml_from_config(cfg)));
    } else {
      throw ConfigError("fit: unknown method '" + name + "' (expected OLS, DID or DML)");
    }
  }
  out << '\n' << render_estimates(rows);
  const GroupMeans g = group_means(data);
  out << "\nnaive DID from group means (pre treated " << fmt3(g.pre_treated) << ", pre control "
      << fmt3(g.pre_control) << ", post treated " << fmt3(g.post_treated) << ", post control "
      << fmt3(g.post_control) << "): " << fmt3(naive_did(g.pre_treated, g.pre_control, g.post_treated, g.post_control))
      << "\n";
  if (!record_path.empty()) {
    auto f = open_output(record_path);
    for (const auto& r : rows) {
      std::ostringstream rec;
      write_estimate_record(rec, r);
      // Record marker first, then the resolved config as comments.
      const std::string text = rec.str();
      const auto nl = text.find('\n');
      f << text.substr(0, nl + 1) << cfg.header_block() << text.substr(nl + 1);
    }
  }
  return 0;
}

int cmd_importance(const RunConfig& cfg, const std::string& data_path, const std::string& out_path,
                   std::ostream& out) {
  const GridDataset data = ingest(data_path);
  const StdmlConfig sc = stdml_from_config(cfg);
  const FirstStageResult fs = run_stdml_detailed(data, sc).first_stage;
  const ImportanceTable table = importance_table(fs, data.covariate_count());
  out << render_importance(table);
  if (!out_path.empty()) {
    auto f = open_output(out_path);
    f << cfg.header_block() << "target";
    for (const auto& nm : table.feature_names) f << ',' << nm;
    f << '\n';
    const char* targets[] = {"Y0", "Y1", "D"};
    for (std::size_t r = 0; r < 3; ++r) {
      f << targets[r];
      for (double v : table.detail[r]) f << ',' << fmt_full(v);
      f << '\n';
    }
  }
  return 0;
}

int cmd_knot_sweep(const RunConfig& cfg, const std::string& data_path, const std::string& prefix,
                   std::ostream& out) {
  const std::vector<int> levels = cfg.get_int_list("L_values", {});
  if (levels.empty()) throw UsageError("knot-sweep: the list of L values is empty (use --L or L_values=)");
  const GridDataset data = ingest(data_path);
  std::vector<IntervalPoint> points;
  std::string csv = cfg.header_block() + "L,features,estimate,se,ci_lower,ci_upper\n";
  out << "    L  features  Estimate  Standard Error  CI Lower  CI Upper\n";
  for (int level : levels) {
    if (level < 0) throw ConfigError("knot-sweep: L must be >= 0");
    StdmlConfig sc = stdml_from_config(cfg);
    sc.features = level == 0 ? FeatureSet::X : FeatureSet::XSZ;
    sc.basis_size = level;
    const EffectEstimate est = run_stdml(data, sc);
    points.push_back({"L=" + std::to_string(level), est.gamma, est.ci_lower, est.ci_upper});
    csv += std::to_string(level) + "," + to_string(sc.features) + "," + fmt_full(est.gamma) + "," +
           fmt_full(est.se) + "," + fmt_full(est.ci_lower) + "," + fmt_full(est.ci_upper) + "\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "%5d  %8s  %8.3f  %14.3f  %8.3f  %8.3f\n", level, to_string(sc.features).c_str(),
                  est.gamma, est.se, est.ci_lower, est.ci_upper);
    out << buf;
  }
  if (!prefix.empty()) {
    {
      auto f = open_output(prefix + ".csv");
      f << csv;
    }
    auto f = open_output(prefix + ".svg");
    f << "<!--\n" << cfg.header_block() << "-->\n";
    f << interval_plot_svg("Treatment effect by number of basis functions", "basis functions (L)", points);
  }
  return 0;
}

int cmd_report(const std::string& input, std::ostream& out) {
  std::ifstream in(input);
  if (!in) throw ValidationError({"cannot read " + input});
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (text.find("# estimate record") != std::string::npos) {
    std::istringstream ss(text);
    out << render_estimates(read_estimate_records(ss));
  } else {
    std::istringstream ss(text);
    out << render_table(parse_summary_csv(ss));
  }
  return 0;
}

}  // namespace

MethodSpec parse_method(const std::string& name) {
  if (name == "OLS") return ols_method();
  if (name == "DID") return did_method();
  if (name == "Oracle") return oracle_method();
  if (name.rfind("DML-", 0) == 0) {
    const std::string rest = name.substr(4);
    const auto dash = rest.find('-');
    if (dash != std::string::npos) {
      const std::string a = rest.substr(0, dash), b = rest.substr(dash + 1);
      if (a == "X" || a == "XS" || a == "XSZ") {
        if (b == "CF") return stdml_method(parse_feature_set(a), CrossFitMode::by_pixel);
        if (b == "noCF") return stdml_method(parse_feature_set(a), CrossFitMode::none);
      }
      if ((a == "RE" || a == "noRE") && (b == "noCF" || b == "pixelCF" || b == "blockCF"))
        return stdml_method(FeatureSet::XSZ, parse_cross_fit(b), parse_re_mode(a), true);
    }
  }
  throw ConfigError("unknown method '" + name + "'");
}

std::vector<MethodSpec> methods_from_config(const RunConfig& cfg, const std::string& fallback) {
  std::vector<MethodSpec> methods;
  for (const auto& item : cfg.get_list("methods", {fallback})) {
    if (item == "pixel_table") {
      for (auto& m : pixel_table_methods()) methods.push_back(m);
    } else if (item == "block_table") {
      for (auto& m : block_table_methods()) methods.push_back(m);
    } else {
      methods.push_back(parse_method(item));
    }
  }
  for (auto& m : methods) {
    m.k = cfg.get_int("K", m.k);
    m.basis_size = cfg.get_int("L", m.basis_size);
  }
  return methods;
}

Scenario scenario_from_config(const RunConfig& cfg) {
  const std::string design = cfg.get("design", "pixel");
  auto fill = [&](auto& c) {
    c.m = cfg.get_int("m", c.m);
    c.field.range = cfg.get_double("rho", c.field.range);
    c.field.smoothness = cfg.get_double("nu", c.field.smoothness);
    c.sigma2 = cfg.get_double("sigma2", c.sigma2);
    c.gamma = cfg.get_double("gamma", c.gamma);
    c.missing_frac = cfg.get_double("missing_frac", c.missing_frac);
    c.p_observed = cfg.get_int("p_observed", c.p_observed);
    c.logit_temperature = cfg.get_double("logit_temperature", c.logit_temperature);
    c.seed = cfg.get_u64("seed", c.seed);
  };
  if (design == "pixel") {
    PixelSimConfig c;
    fill(c);
    c.validate();
    return c;
  }
  if (design == "block") {
    BlockSimConfig c;
    fill(c);
    c.tau2 = cfg.get_double("tau2", c.tau2);
    c.block_size = cfg.get_int("block_size", c.block_size);
    c.validate();
    return c;
  }
  throw ConfigError("unknown design '" + design + "' (expected pixel or block)");
}

SweepOptions sweep_options_from_config(const RunConfig& cfg) {
  SweepOptions o;
  o.threads = static_cast<unsigned>(std::max(1, cfg.get_int("threads", 1)));
  o.outcome_cfg = learner_from(cfg, LearnerConfig::continuous_defaults(), "learner.outcome_trees");
  o.treatment_cfg = learner_from(cfg, LearnerConfig::binary_defaults(), "learner.treatment_trees");
  o.neighbors = parse_neighbor_scheme(cfg.get("neighbors", "queen8"));
  return o;
}

StdmlConfig stdml_from_config(const RunConfig& cfg) {
  StdmlConfig sc;
  sc.features = parse_feature_set(cfg.get("features", "XSZ"));
  sc.cf = parse_cross_fit(cfg.get("cf", "by_pixel"));
  sc.k = cfg.get_int("K", sc.k);
  sc.re = parse_re_mode(cfg.get("re", "none"));
  sc.basis_size = cfg.get_int("L", sc.basis_size);
  sc.neighbors = parse_neighbor_scheme(cfg.get("neighbors", "queen8"));
  sc.seed = cfg.get_u64("seed", sc.seed);
  sc.outcome_cfg = learner_from(cfg, LearnerConfig::continuous_defaults(), "learner.outcome_trees");
  sc.treatment_cfg = learner_from(cfg, LearnerConfig::binary_defaults(), "learner.treatment_trees");
  sc.threads = static_cast<unsigned>(std::max(1, cfg.get_int("threads", 1)));
  if (cfg.has("include_neighbors")) sc.include_neighbors = cfg.get_bool("include_neighbors", true);
  sc.drop_isolated = cfg.get_bool("drop_isolated", false);
  return sc;
}

std::string render_estimates(const std::vector<EffectEstimate>& rows) {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.method.size());
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %9s %15s %9s %9s\n", static_cast<int>(width), "Method", "Estimate",
                "Standard Error", "CI Lower", "CI Upper");
  std::string out = buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %9.3f %15.3f %9.3f %9.3f\n", static_cast<int>(width), r.method.c_str(),
                  r.gamma, r.se, r.ci_lower, r.ci_upper);
    out += buf;
  }
  return out;
}

ImportanceTable importance_table(const FirstStageResult& fs, std::size_t n_covariates) {
  ImportanceTable t;
  t.feature_names = fs.feature_names;
  t.detail = fs.importance;
  for (std::size_t j = 0; j < n_covariates; ++j) t.columns.push_back(fs.feature_names.at(j));
  const bool spatial = fs.feature_names.size() > n_covariates;
  if (spatial) t.columns.push_back("spatial");
  for (const auto& row : fs.importance) {
    std::vector<double> r(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(n_covariates));
    if (spatial) {
      double s = 0.0;
      for (std::size_t f = n_covariates; f < row.size(); ++f) s += row[f];
      r.push_back(s);
    }
    t.rows.push_back(std::move(r));
  }
  return t;
}

std::string render_importance(const ImportanceTable& table) {
  std::string out = "      ";
  char buf[64];
  for (const auto& c : table.columns) {
    std::snprintf(buf, sizeof buf, " %10s", c.c_str());
    out += buf;
  }
  out += '\n';
  const char* targets[] = {"Y0", "Y1", "D"};
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%-6s", targets[r]);
    out += buf;
    for (double v : table.rows[r]) {
      std::snprintf(buf, sizeof buf, " %10.3f", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatiotemporal double machine learning on gridded two-period data", "stdml"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string out_path, truth_path, data_path, record_path, input_path, levels;

  auto* simulate = app.add_subcommand("simulate", "simulate one dataset and write it as a grid file");
  add_common(simulate, common);
  simulate->add_option("--out", out_path, "grid file to write")->required();
  simulate->add_option("--truth", truth_path, "also write the per-pixel truth");

  auto* sweep = app.add_subcommand("sweep", "Monte Carlo comparison of estimators");
  add_common(sweep, common);
  sweep->add_option("--out", out_path, "output prefix (<prefix>.csv, <prefix>_replicates.csv, <prefix>.svg)")
      ->required();

  auto* fit = app.add_subcommand("fit", "estimate the treatment effect on a grid file");
  add_common(fit, common);
  fit->add_option("--data", data_path, "grid file")->required();
  fit->add_option("--record", record_path, "write estimate records here");

  auto* importance = app.add_subcommand("importance", "split-count variable importance of the first stage");
  add_common(importance, common);
  importance->add_option("--data", data_path, "grid file")->required();
  importance->add_option("--out", out_path, "per-feature CSV");

  auto* knots = app.add_subcommand("knot-sweep", "estimates over a list of basis sizes");
  add_common(knots, common);
  knots->add_option("--data", data_path, "grid file")->required();
  knots->add_option("--L", levels, "comma-separated basis sizes, 0 for no spatial features");
  knots->add_option("--out", out_path, "output prefix (<prefix>.csv, <prefix>.svg)");

  auto* report = app.add_subcommand("report", "render a sweep CSV or estimate record file as a table");
  report->add_option("--input", input_path, "file to render")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return static_cast<int>(ExitCode::usage);
  }

  try {
    if (*simulate) return cmd_simulate(resolve(common, "simulate", true), out_path, truth_path, out);
    if (*sweep) return cmd_sweep(resolve(common, "sweep", true), out_path, out);
    if (*fit) return cmd_fit(resolve(common, "fit", true), data_path, record_path, out);
    if (*importance) return cmd_importance(resolve(common, "importance", true), data_path, out_path, out);
    if (*knots) {
      CommonArgs with_levels = common;
      if (!levels.empty()) with_levels.sets.push_back("L_values=" + levels);
      return cmd_knot_sweep(resolve(with_levels, "knot-sweep", true), data_path, out_path, out);
    }
    if (*report) return cmd_report(input_path, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::numerical);
  }
  return static_cast<int>(ExitCode::usage);
}

}  // namespace stdml
