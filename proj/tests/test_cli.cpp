#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stdml/commands.hpp"
#include "stdml/config.hpp"
#include "stdml/errors.hpp"
#include "stdml/gridfile.hpp"

using namespace stdml;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "stdml");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "stdml_cli_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

// Cheap learner settings so a fit takes well under a second.
const std::vector<std::string> kFast = {"--set", "learner.outcome_trees=10", "--set", "learner.treatment_trees=5",
                                        "--set", "learner.burn_in=10",       "--set", "learner.kept_draws=10",
                                        "--set", "K=3",                      "--set", "L=16"};

std::vector<std::string> with_fast(std::vector<std::string> args) {
  args.insert(args.end(), kFast.begin(), kFast.end());
  return args;
}

fs::path simulated(const std::string& name, int m = 12) {
  const fs::path p = scratch(name);
  const Run r = cli({"simulate", "--seed", "5", "--set", "m=" + std::to_string(m), "--out", p.string()});
  REQUIRE(r.code == 0);
  return p;
}

}  // namespace

TEST_CASE("four-pixel file ingests with the expected shapes") {
  const fs::path p = scratch("four.csv");
  write_text(p,
             "row,col,Y0,Y1,D,elev\n"
             "0,0,1.0,2.0,1,0.5\n"
             "0,1,1.5,NA,0,-1\n"
             "1,0,0.5,0.7,1,2\n"
             "1,1,NA,3.0,0,0\n");
  const GridDataset ds = ingest(p.string());
  CHECK(ds.size() == 4);
  CHECK(ds.grid.rows() == 2);
  CHECK(ds.covariate_names == std::vector<std::string>{"elev"});
  CHECK(ds.d == std::vector<int>{1, 0, 1, 0});
  CHECK_FALSE(ds.observed1[1]);
  CHECK_FALSE(ds.observed0[3]);
  CHECK(ds.x(2, 0) == 2.0);
}

TEST_CASE("invalid treatment value names its line") {
  const fs::path p = scratch("badd.csv");
  write_text(p,
             "# comment\n"
             "row,col,Y0,Y1,D,x\n"
             "0,0,1,2,1,0\n"
             "0,1,1,2,0,0\n"
             "1,0,1,2,1,0\n"
             "1,1,1,2,2,0\n");
  try {
    ingest(p.string());
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    REQUIRE(e.items().size() == 1);
    CHECK(e.items()[0].find("badd.csv:6:") != std::string::npos);
  }
  const Run r = cli({"fit", "--seed", "1", "--data", p.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("badd.csv:6:") != std::string::npos);
}

TEST_CASE("several problems are itemized together") {
  const fs::path p = scratch("multi.csv");
  write_text(p,
             "row,col,Y0,Y1,D,x\n"
             "0,0,1,2,1,0\n"
             "0,0,1,2,0,0\n"
             "1,0,abc,2,1,0\n"
             "1,1,1,2,1,inf\n");
  try {
    ingest(p.string());
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.items().size() == 3);
    CHECK(e.items()[0].find("multi.csv:3:") != std::string::npos);
    CHECK(e.items()[0].find("first seen on line 2") != std::string::npos);
    CHECK(e.items()[1].find("multi.csv:4:") != std::string::npos);
    CHECK(e.items()[2].find("multi.csv:5:") != std::string::npos);
  }
  write_text(p, "row,col,Y0,D\n0,0,1,1\n");
  CHECK_THROWS_AS(ingest(p.string()), ValidationError);
}

TEST_CASE("usage errors exit with code 1") {
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({}).code == 1);
  const fs::path data = simulated("usage.csv", 8);
  const Run noseed = cli({"fit", "--data", data.string()});
  CHECK(noseed.code == 1);
  CHECK(noseed.err.find("seed") != std::string::npos);
  CHECK(cli({"fit", "--seed", "1"}).code == 1);
  CHECK(cli({"fit", "--seed", "1", "--data", data.string(), "--set", "novalue"}).code == 1);
  CHECK(cli({"fit", "--seed", "1", "--data", data.string(), "--set", "no_such_key=3"}).code == 2);
  CHECK(cli({"fit", "--seed", "x1", "--data", data.string()}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("the installed binary reports exit codes") {
  const std::string bin = STDML_CLI_PATH;
  auto status = [](const std::string& cmd) {
    const int raw = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(raw);
  };
  CHECK(status(bin + " nosuchverb") == 1);
  CHECK(status(bin + " report --input " + scratch("absent.txt").string()) == 2);
  const fs::path out = scratch("bin_sim.csv");
  CHECK(status(bin + " simulate --seed 3 --set m=6 --out " + out.string()) == 0);
  CHECK(fs::exists(out));
}

TEST_CASE("fit prints one row per method and a naive DID line") {
  const fs::path data = simulated("fit.csv");
  const fs::path record = scratch("fit_record.txt");
  const Run r = cli(with_fast({"fit", "--seed", "9", "--data", data.string(), "--record", record.string()}));
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  std::string line;
  int rows = 0;
  bool header = false, naive = false;
  while (std::getline(lines, line)) {
    if (line.rfind("Method", 0) == 0) {
      header = true;
      CHECK(line.find("Estimate") < line.find("Standard Error"));
      CHECK(line.find("CI Lower") < line.find("CI Upper"));
    }
    if (header && (line.rfind("OLS", 0) == 0 || line.rfind("DID", 0) == 0 || line.rfind("DML-", 0) == 0)) ++rows;
    naive |= line.rfind("naive DID", 0) == 0;
  }
  CHECK(rows == 3);
  CHECK(naive);

  std::ifstream rec(record);
  const auto records = read_estimate_records(rec);
  REQUIRE(records.size() == 3);
  CHECK(records[0].method == "OLS");
  CHECK(records[2].metadata.at("seed") == "9");
  CHECK(read_text(record).find("# learner.outcome_trees=10") != std::string::npos);

  const Run report = cli({"report", "--input", record.string()});
  CHECK(report.code == 0);
  CHECK(report.out.find("DML-XSZ-noRE-pixelCF") != std::string::npos);
}

TEST_CASE("reruns with the same seed are byte-identical") {
  const fs::path data = simulated("rerun.csv");
  const auto a = cli(with_fast({"fit", "--seed", "4", "--data", data.string(), "--threads", "1"}));
  const auto b = cli(with_fast({"fit", "--seed", "4", "--data", data.string(), "--threads", "3"}));
  const auto c = cli(with_fast({"fit", "--seed", "5", "--data", data.string()}));
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out != c.out);

  const fs::path s1 = scratch("sim_a.csv"), s2 = scratch("sim_b.csv");
  CHECK(cli({"simulate", "--seed", "8", "--set", "m=10", "--out", s1.string()}).code == 0);
  CHECK(cli({"simulate", "--seed", "8", "--set", "m=10", "--out", s2.string()}).code == 0);
  CHECK(read_text(s1) == read_text(s2));
}

TEST_CASE("simulated grid files round trip through ingest") {
  const fs::path p = scratch("round.csv"), truth = scratch("round_truth.csv");
  REQUIRE(cli({"simulate", "--seed", "12", "--set", "m=10", "--set", "design=block", "--set", "block_size=5",
               "--set", "missing_frac=0.1", "--out", p.string(), "--truth", truth.string()})
              .code == 0);
  const GridDataset ds = ingest(p.string());
  CHECK(ds.size() == 100);
  REQUIRE(ds.blocks.has_value());
  CHECK(ds.blocks->count == 4);
  std::size_t masked = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) masked += !ds.observed0[i] + !ds.observed1[i];
  CHECK(masked == 20);
  std::ostringstream again;
  write_grid_file(again, ds, "");
  std::istringstream in(again.str());
  const GridDataset back = read_grid_file(in, "again");
  CHECK(back.x == ds.x);
  CHECK(back.d == ds.d);
  const std::string t = read_text(truth);
  CHECK(t.find("# gamma=3") != std::string::npos);
  CHECK(t.find("propensity") != std::string::npos);
}

TEST_CASE("knot sweep") {
  const fs::path data = simulated("knots.csv");
  const Run empty = cli(with_fast({"knot-sweep", "--seed", "2", "--data", data.string()}));
  CHECK(empty.code == 1);
  CHECK(empty.err.find("empty") != std::string::npos);
  const fs::path prefix = scratch("knots_out");
  const Run r =
      cli(with_fast({"knot-sweep", "--seed", "2", "--data", data.string(), "--L", "0,4,9,16,25", "--out", prefix.string()}));
  REQUIRE(r.code == 0);
  std::istringstream csv(read_text(prefix.string() + ".csv"));
  std::string line;
  int rows = 0;
  while (std::getline(csv, line))
    if (!line.empty() && line[0] != '#' && line.rfind("L,", 0) != 0) ++rows;
  CHECK(rows == 5);
  CHECK(read_text(prefix.string() + ".svg").find("<svg") != std::string::npos);
  CHECK(cli(with_fast({"knot-sweep", "--seed", "2", "--data", data.string(), "--L", "7"})).code == 2);
}

TEST_CASE("importance ranks the treatment driver first") {
  // Among the released covariates the treatment logit depends most on the
  // third one.
  const fs::path data = simulated("importance.csv", 16);
  const fs::path detail = scratch("importance_detail.csv");
  const Run r = cli({"importance", "--seed", "6", "--data", data.string(), "--out", detail.string(), "--set",
                     "features=X", "--set", "K=2", "--set", "learner.burn_in=100", "--set",
                     "learner.kept_draws=200"});
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  CHECK(line.find("X3") != std::string::npos);
  std::vector<double> drow;
  while (std::getline(lines, line)) {
    if (line.rfind("D ", 0) != 0) continue;
    std::istringstream cells(line.substr(2));
    for (double v; cells >> v;) drow.push_back(v);
  }
  REQUIRE(drow.size() == 3);
  CHECK(drow[2] > drow[0]);
  CHECK(drow[2] > drow[1]);
  CHECK(read_text(detail).find("target,X1,X2,X3") != std::string::npos);
}

TEST_CASE("sweep verb writes table, CSVs and figure") {
  const fs::path prefix = scratch("sweep_out");
  const Run r = cli({"sweep", "--seed", "3", "--set", "m=8", "--set", "reps=3", "--set", "methods=OLS,DID"});
  CHECK(r.code == 1);  // --out is required
  const Run ok =
      cli({"sweep", "--seed", "3", "--set", "m=8", "--set", "reps=3", "--set", "methods=OLS,DID", "--out", prefix.string()});
  REQUIRE(ok.code == 0);
  CHECK(ok.out.find("OLS") != std::string::npos);
  const std::string csv = read_text(prefix.string() + ".csv");
  CHECK(csv.find("# seed=3") != std::string::npos);
  std::istringstream in(csv);
  CHECK(parse_summary_csv(in).size() == 2);
  CHECK(fs::exists(prefix.string() + "_replicates.csv"));
  const Run report = cli({"report", "--input", prefix.string() + ".csv"});
  CHECK(report.code == 0);
  CHECK(report.out.find("Coverage") != std::string::npos);
}

TEST_CASE("configuration files and overrides") {
  const fs::path p = scratch("run.cfg");
  write_text(p, "# sweep settings\nm = 8\nreps=3\nmethods=OLS\n\n");
  RunConfig cfg;
  cfg.load_file(p.string());
  CHECK(cfg.get_int("m", 0) == 8);
  CHECK(cfg.get_list("methods", {}) == std::vector<std::string>{"OLS"});
  CHECK_THROWS_AS(cfg.get_double("methods", 0), ConfigError);
  cfg.assign("m=9");
  CHECK(cfg.get_int("m", 0) == 9);
  CHECK_THROWS_AS(cfg.assign("=3"), UsageError);
  CHECK(cfg.header_block().find("# m=9\n") != std::string::npos);

  const fs::path prefix = scratch("cfg_sweep");
  const Run r = cli({"sweep", "--config", p.string(), "--seed", "1", "--set", "m=6", "--out", prefix.string()});
  REQUIRE(r.code == 0);
  CHECK(read_text(prefix.string() + ".csv").find("# m=6") != std::string::npos);
  write_text(p, "this line has no equals sign\n");
  CHECK(cli({"sweep", "--config", p.string(), "--seed", "1", "--out", prefix.string()}).code != 0);
}
