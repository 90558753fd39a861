#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "tehtree/dataset.hpp"
#include "tehtree/simgen.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "tehtree_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Run {
  int code;
  std::string out, err;
};

Run cli(const std::string& args) {
  const fs::path out = workdir() / "stdout.txt", err = workdir() / "stderr.txt";
  const std::string cmd = std::string("\"") + TEHTREE_CLI + "\" " + args + " >\"" + out.string() +
                          "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

void write_m3_csv(const std::string& name, std::size_t n, std::uint64_t seed) {
  tehtree::ScenarioSpec s;
  s.model = tehtree::Model::M3;
  s.covariates = tehtree::CovariateSet::C2;
  s.coeffs = tehtree::parse_coefficients("gamma=1.5");
  s.n = n;
  s.rho = 0.2;
  s.seed = seed;
  tehtree::save_csv(tehtree::generate_dataset(s).data, path(name), "outcome", "arm");
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("constant outcome gives a single leaf") {
  std::ofstream csv(path("const.csv"));
  csv << "y,z,a,b\n";
  for (int i = 0; i < 60; ++i) csv << "2.5," << i % 2 << ',' << (i * 37 % 11) << ',' << (i % 3 == 0) << '\n';
  csv.close();
  const Run r = cli("fit --data " + path("const.csv") + " --outcome y --treatment z --seed 3 --out " +
                    path("const.json"));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("seed=3\n") != std::string::npos);
  CHECK(r.out.find("n_leaves=1\n") != std::string::npos);
  const std::string json = slurp(path("const.json"));
  CHECK(json.find("\"children\"") == std::string::npos);
  CHECK(json.find("\"effect\": 0") != std::string::npos);
  CHECK(fs::exists(path("const.json.summary.txt")));
}

TEST_CASE("bad treatment value exits 2 naming the column") {
  std::ofstream csv(path("badz.csv"));
  csv << "y,grp,x1\n1,0,0\n2,0,1\n3,2,0\n4,1,1\n";
  csv.close();
  const Run r = cli("fit --data " + path("badz.csv") + " --outcome y --treatment grp --out " + path("badz.json"));
  CHECK(r.code == 2);
  CHECK(r.err.find("grp") != std::string::npos);
}

TEST_CASE("flag errors exit 2") {
  CHECK(cli("fit --data x.csv --outcome y --treatment z --out o.json --bogus 1").code == 2);
  CHECK(cli("simulate --model M1 --out o.csv --unknown").code == 2);
  CHECK(cli("").code == 2);
  CHECK(cli("fit --data " + path("missing.csv") + " --outcome y --treatment z --out " + path("m.json")).code == 2);
  CHECK(cli("simulate --model M1 --mode triple --reps 1 --out " + path("t.csv")).code == 2);
}

TEST_CASE("fit is byte-identical across runs and predict maps columns by name") {
  write_m3_csv("m3.csv", 400, 21);
  const std::string args = "fit --data " + path("m3.csv") + " --outcome outcome --treatment arm --seed 8 --out ";
  const Run a = cli(args + path("a.json"));
  const Run b = cli(args + path("b.json"));
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(slurp(path("a.json")) == slurp(path("b.json")));
  CHECK(a.out.substr(0, a.out.find("tree=")) == b.out.substr(0, b.out.find("tree=")));

  // Reordered columns plus an extra one.
  const auto table = tehtree::read_csv_table(path("m3.csv"));
  std::ofstream q(path("query.csv"));
  q << "x5,extra,x4,x3,x2,x1\n";
  for (std::size_t i = 0; i < 10; ++i) {
    q << table.columns[table.column_index("x5")][i] << ",7," << table.columns[table.column_index("x4")][i] << ','
      << table.columns[table.column_index("x3")][i] << ',' << table.columns[table.column_index("x2")][i] << ','
      << table.columns[table.column_index("x1")][i] << '\n';
  }
  q.close();
  const Run p = cli("predict --tree " + path("a.json") + " --data " + path("query.csv") + " --out " + path("pred.csv"));
  REQUIRE(p.code == 0);
  const std::string pred = slurp(path("pred.csv"));
  CHECK(pred.rfind("row,leaf,effect\n", 0) == 0);
  CHECK(std::count(pred.begin(), pred.end(), '\n') == 11);
  CHECK(p.out.find("rows=10\n") != std::string::npos);

  std::ofstream bad(path("query_bad.csv"));
  bad << "x1,x2\n0,0\n";
  bad.close();
  CHECK(cli("predict --tree " + path("a.json") + " --data " + path("query_bad.csv") + " --out " + path("p2.csv")).code == 2);
}

TEST_CASE("double mode reports holdout counts") {
  write_m3_csv("m3d.csv", 400, 22);
  const Run r = cli("fit --data " + path("m3d.csv") + " --outcome outcome --treatment arm --mode double --train-frac 0.75 --seed 2 --out " +
                    path("d.json"));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("n_holdout=100\n") != std::string::npos);
  CHECK(slurp(path("d.json")).find("\"n_treated_holdout\"") != std::string::npos);
}

TEST_CASE("simulate validates coefficients") {
  CHECK(cli("simulate --model M7 --covariates C3 --coeffs gamma=2 --reps 1 --out " + path("s.csv")).code == 2);
  const Run ok = cli("simulate --model M7 --covariates C3 --coeffs gamma=2,eta=1.5 --n 100 --reps 2 --workers 1 --out " +
                     path("s.csv"));
  CHECK(ok.code == 0);
  CHECK(ok.out.find("power_any_node=") != std::string::npos);
  CHECK(cli("simulate --model M3 --covariates C2 --reps 1 --out " + path("s.csv")).code == 2);
}

TEST_CASE("simulate output does not depend on workers and report merges") {
  const std::string base = "simulate --model M3 --covariates C2 --coeffs P4 --n 200 --rho 0.2 --reps 8 --seed 5 ";
  const Run a = cli(base + "--workers 1 --out " + path("w1.csv") + " --per-rep " + path("w1r.csv"));
  const Run b = cli(base + "--workers 4 --out " + path("w4.csv") + " --per-rep " + path("w4r.csv"));
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(slurp(path("w1.csv")) == slurp(path("w4.csv")));
  CHECK(slurp(path("w1r.csv")) == slurp(path("w4r.csv")));
  CHECK(a.out.substr(0, a.out.find("metrics=")) == b.out.substr(0, b.out.find("metrics=")));

  const Run m = cli("simulate --model M1 --covariates C2 --n 100 --reps 4 --seed 5 --workers 1 --out " + path("null.csv"));
  REQUIRE(m.code == 0);
  CHECK(m.out.find("type_I_error=") != std::string::npos);
  const Run r = cli("report --inputs " + path("w1.csv") + " " + path("null.csv") + " --out " + path("merged.csv"));
  REQUIRE(r.code == 0);
  const std::string merged = slurp(path("merged.csv"));
  CHECK(std::count(merged.begin(), merged.end(), '\n') == 3);
  CHECK(merged.rfind("source,model,", 0) == 0);
}

TEST_CASE("config file feeds simulate") {
  std::ofstream cfg(path("scn.cfg"));
  cfg << "scenario = (M3)(C2)(P4)\nn = 100\nrho = 0.1\nseed = 4\n";
  cfg.close();
  const Run r = cli("simulate --config " + path("scn.cfg") + " --reps 2 --workers 1 --out " + path("cfg.csv"));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("seed=4\n") != std::string::npos);
  CHECK(r.out.find("n=100\n") != std::string::npos);
}

}
