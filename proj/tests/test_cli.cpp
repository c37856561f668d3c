#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "qir/cli.hpp"
#include "qir/csv.hpp"
#include "qir/errors.hpp"
#include "qir/model_io.hpp"
#include "qir/optim.hpp"
#include "qir/sim.hpp"
#include "qir/text.hpp"
#include "qir/tuning.hpp"
#include "test_util.hpp"

using namespace qir;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code;
  std::string out, err;
};

Run run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Tail-scaled simulation sample without its intercept column, as a user CSV would hold it.
Dataset scaled_sample(Eigen::Index n, std::uint64_t seed) {
  SimScenario sc = SimScenario::lowdim(n, seed);
  sc.tail_scaling = true;
  const Dataset d = generate_sample(sc);
  return Dataset(d.y, d.X.rightCols(d.p() - 1));
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("CSV parsing") {
    const auto dir = qir::test::temp_dir("csv");
    write_text(dir / "ok.csv", "y,x1,\"x 2\"\n1.5,2,3\n-1,0.5,1e-3\n\n4,5,6\n");
    const Dataset d = parse_dataset(dir / "ok.csv");
    CHECK(d.n() == 3);
    CHECK(d.p() == 3);
    CHECK(d.X(1, 0) == 1.0);
    CHECK(d.X(1, 2) == 1e-3);
    CHECK(d.y(2) == 4.0);
    const Dataset raw = parse_dataset(dir / "ok.csv", {"y", false, true});
    CHECK(raw.p() == 2);

    write_text(dir / "bad.csv", "y,x1,x2,x3\n1,2,3,4\n1,2,3,x\n");
    try {
      parse_dataset(dir / "bad.csv");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.row() == 2);
      CHECK(e.column() == "x3");
      CHECK(std::string(e.what()).find("row 2") != std::string::npos);
      CHECK(std::string(e.what()).find("\"x3\"") != std::string::npos);
    }
    write_text(dir / "ragged.csv", "y,x1\n1,2\n3\n");
    CHECK_THROWS_AS(parse_dataset(dir / "ragged.csv"), ParseError);
    write_text(dir / "empty.csv", "y,x1\n");
    CHECK_THROWS_AS(parse_dataset(dir / "empty.csv"), ParseError);
    write_text(dir / "noy.csv", "x1\n1\n");
    CHECK_THROWS_AS(parse_dataset(dir / "noy.csv"), ParseError);
    CHECK(parse_dataset(dir / "noy.csv", {"y", true, false}).n() == 1);
    CHECK_THROWS_AS(parse_dataset(dir / "missing.csv"), ParseError);
  }

  TEST_CASE("CSV round-trip is exact") {
    const Dataset d = generate_sample(SimScenario::lowdim(200, 3));
    const auto dir = qir::test::temp_dir("csv_rt");
    write_dataset(d, dir / "d.csv");
    const Dataset back = parse_dataset(dir / "d.csv", {"y", false, true});
    CHECK((back.y.array() == d.y.array()).all());
    CHECK((back.X.array() == d.X.array()).all());
  }

  TEST_CASE("usage errors") {
    const Run r = run_cli({"fit", "--bogus"});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.find("Usage") != std::string::npos);
    CHECK(run_cli({}).code == cli::kExitUsage);
    CHECK(run_cli({"fit", "--data", "/nonexistent.csv", "--out", "m.json"}).code == cli::kExitUsage);
    CHECK(run_cli({"--help"}).code == cli::kExitOk);
  }

  TEST_CASE("fit then predict matches the library bit for bit") {
    const auto dir = qir::test::temp_dir("cli_fit");
    const Dataset d = scaled_sample(300, 8);
    write_dataset(d, dir / "train.csv");
    const Run fit = run_cli({"fit", "--data", (dir / "train.csv").string(), "--out", (dir / "m.json").string(),
                             "--tail-scaling", "--covariance-out", (dir / "cov.json").string(), "--report",
                             (dir / "report.json").string()});
    REQUIRE(fit.code == cli::kExitOk);
    CHECK(fit.out.find("converged") != std::string::npos);

    write_text(dir / "query.csv", "x1,x2\n0,0\n0.1,-0.2\n");
    const Run pred = run_cli({"predict", "--model", (dir / "m.json").string(), "--data",
                              (dir / "query.csv").string(), "--tau", "0.991,0.995", "--out",
                              (dir / "pred.tsv").string()});
    REQUIRE(pred.code == cli::kExitOk);

    Dataset lib = parse_dataset(dir / "train.csv");
    lib.tail_scaling = TailScaling::fit_min_max(lib.X);
    const SimScenario sc = SimScenario::lowdim(1, 0);
    const FitResult f = fit_cqr(sc.family, sc.links, lib, quantile_grid(0.5, 0.99, 10));
    const QirModel m = fitted_model(sc.family, sc.links, lib, f);
    CHECK((load_model(dir / "m.json").beta().array() == m.beta().array()).all());

    std::string expected = "row\ttau\tquantile\n";
    const std::vector<std::vector<double>> xs{{1, 0, 0}, {1, 0.1, -0.2}};
    for (size_t i = 0; i < 2; ++i) {
      for (double t : {0.991, 0.995}) {
        expected += std::to_string(i + 1) + "\t" + format_full(t) + "\t" + format_full(predict_quantile(m, xs[i], t)) + "\n";
      }
    }
    CHECK(slurp(dir / "pred.tsv") == expected);

    // Repeated invocations are identical.
    const Run again = run_cli({"predict", "--model", (dir / "m.json").string(), "--data",
                               (dir / "query.csv").string()});
    const Run again2 = run_cli({"predict", "--model", (dir / "m.json").string(), "--data",
                                (dir / "query.csv").string()});
    CHECK(again.out == again2.out);

    // Intervals: sample-average needs the training rows.
    CHECK(run_cli({"predict", "--model", (dir / "m.json").string(), "--data", (dir / "query.csv").string(),
                   "--covariance", (dir / "cov.json").string()})
              .code == cli::kExitUsage);
    const Run ci = run_cli({"predict", "--model", (dir / "m.json").string(), "--data", (dir / "query.csv").string(),
                            "--covariance", (dir / "cov.json").string(), "--delta-data",
                            (dir / "train.csv").string()});
    REQUIRE(ci.code == cli::kExitOk);
    CHECK(ci.out.rfind("row\ttau\tquantile\tlower\tupper\n", 0) == 0);

    // Penalized fit path.
    const Run reg = run_cli({"fit", "--data", (dir / "train.csv").string(), "--out", (dir / "r.json").string(),
                             "--lambda", "0.05", "--tail-scaling"});
    CHECK(reg.code == cli::kExitOk);
    CHECK(run_cli({"fit", "--data", (dir / "train.csv").string(), "--out", (dir / "r.json").string(), "--lambda",
                   "0.05", "--covariance-out", (dir / "c.json").string()})
              .code == cli::kExitUsage);
  }

  TEST_CASE("numerical failures exit 2") {
    const auto dir = qir::test::temp_dir("cli_num");
    // An all-zero covariate leaves the density-weighted Hessian singular.
    std::string text = "y,x1\n";
    for (int i = 0; i < 40; ++i) text += std::to_string(i % 7) + ",0\n";
    write_text(dir / "flat.csv", text);
    const Run r = run_cli({"fit", "--data", (dir / "flat.csv").string(), "--out", (dir / "m.json").string(),
                           "--family", "gaussian", "--covariance-out", (dir / "cov.json").string()});
    CHECK(r.code == cli::kExitNumerical);
  }

  TEST_CASE("tune") {
    const auto dir = qir::test::temp_dir("cli_tune");
    write_dataset(scaled_sample(150, 4), dir / "train.csv");
    const Run r = run_cli({"tune", "--data", (dir / "train.csv").string(), "--lambdas", "0.01,0.1", "--tau-l",
                           "0.5,0.7", "--folds", "3", "--repeats", "1", "--tail-scaling", "--out",
                           (dir / "tune.tsv").string()});
    REQUIRE(r.code == cli::kExitOk);
    CHECK(r.out.find("refit_lambda") != std::string::npos);
    CHECK(fs::exists(dir / "tune.tsv"));
    CHECK(run_cli({"tune", "--data", (dir / "train.csv").string(), "--lambdas", "abc"}).code == cli::kExitUsage);
  }

  TEST_CASE("simulate writes the true row") {
    const auto dir = qir::test::temp_dir("cli_sim");
    write_text(dir / "cfg.json",
               R"({"kind": "lowdim", "sample_sizes": [100], "ranges": [[0.5, 0.99]], "replications": 2,
                   "seed": 3, "tail_scaling": true})");
    const Run r = run_cli({"simulate", "--config", (dir / "cfg.json").string(), "--out", (dir / "out").string()});
    REQUIRE(r.code == cli::kExitOk);
    const std::string table = slurp(dir / "out" / "table1.tsv");
    const auto pos = table.find("\nTrue\t");
    REQUIRE(pos != std::string::npos);
    std::istringstream line(table.substr(pos + 1, table.find('\n', pos + 1) - pos - 1));
    std::vector<double> values;
    std::string cell;
    while (std::getline(line, cell, '\t')) {
      if (!cell.empty() && cell != "True") values.push_back(std::stod(cell));
    }
    REQUIRE(values.size() == 4);
    const double table1[] = {10.34, 11.83, 15.13, 18.84};
    for (int k = 0; k < 4; ++k) CHECK(std::abs(values[k] - table1[k]) < 0.01);

    write_text(dir / "bad.json", R"({"kind": "other"})");
    CHECK(run_cli({"simulate", "--config", (dir / "bad.json").string(), "--out", (dir / "o").string()}).code ==
          cli::kExitUsage);
  }
}
