#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fafed/cli.hpp"
#include "fafed/record_io.hpp"

using namespace fafed;
namespace fs = std::filesystem;

namespace {

struct Invocation {
  int code = -1;
  std::string out;
  std::string err;
};

Invocation call(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Invocation r;
  r.code = cli_main(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("fafed_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("run writes a csv to stdout") {
    const Invocation r = call({"run", "--algo", "fedavg", "--t", "20", "--eta", "0.05"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.rfind(kCsvHeader, 0) == 0);
    CHECK(count(r.out, "\n") == 21);
    CHECK(r.err.find("fedavg") != std::string::npos);
  }

  TEST_CASE("run writes a file and flags override the config") {
    TempDir d;
    spit(d.file("cfg.ini"), "[algorithm]\nname = fafed\nq = 4\n[run]\ntotal_steps = 50\n");
    const Invocation r = call({"run", "--config", d.file("cfg.ini"), "--q", "5", "--out",
                               d.file("a.csv"), "--record-every", "10"});
    REQUIRE(r.code == kExitOk);
    CHECK(r.out.empty());
    const RunRecord rec = read_csv_file(d.file("a.csv"));
    REQUIRE(rec.rows.size() == 5);
    CHECK(rec.rows.back().t == 50);
    // syncs at multiples of 5 before t = 50
    CHECK(rec.rows.back().comms == 1 + 9);
  }

  TEST_CASE("invalid q is rejected") {
    const Invocation r = call({"run", "--q", "0"});
    CHECK(r.code == kExitInvalid);
    CHECK(r.err.find("q must be ≥ 1") != std::string::npos);
  }

  TEST_CASE("unknown flag and missing subcommand fail") {
    CHECK(call({"run", "--gamma", "1"}).code == kExitInvalid);
    CHECK(call({}).code == kExitInvalid);
  }

  TEST_CASE("divergence has its own exit code") {
    const Invocation r = call({"run", "--algo", "fedavg", "--eta", "5", "--t", "200"});
    CHECK(r.code == kExitDiverged);
    CHECK(r.err.find("diverged at t=") != std::string::npos);
  }

  TEST_CASE("same seed gives identical output across workers") {
    const Invocation a = call({"run", "--t", "60", "--seed", "3", "--workers", "1"});
    const Invocation b = call({"run", "--t", "60", "--seed", "3", "--workers", "4"});
    REQUIRE(a.code == kExitOk);
    CHECK(a.out == b.out);
  }

  TEST_CASE("counterexample table") {
    const Invocation r = call({"counterexample"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("t,x_bar,predicted_drift,observed_drift,abs_diff") == 0);
    CHECK(r.out.find("PASS") != std::string::npos);
    CHECK(r.out.find("9.8585786") != std::string::npos);
  }

  TEST_CASE("verify an audit trace") {
    TempDir d;
    const Invocation r = call({"run", "--problem", "logistic", "--t", "80", "--q", "4", "--audit",
                               d.file("trace.json"), "--out", d.file("run.csv")});
    REQUIRE(r.code == kExitOk);
    const Invocation v = call({"verify", d.file("trace.json")});
    CHECK(v.code == kExitOk);
    CHECK(v.out.find("FAIL") == std::string::npos);
    CHECK(count(v.out, "PASS ") >= 5);
    CHECK(call({"verify", d.file("missing.json")}).code == kExitInvalid);
  }

  TEST_CASE("grid picks the lowest final loss") {
    const Invocation r = call({"grid", "--algo", "fedavg", "--t", "100", "--grid",
                               "eta=0.001,0.05"});
    REQUIRE(r.code == kExitOk);
    CHECK(r.err.find("* eta=0.05") != std::string::npos);
    CHECK(call({"grid", "--grid", "eta"}).code == kExitInvalid);
    CHECK(call({"grid", "--grid", "gamma=1"}).code == kExitInvalid);
  }

  TEST_CASE("plot") {
    TempDir d;
    std::vector<std::string> csvs;
    for (const char* algo : {"fafed", "naive-adaptive", "fedavg", "fedadam"}) {
      const std::string p = d.file(std::string(algo) + ".csv");
      REQUIRE(call({"run", "--algo", algo, "--t", "40", "--out", p}).code != kExitInvalid);
      csvs.push_back(p);
    }
    std::vector<std::string> args = {"plot"};
    args.insert(args.end(), csvs.begin(), csvs.end());
    args.insert(args.end(), {"--x", "samples", "--log-y", "--out", d.file("a.svg")});
    REQUIRE(call(args).code == kExitOk);
    args.back() = d.file("b.svg");
    REQUIRE(call(args).code == kExitOk);
    const std::string svg = slurp(d.file("a.svg"));
    CHECK(svg == slurp(d.file("b.svg")));
    CHECK(count(svg, "<polyline") == 4);
    for (const char* algo : {"fafed", "naive-adaptive", "fedavg", "fedadam"})
      CHECK(svg.find(std::string(">") + algo + "<") != std::string::npos);

    const Invocation missing =
        call({"plot", csvs[0], "--y", "accuracy", "--out", d.file("c.svg")});
    CHECK(missing.code == kExitInvalid);
    CHECK(missing.err.find("accuracy") != std::string::npos);
    CHECK_FALSE(fs::exists(d.file("c.svg")));

    spit(d.file("empty.csv"), std::string(kCsvHeader) + "\n");
    CHECK(call({"plot", d.file("empty.csv"), "--out", d.file("d.svg")}).code == kExitInvalid);
  }

  TEST_CASE("compare") {
    TempDir d;
    REQUIRE(call({"run", "--algo", "fedavg", "--eta", "0.05", "--t", "400", "--out",
                  d.file("x.csv")})
                .code == kExitOk);
    fs::copy_file(d.file("x.csv"), d.file("y.csv"));
    const Invocation r = call({"compare", d.file("x.csv"), d.file("y.csv"), "--threshold", "1"});
    REQUIRE(r.code == kExitOk);
    std::istringstream lines(r.out);
    std::string header, a, b;
    std::getline(lines, header);
    std::getline(lines, a);
    std::getline(lines, b);
    CHECK(a.substr(1) == b.substr(1));
    const Invocation far = call({"compare", d.file("x.csv"), "--threshold", "1e-30"});
    CHECK(far.out.find("n/a") != std::string::npos);
    CHECK(call({"compare", d.file("x.csv"), "--threshold", "0"}).code == kExitInvalid);
    CHECK(call({"compare", d.file("x.csv"), "--threshold", "-1"}).code == kExitInvalid);
  }

  TEST_CASE("problem describe") {
    const Invocation r = call({"problem", "describe", "--problem", "counterexample"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("counterexample") != std::string::npos);
    CHECK(call({"problem", "describe", "--problem", "mnist"}).code == kExitInvalid);
  }
}
