#include <doctest.h>

#ifdef ATSO_CLI_PATH

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + ATSO_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("atso_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

const char* kTiny = R"({
  "T": 1,
  "generator": {"height": 12, "width": 12, "labeled": 2, "reference": 4, "test": 2,
                "radius_min": 2, "radius_max": 3, "margin": 3},
  "hyper": {"hidden": 4, "features": {"radii": [0, 1]},
            "initial": {"epochs": 4}, "student": {"epochs": 1}},
  "report": {"layouts": ["table1", "appendixA", "csv", "json"]}
})";

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit 1") {
    CHECK(run_cli("") == 1);
    CHECK(run_cli("frobnicate") == 1);
    CHECK(run_cli("run") == 1);
    CHECK(run_cli("--version") == 0);
  }

  TEST_CASE("invalid configs exit 1, unreadable ones exit 2") {
    const auto d = scratch_dir("bad");
    write(d / "bad.json", R"({"sweep": {"num_seeds": -1}})");
    CHECK(run_cli("run -c " + (d / "bad.json").string()) == 1);
    write(d / "unknown.json", R"({"colour": "red"})");
    CHECK(run_cli("sweep -c " + (d / "unknown.json").string()) == 1);
    CHECK(run_cli("run -c " + (d / "missing.json").string()) == 2);
  }

  TEST_CASE("run writes layouts and report renders them again") {
    const auto d = scratch_dir("run");
    write(d / "cfg.json", kTiny);
    REQUIRE(run_cli("run -c " + (d / "cfg.json").string() + " -o " + (d / "out").string()) == 0);
    for (const char* f : {"table1.csv", "appendixA.csv", "runs.csv", "aggregates.csv", "bundle.json",
                          "atso/generations.csv", "atso/cross_eval.csv", "atso/store/ledger.json"}) {
      CHECK_MESSAGE(fs::exists(d / "out" / f), f);
    }
    CHECK(run_cli("report -b " + (d / "out" / "bundle.json").string() + " -l table1 -o " +
                  (d / "again").string()) == 0);
    std::ifstream a(d / "out" / "table1.csv"), b(d / "again" / "table1.csv");
    const std::string sa((std::istreambuf_iterator<char>(a)), {}),
        sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
    CHECK(run_cli("report -b " + (d / "out" / "bundle.json").string() + " -l table3 -o " +
                  (d / "t3").string()) == 1);
  }

  TEST_CASE("gen and simulate write their artifacts") {
    const auto d = scratch_dir("gen");
    write(d / "cfg.json", kTiny);
    CHECK(run_cli("gen -c " + (d / "cfg.json").string() + " -o " + (d / "data").string()) == 0);
    CHECK(fs::exists(d / "data" / "manifest.json"));
    CHECK(run_cli("simulate -t 50 -o " + (d / "sim").string()) == 0);
    CHECK(fs::exists(d / "sim" / "propagation.csv"));
    CHECK(fs::exists(d / "sim" / "propagation_summary.json"));
  }
}

#endif
