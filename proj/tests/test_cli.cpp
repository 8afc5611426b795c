#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run cli(const std::string& args, const fs::path& dir) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd =
      std::string(PRUNEGRAPH_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

nlohmann::json json_file(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

// Writes the six zoo models once per test binary run.
const fs::path& zoo_dir() {
  static const fs::path dir = [] {
    auto d = testutil::scratch_dir("cli_zoo");
    REQUIRE(cli("zoo --out " + d.string(), d).code == 0);
    return d;
  }();
  return dir;
}

std::string model(const std::string& name) {
  return "--graph " + (zoo_dir() / (name + ".json")).string() + " --weights " + (zoo_dir() / (name + ".bin")).string();
}

}  // namespace

TEST_CASE("cli zoo writes six model pairs") {
  std::size_t json = 0, bin = 0;
  for (const auto& e : fs::directory_iterator(zoo_dir())) {
    json += e.path().extension() == ".json";
    bin += e.path().extension() == ".bin";
  }
  CHECK(json == 6);
  CHECK(bin == 6);
}

TEST_CASE("cli analyze reports groups per mode") {
  const auto dir = testutil::scratch_dir("cli_analyze");
  auto r = cli("analyze " + model("simple") + " --mode component-aware --out " + dir.string(), dir);
  REQUIRE(r.code == 0);
  auto j = json_file(dir / "analysis.json");
  CHECK(j["cross"] == 2);
  CHECK(j["groups"] == 6);
  CHECK(j["group_list"].size() == 6);

  r = cli("analyze --graph " + (zoo_dir() / "simple.json").string() + " --mode vanilla --out " + dir.string() +
              " --dump-trace " + (dir / "trace.json").string(),
          dir);
  REQUIRE(r.code == 0);
  j = json_file(dir / "analysis.json");
  CHECK(j["groups"] == 4);
  CHECK(j["cross"] == 0);
  CHECK(json_file(dir / "trace.json").is_array());
}

TEST_CASE("cli exit codes") {
  const auto dir = testutil::scratch_dir("cli_codes");
  auto r = cli("analyze --graph " + (dir / "missing.json").string() + " --out " + dir.string(), dir);
  CHECK(r.code == 1);
  CHECK_FALSE(r.err.empty());

  CHECK(cli("prune " + model("simple") + " --sparsity 0.2 --bogus", dir).code == 2);
  CHECK(cli("prune " + model("simple"), dir).code == 2);
  CHECK(cli("prune " + model("simple") + " --sparsity 1.5 --out " + dir.string(), dir).code == 2);
  CHECK(cli("analyze " + model("simple") + " --mode sideways --out " + dir.string(), dir).code == 2);

  r = cli("prune " + model("simple") + " --sparsity 0.99 --strict --out " + dir.string(), dir);
  CHECK(r.code == 3);
  CHECK(r.err.find("warning") != std::string::npos);
  CHECK(cli("prune " + model("simple") + " --sparsity 0.99 --out " + dir.string(), dir).code == 0);
}

TEST_CASE("cli prune at zero then verify gives distance zero") {
  const auto dir = testutil::scratch_dir("cli_identity");
  REQUIRE(cli("prune " + model("complex_cnn") + " --sparsity 0 --out " + dir.string(), dir).code == 0);
  const auto r = cli("verify " + model("complex_cnn") + " --graph2 " + (dir / "pruned.json").string() +
                         " --weights2 " + (dir / "pruned.bin").string(),
                     dir);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("functional distance over 10 inputs: 0\n") != std::string::npos);
}

TEST_CASE("cli verify rejects corrupted dims") {
  const auto dir = testutil::scratch_dir("cli_corrupt");
  auto g = json_file(zoo_dir() / "simple.json");
  for (auto& n : g["nodes"])
    if (n["id"] == "b.fc1") n["attrs"]["in_dim"] = 21;
  std::ofstream(dir / "bad.json") << g.dump();
  const auto r = cli("verify " + model("simple") + " --graph2 " + (dir / "bad.json").string() + " --weights2 " +
                         (zoo_dir() / "simple.bin").string(),
                     dir);
  CHECK(r.code == 2);
}

TEST_CASE("cli prune protects the encoder and is reproducible") {
  const auto d1 = testutil::scratch_dir("cli_protect1");
  const auto d2 = testutil::scratch_dir("cli_protect2");
  const std::string args = "prune " + model("tdmpc_style") + " --sparsity 0.4 --mode component-aware --protect a";
  REQUIRE(cli(args + " --out " + d1.string(), d1).code == 0);
  REQUIRE(cli(args + " --out " + d2.string(), d2).code == 0);
  const auto rep = json_file(d1 / "sparsity_report.json");
  CHECK(rep["params_after"] < rep["params_before"]);
  for (const auto& [layer, before] : rep["widths_before"].items())
    if (layer.rfind("a.", 0) == 0) CHECK(rep["widths_after"][layer] == before);
  CHECK(slurp(d1 / "pruned.bin") == slurp(d2 / "pruned.bin"));
  CHECK(slurp(d1 / "pruned.json") == slurp(d2 / "pruned.json"));
  CHECK(slurp(d1 / "sparsity_report.json") == slurp(d2 / "sparsity_report.json"));
}

TEST_CASE("cli sweep writes the level grid for both modes") {
  const auto dir = testutil::scratch_dir("cli_sweep");
  auto r = cli("sweep --arch simple --epochs 1 --levels 0.05:0.80:0.05 --modes both --plot --out " + dir.string(), dir);
  REQUIRE(r.code == 0);
  const auto csv = slurp(dir / "sweep.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 33);
  CHECK(csv.find("0.8000,component-aware") != std::string::npos);
  CHECK(slurp(dir / "sweep.svg").rfind("<svg", 0) == 0);

  r = cli("sweep " + model("simple") + " --levels 0 --out " + dir.string(), dir);
  REQUIRE(r.code == 0);
  const auto j = json_file(dir / "sweep.json");
  REQUIRE(j.size() == 2);
  CHECK(j[0]["metric"] == 0.0);
  CHECK(j[1]["metric"] == 0.0);
}

TEST_CASE("cli report writes the metrics table") {
  const auto dir = testutil::scratch_dir("cli_report");
  REQUIRE(cli("report --out " + dir.string(), dir).code == 0);
  const auto csv = slurp(dir / "metrics.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  CHECK(fs::exists(dir / "metrics.md"));
}
