#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "superres_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(SUPERRES_CLI) + " " + args + " > " + (kWork / "stdout.txt").string() +
                          " 2> " + (kWork / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string write_config(const std::string& name, const std::string& body) {
  const fs::path p = kWork / name;
  std::ofstream(p) << body;
  return p.string();
}

struct Workdir {
  Workdir() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
};

}  // namespace

TEST_CASE("simulate is byte reproducible and solve scores it") {
  Workdir w;
  const auto cfg = write_config("pair.json", R"({"schema": "superres-experiment/1", "kind": "separation",
    "seed": 11, "count": 4, "sweep": {"values": [0.2]}})");
  const std::string a = (kWork / "a").string(), b = (kWork / "b").string();
  REQUIRE(run("simulate --config " + cfg + " --out " + a) == 0);
  REQUIRE(run("simulate --config " + cfg + " --out " + b) == 0);
  CHECK(slurp(a + "/dataset.json") == slurp(b + "/dataset.json"));

  REQUIRE(run("solve " + a + "/dataset.json --config " + cfg + " --out " + a + "/s1") == 0);
  REQUIRE(run("solve " + a + "/dataset.json --config " + cfg + " --jobs 3 --out " + a + "/s3") == 0);
  CHECK(slurp(a + "/s1/run.json") == slurp(a + "/s3/run.json"));
  CHECK(fs::exists(a + "/s1/timing.json"));
  REQUIRE(run("solve " + a + "/dataset.json --unweighted --config " + cfg + " --out " + a + "/u") == 0);
  CHECK(slurp(a + "/u/run.json").find("\"weighted\": false") != std::string::npos);

  const auto other = write_config("other.json", R"({"schema": "superres-experiment/1", "kind": "central", "seed": 1})");
  CHECK(run("solve " + a + "/dataset.json --config " + other + " --out " + a + "/x") == 2);
}

TEST_CASE("sweep writes the csv") {
  Workdir w;
  const auto cfg = write_config("s.json", R"({"schema": "superres-experiment/1", "kind": "separation",
    "seed": 2, "count": 2, "sweep": {"values": [1.0, 2.0]}})");
  const std::string out = (kWork / "sw").string();
  REQUIRE(run("sweep --config " + cfg + " --out " + out) == 0);
  const std::string csv = slurp(out + "/sweep.csv");
  CHECK(csv.rfind("sweep_value,mean_f,std_f,n_images\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  REQUIRE(run("sweep --config " + cfg + " --out " + out + "2") == 0);
  CHECK(slurp(out + "2/sweep.csv") == csv);
  CHECK(slurp(out + "2/sweep.json") == slurp(out + "/sweep.json"));
}

TEST_CASE("certify exit codes") {
  Workdir w;
  CHECK(run("certify --seed 1 --out " + (kWork / "c").string()) == 0);
  CHECK(slurp(kWork / "c" / "certificate.json").find("\"valid\": true") != std::string::npos);
  const auto close = write_config("close.json", R"({"schema": "superres-experiment/1", "kind": "certify",
    "seed": 1, "locations": [0.5, 0.51]})");
  CHECK(run("certify --config " + close + " --out " + (kWork / "c2").string()) == 0);
  const auto rank = write_config("rank.json", R"({"schema": "superres-experiment/1", "kind": "certify",
    "seed": 1, "grid_n": 2, "locations": [0.3, 0.7]})");
  CHECK(run("certify --config " + rank + " --out " + (kWork / "c3").string()) == 3);
  CHECK(slurp(kWork / "c3" / "certificate.json").find("independence") != std::string::npos);
}

TEST_CASE("verify-lemmas") {
  Workdir w;
  CHECK(run("verify-lemmas --seed 1 --max-order 6 --out " + (kWork / "l").string()) == 0);
  const std::string table = slurp(kWork / "stdout.txt");
  CHECK(table.find("all checks passed") != std::string::npos);
  CHECK(table.find("FAIL") == std::string::npos);
  CHECK(run("verify-lemmas --seed 1 --max-order 0 --out " + (kWork / "l0").string()) == 0);
  CHECK(run("verify-lemmas --seed 1 --max-order 9") == 2);
}

TEST_CASE("demo2d writes point lists") {
  Workdir w;
  const auto cfg = write_config("d.json", R"({"schema": "superres-experiment/1", "kind": "demo2d",
    "seed": 5, "count": 2})");
  const std::string a = (kWork / "a").string(), b = (kWork / "b").string();
  REQUIRE(run("demo2d --config " + cfg + " --out " + a) == 0);
  REQUIRE(run("demo2d --config " + cfg + " --out " + b) == 0);
  CHECK(slurp(a + "/truth.csv") == slurp(b + "/truth.csv"));
  CHECK(slurp(a + "/estimate.csv") == slurp(b + "/estimate.csv"));
  CHECK(slurp(a + "/truth.csv").rfind("frame,x,y,amplitude\n", 0) == 0);
  const auto none = write_config("n.json", R"({"schema": "superres-experiment/1", "kind": "demo2d",
    "seed": 5, "count": 1, "sources": 0})");
  REQUIRE(run("demo2d --config " + none + " --out " + (kWork / "n").string()) == 0);
  CHECK(slurp(kWork / "n" / "estimate.csv") == "frame,x,y,mass\n");
}

TEST_CASE("validation errors exit with 2") {
  Workdir w;
  CHECK(run("sweep") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("solve") == 2);
  const auto bad = write_config("bad.json", R"({"schema": "superres-experiment/1", "kind": "central", "seed": 1, "extra": 0})");
  CHECK(run("simulate --config " + bad) == 2);
  const auto noseed = write_config("ns.json", R"({"schema": "superres-experiment/1", "kind": "central"})");
  CHECK(run("simulate --config " + noseed) == 2);
  const auto wrong = write_config("w.json", R"({"schema": "superres-experiment/1", "kind": "lemmas", "seed": 1})");
  CHECK(run("certify --config " + wrong) == 2);
  const auto syntax = write_config("syn.json", "{not json");
  CHECK(run("simulate --config " + syntax) == 2);
}

TEST_CASE("unwritable output is an I/O error") {
  Workdir w;
  std::ofstream(kWork / "file") << "x";
  CHECK(run("verify-lemmas --seed 1 --out " + (kWork / "file" / "sub").string()) == 1);
}
