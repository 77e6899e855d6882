// Drives the installed command-line binary end to end. The harness passes
// the binary location in the DDMC_CLI_PATH compile definition.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>

#include <json.hpp>

#include "ddmc/config.hpp"
#include "ddmc/dataset.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ddmc;

namespace {

const std::string kCli = DDMC_CLI_PATH;

int run_cli(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() /
                     ("ddmc_cli_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path tiny_config(const fs::path& dir) {
  const fs::path p = dir / "run.cfg";
  std::ofstream out(p);
  out << "k=2\nt=3\nm=2\nd_z=4\nhidden=12,6\nepochs=3\nbatch_size=16\n"
         "warmup_epochs=1\ne_steps_per_m=1\nt1=3\nt2=3\nper_combo=4\n";
  return p;
}

}  // namespace

TEST_CASE("gen writes a loadable container that matches direct generation") {
  const auto dir = fresh_dir("gen");
  const auto cfg_path = tiny_config(dir);
  CHECK(run_cli("gen --config " + cfg_path.string() + " --out " +
                (dir / "data").string()) == 0);

  const auto ds = load_dataset((dir / "data" / "dataset.mcds").string());
  const auto direct = dataset_from_config(load_config(cfg_path.string()));
  CHECK(ds.n == direct.n);
  CHECK(ds.images == direct.images);
  CHECK(ds.labelings == direct.labelings);
  CHECK(ds.clustering_names == direct.clustering_names);
  fs::remove_all(dir);
}

TEST_CASE("train writes the full artifact set with a sane manifest") {
  const auto dir = fresh_dir("train");
  const auto cfg_path = tiny_config(dir);
  const auto out = dir / "run";
  CHECK(run_cli("train --config " + cfg_path.string() + " --out " +
                out.string()) == 0);

  for (const char* name :
       {"checkpoint.dmck", "log.jsonl", "metrics.csv", "manifest.json"})
    CHECK(fs::exists(out / name));

  const json manifest = json::parse(slurp(out / "manifest.json"));
  CHECK(manifest["kind"] == "train");
  CHECK(manifest["dataset"]["n"] == 36);
  CHECK(manifest["pipelines"].size() == 2);
  CHECK(manifest["epochs_run"] == 3);
  for (const auto& [key, rel] : manifest["artifacts"].items())
    CHECK(fs::exists(out / rel.get<std::string>()));

  // Every log line is one JSON record; phases are E/M only.
  std::istringstream log(slurp(out / "log.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const json rec = json::parse(line);
    const std::string phase = rec["phase"];
    CHECK((phase == "E" || phase == "M"));
    ++lines;
  }
  CHECK(lines >= 3);

  const std::string metrics = slurp(out / "metrics.csv");
  CHECK(metrics.rfind("clustering,representation,nmi,ri\n", 0) == 0);
  fs::remove_all(dir);
}

TEST_CASE("identical train invocations produce byte-identical metrics") {
  const auto dir = fresh_dir("determinism");
  const auto cfg_path = tiny_config(dir);
  CHECK(run_cli("train --config " + cfg_path.string() + " --out " +
                (dir / "a").string()) == 0);
  CHECK(run_cli("train --config " + cfg_path.string() + " --out " +
                (dir / "b").string()) == 0);
  CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv"));
  CHECK(slurp(dir / "a" / "checkpoint.dmck") ==
        slurp(dir / "b" / "checkpoint.dmck"));
  fs::remove_all(dir);
}

TEST_CASE("eval reproduces the metrics of the run it loads") {
  const auto dir = fresh_dir("eval");
  const auto cfg_path = tiny_config(dir);
  const auto out = dir / "run";
  REQUIRE(run_cli("train --config " + cfg_path.string() + " --out " +
                  out.string()) == 0);
  CHECK(run_cli("eval --ckpt " + (out / "checkpoint.dmck").string() +
                " --out " + (dir / "scored").string()) == 0);
  CHECK(slurp(out / "metrics.csv") == slurp(dir / "scored" / "metrics.csv"));

  const std::string emb = slurp(dir / "scored" / "embeddings.csv");
  CHECK(emb.rfind("representation,row,cluster,z0,z1,z2,z3\n", 0) == 0);
  // Header plus one row per (representation, image).
  CHECK(std::count(emb.begin(), emb.end(), '\n') == 1 + 2 * 36);
  fs::remove_all(dir);
}

TEST_CASE("command-line overrides reach the run configuration") {
  const auto dir = fresh_dir("override");
  const auto cfg_path = tiny_config(dir);
  const auto out = dir / "run";
  CHECK(run_cli("train --config " + cfg_path.string() + " --out " +
                out.string() + " --epochs 1 --seed 9") == 0);
  const json manifest = json::parse(slurp(out / "manifest.json"));
  CHECK(manifest["epochs_run"] == 1);
  CHECK(manifest["seed"] == 9);
  const std::string text = manifest["config"]["text"];
  CHECK(text.find("epochs=1\n") != std::string::npos);
  CHECK(text.find("seed=9\n") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("usage and input failures exit with code 2") {
  const auto dir = fresh_dir("errors");
  const auto cfg_path = tiny_config(dir);
  CHECK(run_cli("train --config /does/not/exist.cfg --out " +
                (dir / "x").string()) == 2);
  CHECK(run_cli("train --config " + cfg_path.string()) == 2);  // no --out
  CHECK(run_cli("train --config " + cfg_path.string() + " --out " +
                (dir / "x").string() + " --tau 7") == 2);
  CHECK(run_cli("train --config " + cfg_path.string() + " --out " +
                (dir / "x").string() + " --epochs banana") == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("eval --out " + (dir / "x").string() +
                " --ckpt /does/not/exist.dmck") == 2);
  CHECK(run_cli("--help") == 0);
  fs::remove_all(dir);
}

TEST_CASE("sweep aggregates sorted per-cell summaries") {
  const auto dir = fresh_dir("sweep");
  const auto cfg_path = tiny_config(dir);
  const auto out = dir / "grid";
  CHECK(run_cli("sweep --config " + cfg_path.string() + " --out " +
                out.string() + " --k-grid 3,2 --t-grid 2 --epochs 1") == 0);

  CHECK(fs::exists(out / "k2_t2" / "metrics.csv"));
  CHECK(fs::exists(out / "k3_t2" / "metrics.csv"));

  const std::string csv = slurp(out / "sweep.csv");
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "k,t,clustering,nmi,ri");
  std::vector<std::string> rows;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(line);
  REQUIRE(rows.size() == 4);  // two cells, two clusterings each
  CHECK(rows[0].rfind("2,2,lower,", 0) == 0);
  CHECK(rows[1].rfind("2,2,upper,", 0) == 0);
  CHECK(rows[2].rfind("3,2,lower,", 0) == 0);
  CHECK(rows[3].rfind("3,2,upper,", 0) == 0);
  fs::remove_all(dir);
}

TEST_CASE("extra representations do not improve colored-shapes clustering") {
  // Two factors need two representations; a six-way split of the same data
  // has to divide the factors' evidence and should score no better.
  const auto dir = fresh_dir("sweep_k");
  const fs::path cfg_path = dir / "shapes.cfg";
  {
    // Full-size cells: at this seed the two-representation run separates
    // both factors perfectly, so the six-representation run can at most tie.
    std::ofstream out(cfg_path);
    out << "dataset=colored_shapes\nt1=2\nt2=2\nm=2\nseed=12\n";
  }
  const auto out = dir / "grid";
  REQUIRE(run_cli("sweep --config " + cfg_path.string() + " --out " +
                  out.string() + " --k-grid 2,6 --t-grid 2") == 0);

  std::map<std::pair<int, std::string>, double> nmi;
  std::istringstream in(slurp(out / "sweep.csv"));
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string k, t, name, score;
    std::getline(row, k, ',');
    std::getline(row, t, ',');
    std::getline(row, name, ',');
    std::getline(row, score, ',');
    nmi[{std::stoi(k), name}] = std::stod(score);
  }
  REQUIRE(nmi.size() == 4);
  CHECK(nmi[{2, "shape"}] >= nmi[{6, "shape"}] - 1e-12);
  CHECK(nmi[{2, "color"}] >= nmi[{6, "color"}] - 1e-12);
  fs::remove_all(dir);
}
