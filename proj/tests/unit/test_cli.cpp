#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Runs the CLI inside a scratch directory, capturing both streams.
class CliSandbox {
 public:
  CliSandbox() : dir_(fs::temp_directory_path() / "gace_test_cli") {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~CliSandbox() { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  RunResult run(const std::string& args) const {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && GACE_NUM_THREADS=2 '" GACE_CLI_PATH
                            "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

 private:
  fs::path dir_;
};

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("usage and data errors map to exit codes") {
  const CliSandbox box;
  CHECK(box.run("synth --out data").exit_code == 2);
  CHECK(box.run("synth --seed 1 --out data --error-model Z").exit_code == 2);
  CHECK(box.run("synth --seed 1 --out data --channels 3").exit_code == 2);
  CHECK(box.run("no-such-command").exit_code == 2);
  const auto missing = box.run("eval --pred nowhere --gt nowhere");
  CHECK(missing.exit_code == 1);
  CHECK(contains(missing.err, "gace: error:"));
  CHECK(box.run("--help").exit_code == 0);
}

TEST_CASE("synth, eval, train, rescore, oracle and bench end to end") {
  const CliSandbox box;
  const auto synth = box.run("synth --seed 3 --frames 6 --out data");
  REQUIRE(synth.exit_code == 0);
  CHECK(contains(synth.err, "gace: resolved config"));
  CHECK(fs::exists(box.path("data/manifest.json")));
  const auto manifest = nlohmann::json::parse(slurp(box.path("data/manifest.json")));
  CHECK(manifest["frames"].size() == 6);

  // Same seed gives byte-identical output.
  REQUIRE(box.run("synth --seed 3 --frames 6 --out data2").exit_code == 0);
  CHECK(slurp(box.path("data/manifest.json")) == slurp(box.path("data2/manifest.json")));

  // Ground truth written as detections evaluates perfectly.
  fs::create_directories(box.path("perfect"));
  fs::copy(box.path("data"), box.path("perfect"), fs::copy_options::recursive);
  for (const auto& entry : fs::directory_iterator(box.path("perfect/labels"))) {
    std::ifstream in(entry.path());
    std::ofstream out(box.path("perfect/detections") / entry.path().filename(), std::ios::trunc);
    for (std::string line; std::getline(in, line);) {
      if (!line.empty()) out << line << " 1\n";
    }
  }
  const auto perfect = box.run("eval --pred perfect --gt data --report perfect.json");
  REQUIRE(perfect.exit_code == 0);
  const auto report = nlohmann::json::parse(slurp(box.path("perfect.json")));
  for (const auto& c : report["classes"]) {
    if (!c["no_ground_truth"].get<bool>()) CHECK(c["AP"].get<double>() == 1.0);
  }
  CHECK(report["mAP"].get<double>() == 1.0);

  CHECK(box.run("eval --pred data --gt data --iou-thr 0.7,0.5").exit_code == 2);
  const auto ev = box.run(
      "eval --pred data --gt data --r40 --curves-out curves --svg pr.svg "
      "--conditional-out cond");
  REQUIRE(ev.exit_code == 0);
  CHECK(contains(ev.out, "headline mAP (R40)"));
  CHECK(fs::exists(box.path("curves/Vehicle.csv")));
  CHECK(fs::exists(box.path("pr.svg")));
  CHECK(fs::exists(box.path("cond/Vehicle_length.csv")));

  const auto label = box.run("label --data data");
  REQUIRE(label.exit_code == 0);
  CHECK(contains(label.out, "labeled "));

  const auto tr = box.run("train --train data --out-model m.bin --epochs 1 --seed 4 --log log.tsv");
  REQUIRE(tr.exit_code == 0);
  CHECK(fs::exists(box.path("m.bin")));
  CHECK(contains(slurp(box.path("log.tsv")), "\t"));

  const auto rs = box.run("rescore --model m.bin --frames data --out rescored");
  REQUIRE(rs.exit_code == 0);
  CHECK(fs::exists(box.path("rescored/manifest.json")));
  CHECK(box.run("eval --pred rescored --gt data").exit_code == 0);

  const auto oracle = box.run("oracle --pred data --gt data");
  REQUIRE(oracle.exit_code == 0);
  CHECK(contains(oracle.out, "oracleAP"));

  const auto bench = box.run("bench --model m.bin --data data --repeats 1");
  REQUIRE(bench.exit_code == 0);
  for (const char* stage : {"points_in_box", "features", "neighbor_query", "H_I", "H_C", "H_F",
                            "overall"}) {
    CHECK(contains(bench.out, stage));
  }
  CHECK(contains(bench.out, "frames/s"));

  // A model trained on 5-channel data rejects a 4-channel dataset.
  REQUIRE(box.run("synth --seed 3 --frames 2 --out four --channels 4").exit_code == 0);
  const auto bad = box.run("rescore --model m.bin --frames four --out four_out");
  CHECK(bad.exit_code == 1);
  CHECK(contains(bad.err, "elongation"));
}
