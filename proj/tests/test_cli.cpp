// Drives the contraclip executable end to end through the shell.
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <sstream>

#include "contraclip/io.hpp"

namespace fs = std::filesystem;
using namespace contraclip;

namespace {

struct Scratch {
  fs::path dir = fs::temp_directory_path() / ("contraclip_cli_" + std::to_string(::getpid()));
  Scratch() {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ignored;
    fs::remove_all(dir, ignored);
  }
};

const fs::path& workdir() {
  static const Scratch scratch;
  return scratch.dir;
}

std::string at(const std::string& name) { return (workdir() / name).string(); }

int run(const std::string& args) {
  const std::string cmd = std::string(CONTRACLIP_EXE) + " " + args + " >" + at("stdout.txt") + " 2>" +
                          at("stderr.txt");
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) { return io::read_file(path); }

// one synthetic setup shared by the cases below
void ensure_synth() {
  static bool done = false;
  if (done) return;
  REQUIRE(run("synth --out " + at("synth")) == 0);
  done = true;
}

std::string synth_inputs() { return "--bank " + at("synth/bank.json") + " --encoder " + at("synth/encoder.json"); }

}  // namespace

TEST_CASE("synth") {
  ensure_synth();
  const auto bank = io::load_dipole_bank_file(at("synth/bank.json"));
  CHECK(bank.size() == 4);
  CHECK(bank.embedding_dim == 32);
  const auto enc = io::encoder_from_json(io::parse(slurp(at("synth/encoder.json")), "encoder"));
  CHECK(enc.input_dim() == 16);
  CHECK(enc.output_dim() == 32);
  const auto truth = io::ground_truth_from_json(io::parse(slurp(at("synth/ground_truth.json")), "truth"));
  CHECK(truth.directions.cols() == 4);

  CHECK(run("synth --K 20 --latent-dim 16 --out " + at("bad")) == 1);
  CHECK(run("synth --encoder conv --out " + at("bad")) == 1);
  CHECK(run("synth --encoder mlp --K 3 --out " + at("synth_mlp")) == 0);
  CHECK(run("synth --out /proc/forbidden/x") == 2);
  CHECK(run("synth --no-such-flag") == 1);
  CHECK(run("--help") == 0);
}

TEST_CASE("train exit codes") {
  ensure_synth();
  CHECK(run("train " + synth_inputs() + " --out " + at("run_default") + " --no-timing") == 0);
  const auto report = io::parse(slurp(at("run_default/report.json")), "report");
  CHECK(report["stalled"] == false);
  CHECK(report["iterations_run"] == 2000);
  CHECK(slurp(at("stdout.txt")) == slurp(at("run_default/report.json")));

  CHECK(run("train " + synth_inputs() + " --beta 0.05 --out " + at("run_collapse")) == 3);
  CHECK(io::parse(slurp(at("run_collapse/report.json")), "report")["stalled"] == true);

  CHECK(run("train --bank " + at("missing.json") + " --encoder " + at("synth/encoder.json")) == 2);
  CHECK(run("train " + synth_inputs() + " --iterations 0 --out " + at("run_bad")) == 1);
  CHECK(run("train " + synth_inputs() + " --mode sideways --out " + at("run_bad")) == 1);
  CHECK(run("train --bank " + at("synth/bank.json")) == 1);

  io::write_file(at("garbage.json"), "{ not json");
  CHECK(run("train --bank " + at("garbage.json") + " --encoder " + at("synth/encoder.json")) == 1);
  // a bank for another encoder
  REQUIRE(run("synth --embedding-dim 8 --out " + at("synth_narrow")) == 0);
  CHECK(run("train --bank " + at("synth_narrow/bank.json") + " --encoder " + at("synth/encoder.json") +
            " --out " + at("run_bad")) == 1);
}

TEST_CASE("train determinism and resume") {
  ensure_synth();
  const std::string common = "train " + synth_inputs() + " --iterations 120 --no-timing --seed 9";
  REQUIRE(run(common + " --out " + at("det_a")) == 0);
  REQUIRE(run(common + " --out " + at("det_b")) == 0);
  CHECK(slurp(at("det_a/checkpoint.json")) == slurp(at("det_b/checkpoint.json")));
  CHECK(slurp(at("det_a/report.json")) == slurp(at("det_b/report.json")));

  REQUIRE(run("train " + synth_inputs() + " --iterations 50 --no-timing --seed 9 --out " + at("det_half")) == 0);
  REQUIRE(run(common + " --resume " + at("det_half/checkpoint.json") + " --out " + at("det_resumed")) == 0);
  CHECK(slurp(at("det_resumed/checkpoint.json")) == slurp(at("det_a/checkpoint.json")));

  CHECK(run(common + " --resume " + at("nowhere.json") + " --out " + at("det_bad")) == 2);
}

TEST_CASE("config file with flag precedence") {
  ensure_synth();
  io::write_file(at("train.ini"), "[train]\niterations=30\nseed=4\nbatch-size=8\n");
  REQUIRE(run("--config " + at("train.ini") + " train " + synth_inputs() + " --no-timing --out " + at("cfg_file")) ==
          0);
  auto ckpt = io::parse(slurp(at("cfg_file/checkpoint.json")), "checkpoint");
  CHECK(ckpt["iteration"] == 30);
  CHECK(ckpt["config"]["seed"] == 4);
  CHECK(ckpt["config"]["batch_size"] == 8);

  REQUIRE(run("--config " + at("train.ini") + " train " + synth_inputs() + " --iterations 40 --no-timing --out " +
              at("cfg_flag")) == 0);
  ckpt = io::parse(slurp(at("cfg_flag/checkpoint.json")), "checkpoint");
  CHECK(ckpt["iteration"] == 40);
  CHECK(ckpt["config"]["seed"] == 4);
  CHECK(run("--config " + at("absent.ini") + " train " + synth_inputs()) != 0);
}

TEST_CASE("traverse") {
  ensure_synth();
  REQUIRE(run("train " + synth_inputs() + " --iterations 200 --no-timing --out " + at("trav_run")) == 0);
  const std::string base = "traverse --checkpoint " + at("trav_run/checkpoint.json") + " " + synth_inputs();
  for (auto [length, steps] : {std::pair{"10.8", 24}, std::pair{"19.2", 42}, std::pair{"28.8", 64}}) {
    CAPTURE(length);
    const std::string out = at(std::string("trav_") + length);
    REQUIRE(run(base + " --length " + length + " --epsilon 0.45 --count 3 --out " + out) == 0);
    const auto metrics = io::parse(slurp(out + "/metrics.json"), "metrics");
    CHECK(metrics["steps"] == steps);
    CHECK(metrics["paths"].size() == 12);
    std::istringstream lines(slurp(out + "/paths.jsonl"));
    std::string line;
    std::size_t rows = 0;
    while (std::getline(lines, line)) {
      CHECK(io::validate_path_line(line).empty());
      ++rows;
    }
    std::size_t expected = 0;
    for (const auto& p : metrics["paths"]) expected += p["completed_steps"].get<std::size_t>() + 1;
    CHECK(rows == expected);
  }

  REQUIRE(run(base + " --steps 5 --count 2 --both-signs --path 1 --out " + at("trav_both")) == 0);
  const auto both = io::parse(slurp(at("trav_both/metrics.json")), "metrics");
  REQUIRE(both["paths"].size() == 4);
  CHECK(both["paths"][0]["path_id"] == "d2+0");
  CHECK(both["paths"][2]["path_id"] == "d2-0");

  // start far out where every path is flat: truncated output, flagged, still exit 0
  std::string far = "[[1e3";
  for (int i = 1; i < 16; ++i) far += ", 1e3";
  far += "]]";
  io::write_file(at("far.json"), far);
  REQUIRE(run(base + " --latents " + at("far.json") + " --out " + at("trav_far")) == 0);
  const auto stalled = io::parse(slurp(at("trav_far/metrics.json")), "metrics");
  CHECK(stalled["stalled_paths"] == 4);
  CHECK(stalled["paths"][0]["completed_steps"] == 0);

  CHECK(run(base + " --length 0.1 --out " + at("trav_bad")) == 1);
  CHECK(run(base + " --path 7 --out " + at("trav_bad")) == 1);
  CHECK(run("traverse --checkpoint " + at("missing.json")) == 2);
}

TEST_CASE("field-map") {
  ensure_synth();
  const std::string base = "field-map --bank " + at("synth/bank.json");
  REQUIRE(run(base + " --out " + at("fm_a")) == 0);
  REQUIRE(run(base + " --out " + at("fm_b")) == 0);
  const std::string csv = slurp(at("fm_a/field.csv"));
  CHECK(csv == slurp(at("fm_b/field.csv")));
  CHECK(slurp(at("fm_a/field.svg")) == slurp(at("fm_b/field.svg")));
  CHECK(csv.find("\npole_plus,,,") != std::string::npos);

  CHECK(run(base + " --resolution 1 --out " + at("fm_bad")) == 1);
  CHECK(run(base + " --dipole nope --out " + at("fm_bad")) == 1);
  std::string slice = "{\"origin\": [";
  for (int i = 0; i < 32; ++i) slice += i ? ", 0" : "0";
  slice += "], \"u\": [";
  for (int i = 0; i < 32; ++i) slice += i ? ", 0" : "1";
  slice += "], \"v\": [";
  for (int i = 0; i < 32; ++i) slice += i ? ", 0" : "2";
  slice += "]}";
  io::write_file(at("slice.json"), slice);
  CHECK(run(base + " --slice " + at("slice.json") + " --out " + at("fm_bad")) == 1);
}

TEST_CASE("check-grad") {
  CHECK(run("check-grad") == 0);
  const auto report = io::parse(slurp(at("stdout.txt")), "report");
  CHECK(report["max_relative_error"].get<double>() < 1e-5);
  for (const char* mode : {"linear-difference", "single-prompt-plus", "single-prompt-minus"}) {
    CHECK(run(std::string("check-grad --mode ") + mode) == 0);
  }
  CHECK(run("check-grad --encoder linear") == 0);
  CHECK(run("check-grad --freeze-scales") == 0);
  CHECK(run("check-grad --fd-step 0") == 1);
  CHECK(run("check-grad --corrupt-gradient") == 4);
}
