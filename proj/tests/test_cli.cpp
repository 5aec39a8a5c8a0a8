#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kDir = fs::temp_directory_path() / "brenier_test_cli";

struct Run {
  int code;
  std::string output;
};

Run run(const std::string& args) {
  const fs::path log = kDir / "last_output.txt";
  const std::string cmd =
      std::string("\"") + BRENIER_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

long lines(const std::string& s) { return std::count(s.begin(), s.end(), '\n'); }

const char* kConfig = R"({
  "kappa": 0.1, "gamma": 0.1, "lr_gen": 0.001, "lr_disc": 0.001,
  "batch_size": 50, "epochs": 2, "penalty_samples": 10, "seed": 1,
  "generator_widths": [2, 8, 8, 1], "discriminator_widths": [2, 16, 1],
  "potential_init": "fan_in", "monitor_points": 50, "monitor_scan_points": 10,
  "sample_count": 300, "data": {"kind": "gmm", "n": 200}
})";

fs::path trained() {
  static const fs::path out = [] {
    fs::remove_all(kDir);
    fs::create_directories(kDir);
    std::ofstream(kDir / "config.json") << kConfig;
    const fs::path o = kDir / "run";
    const Run r = run("train --config \"" + (kDir / "config.json").string() + "\" --out \"" +
                      o.string() + "\"");
    REQUIRE_MESSAGE(r.code == 0, r.output);
    return o;
  }();
  return out;
}

}  // namespace

TEST_CASE("train writes its artifacts") {
  const fs::path out = trained();
  CHECK(fs::exists(out / "checkpoint_final.bin"));
  const std::string metrics = slurp(out / "metrics.csv");
  CHECK(metrics.rfind("epoch,gan_loss,penalty,disc_loss,disc_mean_on_fake,min_eig_probe,"
                      "wallclock_s\n", 0) == 0);
  CHECK(lines(metrics) == 3);
  const std::string samples = slurp(out / "samples.csv");
  CHECK(lines(samples) == 300);
}

TEST_CASE("train reports a missing config field") {
  trained();
  std::string text = kConfig;
  text.replace(text.find("\"kappa\": 0.1,"), 13, "");
  std::ofstream(kDir / "nokappa.json") << text;
  const Run r = run("train --config \"" + (kDir / "nokappa.json").string() + "\" --out \"" +
                    (kDir / "nokappa").string() + "\"");
  CHECK(r.code == 2);
  CHECK(r.output.find("kappa") != std::string::npos);

  const Run missing = run("train --config \"" + (kDir / "nothere.json").string() +
                          "\" --out \"" + (kDir / "x").string() + "\"");
  CHECK(missing.code == 3);
  CHECK(run("train --out x").code == 2);
  CHECK(run("frobnicate").code == 2);
}

TEST_CASE("train with zero epochs") {
  trained();
  const fs::path o = kDir / "zero";
  const Run r = run("train --config \"" + (kDir / "config.json").string() + "\" --out \"" +
                    o.string() + "\" --epochs 0");
  REQUIRE(r.code == 0);
  CHECK(lines(slurp(o / "metrics.csv")) == 1);
  CHECK(fs::exists(o / "checkpoint_final.bin"));
}

TEST_CASE("generate") {
  const fs::path ck = trained() / "checkpoint_final.bin";
  const fs::path a = kDir / "g1.csv", b = kDir / "g2.csv", c = kDir / "g3.csv";
  REQUIRE(run("generate --checkpoint \"" + ck.string() + "\" --n 5 --out \"" + a.string() +
              "\"").code == 0);
  REQUIRE(run("generate --checkpoint \"" + ck.string() + "\" --n 5 --out \"" + b.string() +
              "\"").code == 0);
  REQUIRE(run("generate --checkpoint \"" + ck.string() + "\" --n 5 --seed 9 --out \"" +
              c.string() + "\"").code == 0);
  const std::string text = slurp(a);
  CHECK(lines(text) == 5);
  CHECK(std::count(text.begin(), text.end(), ',') == 5);
  CHECK(text == slurp(b));
  CHECK(text != slurp(c));

  std::ofstream(kDir / "corrupt.bin") << "{\"version\":1}\ngarbage";
  const Run bad = run("generate --checkpoint \"" + (kDir / "corrupt.bin").string() +
                      "\" --n 5 --out \"" + (kDir / "g4.csv").string() + "\"");
  CHECK(bad.code != 0);
  CHECK(run("generate --checkpoint \"" + ck.string() + "\" --n 0 --out \"" +
            (kDir / "g5.csv").string() + "\"").code == 2);
}

TEST_CASE("verify-convexity") {
  const fs::path ck = trained() / "checkpoint_final.bin";
  const Run r = run("verify-convexity --checkpoint \"" + ck.string() + "\" --points 50");
  CHECK((r.code == 0 || r.code == 1));
  CHECK(r.output.find("min_eigenvalue") != std::string::npos);
  CHECK(r.output.find(r.code == 0 ? "certified" : "not certified") != std::string::npos);

  const Run never = run("verify-convexity --checkpoint \"" + ck.string() +
                        "\" --points 50 --kappa 1e9");
  CHECK(never.code == 1);
  CHECK(never.output.find("not certified") != std::string::npos);
  const Run always = run("verify-convexity --checkpoint \"" + ck.string() +
                         "\" --points 50 --kappa -1e9");
  CHECK(always.code == 0);

  CHECK(run("verify-convexity --checkpoint \"" + ck.string() + "\" --points 0").code == 2);
}

TEST_CASE("probe") {
  const fs::path out = trained();
  const fs::path eval = out / "eval.csv";
  const Run r = run("probe --checkpoint \"" + (out / "checkpoint_final.bin").string() +
                    "\" --out \"" + eval.string() + "\" --dump-potential-grid 10");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const std::string text = slurp(eval);
  CHECK(text.rfind("metric,value\n", 0) == 0);
  for (const char* key : {"disc_mean_real,", "disc_mean_fake,", "js_divergence,",
                          "js_divergence_double_h,", "penalty_final,",
                          "penalty_zero_fraction,"}) {
    CHECK(text.find(key) != std::string::npos);
  }
  const std::string grid = slurp(out / "potential_grid.csv");
  CHECK(grid.rfind("x,y,phi\n", 0) == 0);
  CHECK(lines(grid) == 101);
}
