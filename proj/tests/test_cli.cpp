#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string bin() {
  const char* b = std::getenv("STYLECAL_BIN");
  REQUIRE_MESSAGE(b != nullptr, "STYLECAL_BIN must point at the CLI binary");
  return b;
}

struct RunResult {
  int code = -1;
  std::string output;  // stdout + stderr
};

RunResult run(const std::string& args, const std::string& env = "") {
  std::string cmd = env + " " + bin() + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe))
    r.output.append(buf, n);
  int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("stylecal_cli_" + name);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

const char* kSmallConfig = R"({
  "seed": 3,
  "model": "ctvae",
  "n_train": 200,
  "n_test": 50,
  "env": {"horizon": 8},
  "labeling": [{"kind": "direction", "classes": 3}],
  "sizes": {"enc_hidden": 6, "dec_hidden": 6, "dec_mlp": 6, "label_hidden": 6, "dyn_hidden": [8]},
  "training": {"n_dynamics": 20, "n_label": 20, "n_policy": 15, "n_collect": 8},
  "eval": {"n_rollouts": 50, "seeds": [0]}
})";

}  // namespace

TEST_CASE("missing subcommand and bad flags are usage errors") {
  CHECK(run("").code == 2);
  CHECK(run("no-such-command").code == 2);
  CHECK(run("gen-data").code == 2);  // --out required
}

TEST_CASE("config errors exit with code 2 and name the offending key") {
  TempDir d("badcfg");
  write(d.path / "bad.json", R"({"model": "ctvae", "typo_key": 1})");
  RunResult r = run("gen-data --config " + (d.path / "bad.json").string() + " --out " +
                    (d.path / "out").string());
  CHECK(r.code == 2);
  CHECK(r.output.find("typo_key") != std::string::npos);

  write(d.path / "bad2.json", R"({"model": "vae"})");
  RunResult r2 = run("gen-data --config " + (d.path / "bad2.json").string() + " --out " +
                     (d.path / "out").string());
  CHECK(r2.code == 2);

  write(d.path / "bad3.json", R"({"n_train": 0})");
  RunResult r3 = run("gen-data --config " + (d.path / "bad3.json").string() + " --out " +
                     (d.path / "out").string());
  CHECK(r3.code == 2);
  CHECK(r3.output.find("n_train") != std::string::npos);
}

TEST_CASE("missing input files exit with code 4") {
  TempDir d("missing");
  write(d.path / "cfg.json", kSmallConfig);
  RunResult r = run("fit-labels --config " + (d.path / "cfg.json").string() +
                    " --data /no/such/file.jsonl --out " + (d.path / "out").string());
  CHECK(r.code == 4);
}

TEST_CASE("the full pipeline runs and reruns bit-identically") {
  TempDir d("pipeline");
  fs::path cfg = d.path / "cfg.json";
  write(cfg, kSmallConfig);
  std::string c = " --config " + cfg.string();

  RunResult gen = run("gen-data" + c + " --out " + (d.path / "data").string());
  REQUIRE_MESSAGE(gen.code == 0, gen.output);
  RunResult gen2 = run("gen-data" + c + " --out " + (d.path / "data2").string());
  REQUIRE(gen2.code == 0);
  CHECK(slurp(d.path / "data/train.jsonl") == slurp(d.path / "data2/train.jsonl"));
  CHECK(slurp(d.path / "data/test.jsonl") == slurp(d.path / "data2/test.jsonl"));

  RunResult fit = run("fit-labels" + c + " --data " + (d.path / "data/train.jsonl").string() +
                      " --out " + (d.path / "labels").string());
  REQUIRE_MESSAGE(fit.code == 0, fit.output);
  CHECK(fs::exists(d.path / "labels/lfs.json"));

  std::string train_args = "train" + c + " --data " +
                           (d.path / "data/train.jsonl").string() + " --lfs " +
                           (d.path / "labels/lfs.json").string();
  RunResult tr = run(train_args + " --out " + (d.path / "run").string());
  REQUIRE_MESSAGE(tr.code == 0, tr.output);
  RunResult tr2 = run(train_args + " --out " + (d.path / "run2").string());
  REQUIRE(tr2.code == 0);
  CHECK(slurp(d.path / "run/checkpoint.bin") == slurp(d.path / "run2/checkpoint.bin"));
  CHECK(slurp(d.path / "run/metrics.jsonl") == slurp(d.path / "run2/metrics.jsonl"));
  CHECK(fs::exists(d.path / "run/wall_clock.txt"));
  // the resolved config is echoed before work starts
  CHECK(slurp(d.path / "run/config.resolved.json").find("\"model\"") != std::string::npos);

  std::string eval_args = "eval" + c + " --checkpoint " +
                          (d.path / "run/checkpoint.bin").string() + " --data " +
                          (d.path / "data/test.jsonl").string() + " --lfs " +
                          (d.path / "labels/lfs.json").string();
  RunResult ev = run(eval_args + " --out " + (d.path / "eval").string());
  REQUIRE_MESSAGE(ev.code == 0, ev.output);
  RunResult ev2 = run(eval_args + " --out " + (d.path / "eval2").string());
  REQUIRE(ev2.code == 0);
  CHECK(slurp(d.path / "eval/report.jsonl") == slurp(d.path / "eval2/report.jsonl"));
  CHECK(fs::exists(d.path / "eval/report.csv"));
  CHECK(fs::exists(d.path / "eval/report.txt"));

  RunResult ro = run("rollout" + c + " --checkpoint " +
                     (d.path / "run/checkpoint.bin").string() + " --data " +
                     (d.path / "data/test.jsonl").string() + " --lfs " +
                     (d.path / "labels/lfs.json").string() + " --label 1 --n 5 --out " +
                     (d.path / "roll").string());
  REQUIRE_MESSAGE(ro.code == 0, ro.output);
  CHECK(fs::exists(d.path / "roll/rollouts.jsonl"));

  RunResult pl = run("plot" + c + " --data " + (d.path / "roll/rollouts.jsonl").string() +
                     " --lfs " + (d.path / "labels/lfs.json").string() + " --lf 0 --out " +
                     (d.path / "plots").string());
  REQUIRE_MESSAGE(pl.code == 0, pl.output);
  CHECK(slurp(d.path / "plots/trajectories.svg").find("<svg") == 0);
}

TEST_CASE("seed precedence: flag beats environment beats config") {
  TempDir d("seeds");
  write(d.path / "cfg.json", kSmallConfig);  // seed 3
  std::string c = " --config " + (d.path / "cfg.json").string();

  RunResult env_run = run("gen-data" + c + " --out " + (d.path / "env").string(),
                          "STYLECAL_SEED=99");
  REQUIRE(env_run.code == 0);
  CHECK(slurp(d.path / "env/config.resolved.json").find("\"seed\": 99") !=
        std::string::npos);

  RunResult flag_run = run("gen-data" + c + " --seed 7 --out " + (d.path / "flag").string(),
                           "STYLECAL_SEED=99");
  REQUIRE(flag_run.code == 0);
  CHECK(slurp(d.path / "flag/config.resolved.json").find("\"seed\": 7") !=
        std::string::npos);

  RunResult base = run("gen-data" + c + " --out " + (d.path / "base").string());
  REQUIRE(base.code == 0);
  CHECK(slurp(d.path / "base/train.jsonl") != slurp(d.path / "env/train.jsonl"));

  RunResult bad = run("gen-data" + c + " --out " + (d.path / "bad").string(),
                      "STYLECAL_SEED=notanumber");
  CHECK(bad.code == 2);
}

TEST_CASE("training without fitted thresholds is a config error") {
  TempDir d("nothresh");
  write(d.path / "cfg.json", kSmallConfig);
  std::string c = " --config " + (d.path / "cfg.json").string();
  RunResult gen = run("gen-data" + c + " --out " + (d.path / "data").string());
  REQUIRE(gen.code == 0);
  RunResult tr = run("train" + c + " --data " + (d.path / "data/train.jsonl").string() +
                     " --out " + (d.path / "run").string());
  CHECK(tr.code == 2);
  CHECK(tr.output.find("fit-labels") != std::string::npos);
}

TEST_CASE("workers do not change generated data") {
  TempDir d("workers");
  write(d.path / "cfg.json", kSmallConfig);
  std::string c = " --config " + (d.path / "cfg.json").string();
  RunResult a = run("gen-data" + c + " --workers 1 --out " + (d.path / "w1").string());
  RunResult b = run("gen-data" + c + " --workers 4 --out " + (d.path / "w4").string());
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(slurp(d.path / "w1/train.jsonl") == slurp(d.path / "w4/train.jsonl"));
}
