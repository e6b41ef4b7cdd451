#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("disenkgat_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Run run(const std::string& args) {
  const fs::path capture = fs::temp_directory_path() / "disenkgat_cli_capture.txt";
  const std::string cmd = std::string("\"") + DISENKGAT_CLI + "\" " + args + " > \"" + capture.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(capture);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string line_after(const std::string& text, const std::string& prefix) {
  const auto at = text.find(prefix);
  if (at == std::string::npos) return "";
  const auto begin = at + prefix.size();
  return text.substr(begin, text.find('\n', begin) - begin);
}

const std::string kTrainFlags =
    " --K 2 --component-dim 4 --layers 1 --score-fn distmult --epochs 2 --batch-size 16 --seed 5";

}  // namespace

TEST_CASE("prep reports the dataset counts") {
  const fs::path out = scratch("prep");
  const Run r = run("prep --data \"" + std::string(DISENKGAT_TEST_DATA) + "/toy12\" --out \"" + out.string() + "\"");
  CHECK(r.code == 0);
  CHECK(r.out.find("entities    8") != std::string::npos);
  CHECK(r.out.find("train       8") != std::string::npos);
  CHECK(r.out.find("valid       2") != std::string::npos);
  CHECK(r.out.find("test        2") != std::string::npos);
  CHECK(fs::exists(out / "stats.json"));
  CHECK(fs::exists(out / "entities.txt"));
}

TEST_CASE("synth, train, eval and explain run end to end and replay exactly") {
  const fs::path root = scratch("pipeline");
  const fs::path data = root / "data";
  REQUIRE(run("synth --out \"" + data.string() + "\" --entities 20 --topics 2 --triples 60 --seed 3").code == 0);
  REQUIRE(fs::exists(data / "train.txt"));

  const Run t = run("train --data \"" + data.string() + "\" --out \"" + (root / "runs").string() + "\"" + kTrainFlags);
  REQUIRE(t.code == 0);
  const fs::path run_dir = line_after(t.out, "run directory: ");
  const std::string digest = line_after(t.out, "best checkpoint sha256: ");
  REQUIRE(fs::exists(run_dir / "best.ckpt"));
  CHECK(digest.size() == 64);

  const std::string ckpt = "--checkpoint \"" + (run_dir / "best.ckpt").string() + "\"";
  const Run e = run("eval " + ckpt + " --split test --json \"" + (root / "eval.json").string() + "\"");
  CHECK(e.code == 0);
  CHECK(e.out.find("MRR") != std::string::npos);
  CHECK(fs::exists(root / "eval.json"));

  const Run x = run("explain " + ckpt + " --entity e0 --top-n 2");
  CHECK(x.code == 0);
  CHECK(x.out.find("entity: e0") != std::string::npos);

  // Training again from the saved config reproduces the best checkpoint.
  const Run replay = run("train --config \"" + (run_dir / "config.json").string() + "\" --out \"" +
                         (root / "replay").string() + "\"");
  REQUIRE(replay.code == 0);
  CHECK(line_after(replay.out, "best checkpoint sha256: ") == digest);

  const Run unknown = run("explain " + ckpt + " --entity nobody");
  CHECK(unknown.code == 2);
  CHECK(unknown.out.find("did you mean") != std::string::npos);
}

TEST_CASE("exit codes separate usage errors from data errors") {
  CHECK(run("eval --checkpoint /nonexistent/best.ckpt").code == 2);
  CHECK(run("train --no-such-flag").code == 1);
  CHECK(run("eval --checkpoint x --split nope").code == 1);
  CHECK(run("explain --checkpoint x").code == 1);
  CHECK(run("train --data /nonexistent/dataset --epochs 1").code == 2);
  CHECK(run("--help").code == 0);
}
