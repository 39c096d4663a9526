#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "essaynet/corpus.hpp"

namespace fs = std::filesystem;
using namespace essaynet;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path fresh_dir(const std::string& tag) {
  static int counter = 0;
  const fs::path dir =
      fs::temp_directory_path() / ("essaynet_cli_" + tag + "_" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(ESSAYNET_BIN) + " " + args + " > " + out.string() +
                          " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WEXITSTATUS(status);
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// Small deterministic corpus triple via the generator subcommand.
fs::path make_data(const fs::path& dir, const std::string& extra = "") {
  const fs::path data = dir / "data";
  const RunResult r = run_cli(
      "gen-synthetic --vocab-size 15 --essays 60 --min-length 4 --max-length 9 "
      "--error-min 0 --error-max 0.6 --noise 1 --seed 42 --out " +
          data.string() + extra,
      dir);
  REQUIRE(r.exit_code == 0);
  return data;
}

std::string train_args(const fs::path& data, const fs::path& out) {
  return "train --train " + (data / "train.txt").string() + " --dev " +
         (data / "dev.txt").string() +
         " --embedding-dim 8 --hidden-dim 8 --max-epochs 3 --batch-size 8 --seed 7 --out " +
         out.string();
}

}  // namespace

TEST_CASE("gen-synthetic writes a parseable corpus triple, byte-identical under one seed") {
  const fs::path dir = fresh_dir("gen");
  const fs::path a = dir / "a";
  const fs::path b = dir / "b";
  const std::string flags =
      "gen-synthetic --vocab-size 12 --essays 30 --seed 9 --out ";
  REQUIRE(run_cli(flags + a.string(), dir).exit_code == 0);
  REQUIRE(run_cli(flags + b.string(), dir).exit_code == 0);
  for (const char* name : {"train.txt", "dev.txt", "test.txt"}) {
    CHECK(slurp(a / name) == slurp(b / name));
    CHECK_FALSE(parse_corpus((a / name).string()).empty());
  }
}

TEST_CASE("gen-synthetic with a zero error range produces only correct labels") {
  const fs::path dir = fresh_dir("genzero");
  const RunResult r = run_cli(
      "gen-synthetic --vocab-size 12 --essays 20 --error-min 0 --error-max 0 --noise 0 "
      "--seed 4 --out " +
          (dir / "d").string(),
      dir);
  REQUIRE(r.exit_code == 0);
  for (const Essay& e : parse_corpus((dir / "d" / "train.txt").string())) {
    for (Label l : e.labels) CHECK(l == Label::kCorrect);
    CHECK(e.gold_score == 20);
  }
}

TEST_CASE("train smoke: exit 0 and all artifacts present") {
  const fs::path dir = fresh_dir("train");
  const fs::path data = make_data(dir);
  const RunResult r = run_cli(train_args(data, dir / "run"), dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  CHECK(fs::exists(dir / "run" / "checkpoint.bin"));
  CHECK(fs::exists(dir / "run" / "vocab.txt"));
  CHECK(fs::exists(dir / "run" / "train_record.txt"));
  CHECK(fs::exists(dir / "run" / "config.resolved"));
  const std::string resolved = slurp(dir / "run" / "config.resolved");
  CHECK(resolved.find("hidden_dim=8") != std::string::npos);  // flag override recorded
  CHECK(resolved.find("patience=7") != std::string::npos);    // default preserved
}

TEST_CASE("identical train invocations produce byte-identical checkpoints") {
  const fs::path dir = fresh_dir("determinism");
  const fs::path data = make_data(dir);
  REQUIRE(run_cli(train_args(data, dir / "r1"), dir).exit_code == 0);
  REQUIRE(run_cli(train_args(data, dir / "r2"), dir).exit_code == 0);
  const std::string c1 = slurp(dir / "r1" / "checkpoint.bin");
  const std::string c2 = slurp(dir / "r2" / "checkpoint.bin");
  REQUIRE_FALSE(c1.empty());
  CHECK(c1 == c2);
  CHECK(slurp(dir / "r1" / "vocab.txt") == slurp(dir / "r2" / "vocab.txt"));
}

TEST_CASE("missing dev path fails with a message naming the field") {
  const fs::path dir = fresh_dir("missingdev");
  const fs::path data = make_data(dir);
  const RunResult r = run_cli("train --train " + (data / "train.txt").string() +
                                  " --out " + (dir / "run").string(),
                              dir);
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("dev") != std::string::npos);
}

TEST_CASE("config file values are used and flags beat them") {
  const fs::path dir = fresh_dir("config");
  const fs::path data = make_data(dir);
  const fs::path cfg = dir / "run.cfg";
  {
    std::ofstream out(cfg);
    out << "train=" << (data / "train.txt").string() << "\n";
    out << "dev=" << (data / "dev.txt").string() << "\n";
    out << "embedding_dim=8\nhidden_dim=6\nmax_epochs=2\nseed=3\n";
    out << "out=" << (dir / "from_file").string() << "\n";
  }
  const RunResult r = run_cli("train --config " + cfg.string() + " --hidden-dim 8 --out " +
                                  (dir / "run").string(),
                              dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  const std::string resolved = slurp(dir / "run" / "config.resolved");
  CHECK(resolved.find("hidden_dim=8") != std::string::npos);      // flag wins
  CHECK(resolved.find("embedding_dim=8") != std::string::npos);   // file value kept
  CHECK(resolved.find("max_epochs=2") != std::string::npos);
}

TEST_CASE("eval reports metrics and is idempotent") {
  const fs::path dir = fresh_dir("eval");
  const fs::path data = make_data(dir);
  REQUIRE(run_cli(train_args(data, dir / "run"), dir).exit_code == 0);
  const std::string eval_args = "eval --checkpoint " +
                                (dir / "run" / "checkpoint.bin").string() + " --test " +
                                (data / "test.txt").string() + " --out " +
                                (dir / "eval1").string();
  const RunResult r1 = run_cli(eval_args, dir);
  REQUIRE_MESSAGE(r1.exit_code == 0, r1.err);
  CHECK(r1.out.find("F0.5") != std::string::npos);
  CHECK(fs::exists(dir / "eval1" / "eval_report.txt"));
  const RunResult r2 = run_cli(eval_args, dir);
  REQUIRE(r2.exit_code == 0);
  CHECK(slurp(dir / "eval1" / "eval_report.txt") != "");
  CHECK(r1.out == r2.out);
}

TEST_CASE("eval rejects a corrupted checkpoint with an integrity message") {
  const fs::path dir = fresh_dir("corrupt");
  const fs::path data = make_data(dir);
  REQUIRE(run_cli(train_args(data, dir / "run"), dir).exit_code == 0);
  {
    std::fstream f(dir / "run" / "checkpoint.bin",
                   std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(600);
    const char byte = 0x77;
    f.write(&byte, 1);
  }
  const RunResult r = run_cli("eval --checkpoint " +
                                  (dir / "run" / "checkpoint.bin").string() + " --test " +
                                  (data / "test.txt").string(),
                              dir);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("integrity") != std::string::npos);
}

TEST_CASE("eval rejects a vocabulary whose hash disagrees with the checkpoint") {
  const fs::path dir = fresh_dir("vocabhash");
  const fs::path data = make_data(dir);
  REQUIRE(run_cli(train_args(data, dir / "run"), dir).exit_code == 0);
  {
    std::ofstream out(dir / "run" / "wrong_vocab.txt");
    out << "<unk>\n<s>\nintruder\n";
  }
  const RunResult r = run_cli("eval --checkpoint " +
                                  (dir / "run" / "checkpoint.bin").string() + " --vocab " +
                                  (dir / "run" / "wrong_vocab.txt").string() + " --test " +
                                  (data / "test.txt").string(),
                              dir);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("hash") != std::string::npos);
}

TEST_CASE("predict writes a corpus that re-parses, deterministically") {
  const fs::path dir = fresh_dir("predict");
  const fs::path data = make_data(dir);
  REQUIRE(run_cli(train_args(data, dir / "run"), dir).exit_code == 0);

  // unlabeled input with an out-of-vocabulary token
  const fs::path input = dir / "unlabeled.txt";
  {
    std::ofstream out(input);
    out << "# id=u1\n";
    out << "w01\nw02\nnever-seen-token\nw03\n";
    out << "# id=u2\n";
    out << "w05\nw06\n";
  }
  const std::string args = "predict --checkpoint " +
                           (dir / "run" / "checkpoint.bin").string() + " --input " +
                           input.string() + " --output ";
  const RunResult r1 = run_cli(args + (dir / "pred1.txt").string(), dir);
  REQUIRE_MESSAGE(r1.exit_code == 0, r1.err);
  const RunResult r2 = run_cli(args + (dir / "pred2.txt").string(), dir);
  REQUIRE(r2.exit_code == 0);
  CHECK(slurp(dir / "pred1.txt") == slurp(dir / "pred2.txt"));

  const std::vector<Essay> annotated = parse_corpus((dir / "pred1.txt").string());
  REQUIRE(annotated.size() == 2);
  CHECK(annotated[0].labeled);
  REQUIRE(annotated[0].gold_score.has_value());
  CHECK(*annotated[0].gold_score >= 1);
  CHECK(*annotated[0].gold_score <= 20);
}

TEST_CASE("predict on an empty corpus writes an empty file and exits 0") {
  const fs::path dir = fresh_dir("predictempty");
  const fs::path data = make_data(dir);
  REQUIRE(run_cli(train_args(data, dir / "run"), dir).exit_code == 0);
  const fs::path input = dir / "empty.txt";
  { std::ofstream out(input); }
  const RunResult r = run_cli("predict --checkpoint " +
                                  (dir / "run" / "checkpoint.bin").string() + " --input " +
                                  input.string() + " --output " + (dir / "out.txt").string(),
                              dir);
  CHECK(r.exit_code == 0);
  CHECK(slurp(dir / "out.txt").empty());
}

TEST_CASE("sweep with a singleton grid writes one row that re-parses") {
  const fs::path dir = fresh_dir("sweep");
  const fs::path data = make_data(dir);
  const std::string args = "sweep --train " + (data / "train.txt").string() + " --dev " +
                           (data / "dev.txt").string() +
                           " --embedding-dim 8 --hidden-dim 8 --max-epochs 2 --seed 7 "
                           "--grid 0.5 --out " +
                           (dir / "sw").string();
  const RunResult r = run_cli(args, dir);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  const std::string sweep = slurp(dir / "sw" / "sweep.txt");
  CHECK(sweep.find("gamma_aes=0.5") != std::string::npos);
  std::size_t rows = 0;
  std::istringstream is(sweep);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line[0] != '#') ++rows;
  }
  CHECK(rows == 1);
}

TEST_CASE("usage errors exit with code 1") {
  const fs::path dir = fresh_dir("usage");
  CHECK(run_cli("no-such-command", dir).exit_code == 1);
  CHECK(run_cli("train --no-such-flag 1", dir).exit_code == 1);
}
