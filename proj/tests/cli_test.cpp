// End-to-end checks of the gvqa executable: exit codes, the
// generate/train/eval cycle, and the ablation table shape.
#include <catch2/catch.hpp>

#include <cstdlib>
#include <sstream>

#include "test_util.hpp"

#ifndef GVQA_CLI_PATH
#error "GVQA_CLI_PATH must point at the built executable"
#endif

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(GVQA_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t line_count(const std::string& path) {
  std::istringstream in(gvqa_test::read_text(path));
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

}  // namespace

TEST_CASE("usage errors exit with status 2") {
  CHECK(run("") == 2);
  CHECK(run("no-such-subcommand") == 2);
  CHECK(run("train") == 2);  // missing required options
  CHECK(run("--help") == 0);
}

TEST_CASE("gradcheck audits every parameter and exits cleanly") {
  CHECK(run("gradcheck --seed 7") == 0);
}

TEST_CASE("generate, train, evaluate, and ablate round trip") {
  gvqa_test::TempDir dir("cli");
  const std::string train_dir = dir.file("train");
  const std::string val_dir = dir.file("val");
  REQUIRE(run("gen-data --seed 5 --pairs 10 --out " + train_dir) == 0);
  REQUIRE(run("gen-data --seed 6 --pairs 4 --out " + val_dir) == 0);

  // byte-identical regeneration
  const std::string again = dir.file("again");
  REQUIRE(run("gen-data --seed 5 --pairs 10 --out " + again) == 0);
  CHECK(gvqa_test::read_text(train_dir + "/scenes.jsonl") ==
        gvqa_test::read_text(again + "/scenes.jsonl"));
  CHECK(gvqa_test::read_text(train_dir + "/questions.conllu") ==
        gvqa_test::read_text(again + "/questions.conllu"));

  const std::string run_dir = dir.file("run");
  REQUIRE(run("train --scenes " + train_dir + "/scenes.jsonl --questions " + train_dir +
              "/questions.conllu --manifest " + train_dir + "/manifest.json --val-scenes " +
              val_dir + "/scenes.jsonl --val-questions " + val_dir +
              "/questions.conllu --out " + run_dir +
              " --seed 1 --epochs 1 --batch-size 8 --h-dim 8 --t-q 1 --t-s 1") == 0);
  CHECK(line_count(run_dir + "/metrics.csv") == 2);  // header + one epoch
  CHECK(!gvqa_test::read_text(run_dir + "/runspec.json").empty());
  CHECK(!gvqa_test::read_text(run_dir + "/vocab.json").empty());

  const std::string eval_dir = dir.file("eval");
  REQUIRE(run("eval --scenes " + val_dir + "/scenes.jsonl --questions " + val_dir +
              "/questions.conllu --manifest " + train_dir + "/manifest.json --checkpoint " +
              run_dir + "/checkpoint.bin --out " + eval_dir) == 0);
  CHECK(line_count(eval_dir + "/predictions.csv") == 9);  // header + 8 questions
  CHECK(line_count(eval_dir + "/pr_curve.csv") >= 2);

  const std::string abl_dir = dir.file("abl");
  REQUIRE(run("ablate --scenes " + train_dir + "/scenes.jsonl --questions " + train_dir +
              "/questions.conllu --manifest " + train_dir + "/manifest.json --val-scenes " +
              val_dir + "/scenes.jsonl --val-questions " + val_dir +
              "/questions.conllu --out " + abl_dir +
              " --seed 1 --epochs 1 --batch-size 8 --h-dim 8 --t-q 1 --t-s 1") == 0);
  // header + full model + the ten numbered ablation rows
  CHECK(line_count(abl_dir + "/ablations.csv") == 12);
}
