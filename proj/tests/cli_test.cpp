// Copyright 2026 The TextMonkey-Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

#include <gtest/gtest.h>

#include "support/process.hpp"
#include "textmonkey/archive.hpp"
#include "textmonkey/split.hpp"

namespace txm = textmonkey;
using support::quoted;

namespace {

const std::string kCli = TEXTMONKEY_CLI_PATH;

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = std::filesystem::temp_directory_path() / ("tm_cli_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
    std::mt19937 gen(1);
    std::uniform_int_distribution<int> byte(0, 255);
    txm::RawImage img(448, 448);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(byte(gen));
    txm::write_ppm(img, path("img.ppm"));
  }
  static void TearDownTestSuite() { std::filesystem::remove_all(dir_); }

  static std::string path(const std::string& name) { return (dir_ / name).string(); }

  static support::RunResult cli(const std::string& args) { return support::run(quoted(kCli) + " " + args); }

  // A small encoder keeps each forward pass fast.
  static std::string small() { return "--set d_model=16 --set n_heads=2 --set d_adapter=4"; }

  static std::filesystem::path dir_;
};

std::filesystem::path Cli::dir_;

}  // namespace

TEST_F(Cli, ForwardReportsShapes) {
  const auto r = cli("forward " + quoted(path("img.ppm")) + " --resolution 448 --random-init --seed 3 " + small());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("windows: 1\nL_before: 512\nr_after: 512\n"), std::string::npos) << r.output;
}

TEST_F(Cli, ForwardRejectsROverTokenCount) {
  const auto ok = cli("forward " + quoted(path("img.ppm")) + " --resolution 448 --r 512 --random-init " + small());
  EXPECT_EQ(ok.exit_code, 0) << ok.output;
  const auto bad = cli("forward " + quoted(path("img.ppm")) + " --resolution 448 --r 513 --random-init " + small());
  EXPECT_EQ(bad.exit_code, 2);
  EXPECT_NE(bad.output.find("token_resampler.r"), std::string::npos) << bad.output;
}

TEST_F(Cli, ForwardNeedsWeights) {
  const auto r = cli("forward " + quoted(path("img.ppm")) + " " + small());
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("--random-init"), std::string::npos);
}

TEST_F(Cli, ForwardIsDeterministicAndWeightsReload) {
  const std::string base = "forward " + quoted(path("img.ppm")) + " " + small();
  ASSERT_EQ(cli(base + " --random-init --seed 7 --dump " + quoted(path("a.tmar")) + " --save-weights " +
                quoted(path("w.tmar")))
                .exit_code,
            0);
  ASSERT_EQ(cli(base + " --random-init --seed 7 --dump " + quoted(path("b.tmar"))).exit_code, 0);
  ASSERT_EQ(cli(base + " --weights " + quoted(path("w.tmar")) + " --dump " + quoted(path("c.tmar"))).exit_code, 0);
  const auto a = txm::TensorArchive::load(path("a.tmar")).serialize();
  EXPECT_EQ(a, txm::TensorArchive::load(path("b.tmar")).serialize());
  EXPECT_EQ(a, txm::TensorArchive::load(path("c.tmar")).serialize());
}

TEST_F(Cli, SeedFallsBackToEnvironment) {
  const std::string base = "forward " + quoted(path("img.ppm")) + " --random-init " + small() + " --dump ";
  ASSERT_EQ(support::run("TM_SEED=11 " + quoted(kCli) + " " + base + quoted(path("env.tmar"))).exit_code, 0);
  ASSERT_EQ(cli(base + quoted(path("flag.tmar")) + " --seed 11").exit_code, 0);
  EXPECT_EQ(txm::TensorArchive::load(path("env.tmar")).serialize(),
            txm::TensorArchive::load(path("flag.tmar")).serialize());
}

TEST_F(Cli, RedundancyWritesCsv) {
  ASSERT_EQ(cli("forward " + quoted(path("img.ppm")) + " --random-init " + small() + " --dump " + quoted(path("d.tmar")))
                .exit_code,
            0);
  const auto r = cli("redundancy --dump " + quoted(path("d.tmar")) + " --out " + quoted(path("r.csv")));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("threshold 0.8: "), std::string::npos);
  std::ifstream f(path("r.csv"));
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header, "threshold,count,fraction");
  const auto bad = cli("redundancy --dump " + quoted(path("d.tmar")) + " --thresholds 0.9,0.5 --out " +
                       quoted(path("x.csv")));
  EXPECT_EQ(bad.exit_code, 1);
}

TEST_F(Cli, FilterKeepsSortedIndices) {
  txm::TensorArchive ar;
  ar.put("tokens.assembled", txm::Tensor::matrix({{1, 0}, {1, 0}, {0, 1}, {1, 1}}));
  ar.save(path("f.tmar"));
  const auto r = cli("filter --dump " + quoted(path("f.tmar")) + " --keep 2");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(r.output, "kept 2 of 4 tokens\n2 3\n");
}

TEST_F(Cli, EvalMetrics) {
  std::ofstream(path("p.jsonl")) << "{\"id\":\"1\",\"prediction\":\"kitten\"}\n";
  std::ofstream(path("g.jsonl")) << "{\"id\":\"1\",\"ground_truths\":[\"sitting\"]}\n";
  const auto anls = cli("eval --pred " + quoted(path("p.jsonl")) + " --gt " + quoted(path("g.jsonl")) + " --metric anls");
  ASSERT_EQ(anls.exit_code, 0) << anls.output;
  EXPECT_NE(anls.output.find("anls       1        0.5714"), std::string::npos) << anls.output;
  const auto contains =
      cli("eval --pred " + quoted(path("p.jsonl")) + " --gt " + quoted(path("g.jsonl")) + " --metric contains --verbose");
  EXPECT_NE(contains.output.find("[1] score=0.0000"), std::string::npos) << contains.output;
  const auto unknown =
      cli("eval --pred " + quoted(path("p.jsonl")) + " --gt " + quoted(path("g.jsonl")) + " --metric bleu");
  EXPECT_NE(unknown.exit_code, 0);
  EXPECT_NE(unknown.output.find("contains, anls, relaxed"), std::string::npos) << unknown.output;
}

TEST_F(Cli, PromptTemplates) {
  EXPECT_EQ(cli("prompt read-all").output, "Read all the text in the image.\n");
  EXPECT_EQ(cli("prompt vqa-grounding 'Who?'").output,
            "Who?. Provide the location coordinates of the answer when answering the question.\n");
  EXPECT_EQ(cli("prompt nonsense").exit_code, 1);
}

TEST_F(Cli, MarkupRoundTrip) {
  ASSERT_EQ(cli("markup " + quoted(path("m.txt")) + " --generate 200 --seed 4").exit_code, 0);
  const auto r = cli("markup " + quoted(path("m.txt")));
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.output, "OK, 200 spans, 0 diffs\n");
  std::ofstream(path("bad.txt")) << "<ref>a</ref>  <box>(1,2)</box>\n";
  EXPECT_EQ(cli("markup " + quoted(path("bad.txt"))).exit_code, 1);
}

TEST_F(Cli, GradcheckPasses) {
  const auto r = cli("gradcheck --seed 2");
  EXPECT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(r.output.find("FAIL"), std::string::npos);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_NE(cli("").exit_code, 0);
  EXPECT_NE(cli("forward").exit_code, 0);
}
