#include <gtest/gtest.h>

#include <cstdio>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "glossforge/corpus.hpp"
#include "test_util.hpp"

using glossforge::read_text_file;
using glossforge::testing::fixtures_dir;
using glossforge::testing::TempDir;

namespace {

struct Run {
  int rc;
  std::string out;
  std::string err;
};

Run cli(const std::string& args, const TempDir& dir) {
  const auto err_path = dir / "stderr.txt";
  const std::string cmd = std::string(GLOSSFORGE_CLI) + " " + args + " 2>" + err_path.string();
  FILE* p = ::popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
  const int status = ::pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out, read_text_file(err_path)};
}

}  // namespace

TEST(Cli, KappaReportPrintsTableRows) {
  TempDir dir;
  auto r = cli("kappa-report --journal " + (fixtures_dir() / "table1_journal.jsonl").string(), dir);
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.out.find("Validation Rate (%) | 74.7 | 76.0 | 75.3"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("Binary Agreement | κ = 0.7489 (Substantial)"), std::string::npos);
  EXPECT_NE(r.out.find("Quality Agreement | κ = 0.3496 (Fair)"), std::string::npos);
}

TEST(Cli, KappaReportJson) {
  TempDir dir;
  auto r = cli("kappa-report --json --journal " + (fixtures_dir() / "table1_journal.jsonl").string(), dir);
  ASSERT_EQ(r.rc, 0) << r.err;
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["samples"], 150);
  EXPECT_EQ(j["raters"][0]["understandable"], 112);
}

TEST(Cli, SplitTwiceIsIdentical) {
  TempDir dir;
  const auto in = (fixtures_dir() / "corpus_100.jsonl").string();
  auto a = cli("split -i " + in + " -o " + (dir / "a").string() + " --seed 5", dir);
  auto b = cli("split -i " + in + " -o " + (dir / "b").string() + " --seed 5", dir);
  ASSERT_EQ(a.rc, 0) << a.err;
  ASSERT_EQ(b.rc, 0) << b.err;
  EXPECT_EQ(a.out, b.out);
  auto j = nlohmann::json::parse(a.out);
  EXPECT_EQ(j["counts"]["train"], 80);
  for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl", "split_map.tsv"})
    EXPECT_EQ(read_text_file(dir / "a" / f), read_text_file(dir / "b" / f)) << f;
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  auto missing = cli("kappa-report --journal " + (dir / "absent.jsonl").string(), dir);
  EXPECT_EQ(missing.rc, 2);
  auto j = nlohmann::json::parse(missing.err);
  EXPECT_EQ(j["error"], "config");
  EXPECT_EQ(j["exit_code"], 2);

  EXPECT_EQ(cli("", dir).rc, 2);
  EXPECT_EQ(cli("split --bogus", dir).rc, 2);
  EXPECT_EQ(cli("--help", dir).rc, 0);

  glossforge::write_text_file(dir / "bad.jsonl", "{not json\n");
  auto data = cli("split -i " + (dir / "bad.jsonl").string() + " -o " + (dir / "o").string(), dir);
  EXPECT_EQ(data.rc, 4) << data.err;

  auto backend = cli("eval --hyp " + (dir / "bad.jsonl").string() + " --ref " + (dir / "bad.jsonl").string() +
                         " --format plain --scorer false",
                     dir);
  EXPECT_EQ(backend.rc, 3) << backend.err;
}

TEST(Cli, HttpBackendWithoutUrlIsConfigError) {
  TempDir dir;
  auto r = cli("mask-augment -i " + (fixtures_dir() / "corpus_100.jsonl").string() + " -o " + (dir / "m.jsonl").string() +
                   " --fillmask-backend http",
               dir);
  EXPECT_EQ(r.rc, 2) << r.err;
}

TEST(Cli, EvalMatchesLibrary) {
  TempDir dir;
  const auto d = glossforge::testing::test_data_dir() / "eval";
  auto r = cli("eval --hyp " + (d / "hyp.txt").string() + " --ref " + (d / "ref.txt").string(), dir);
  ASSERT_EQ(r.rc, 0) << r.err;
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["examples"], 60);
  EXPECT_DOUBLE_EQ(j["bleu"]["bleu_4"].get<double>(), 56.42);
}
