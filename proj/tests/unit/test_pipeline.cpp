#include <gtest/gtest.h>

#include <chrono>
#include <set>

#include "glossforge/pipeline.hpp"
#include "test_util.hpp"

using namespace glossforge;
using glossforge::testing::data_dir;
using glossforge::testing::fixtures_dir;
using glossforge::testing::TempDir;

namespace {

PipelineConfig config_for(const std::string& corpus, const std::string& sources, const std::filesystem::path& out) {
  PipelineConfig c;
  c.corpus = fixtures_dir() / corpus;
  c.split.seed = 13;
  c.rules = data_dir() / "rules/bangla_tense.rules";
  c.stoplist = data_dir() / "masking/stoplist.txt";
  c.vocabulary = data_dir() / "masking/vocabulary.txt";
  c.rag_sources = fixtures_dir() / sources;
  c.output = out;
  return c;
}

PipelineResult run(const PipelineConfig& c) {
  auto be = make_backends(c, load_rules(c.rules));
  return run_pipeline(c, be, {[](std::chrono::milliseconds) {}});
}

}  // namespace

TEST(RuleAugment, StopsAtSourceBudgetAndCapsPerPair) {
  auto c = load_corpus(fixtures_dir() / "corpus_100.jsonl");
  auto rs = load_rules(data_dir() / "rules/bangla_tense_full.rules");
  std::unordered_set<std::string> seen;
  for (const auto& p : c.pairs) seen.insert(p.sentence);
  const auto before = seen.size();
  auto r = rule_augment(c.pairs, rs, 21, 2, seen);
  EXPECT_EQ(r.report.produced, 21u);
  EXPECT_GE(r.report.sources, 11u);
  EXPECT_EQ(r.corpus.size(), r.report.produced);
  EXPECT_EQ(seen.size(), before + r.report.produced);
  for (const auto& p : r.corpus.pairs) {
    EXPECT_EQ(p.provenance, Provenance::rule_tense);
    EXPECT_EQ(std::count_if(c.pairs.begin(), c.pairs.end(), [&](const auto& q) { return q.sentence == p.sentence; }), 0);
  }
}

TEST(Pipeline, HundredPairFixtureReachesOneToThree) {
  TempDir dir;
  auto c = config_for("corpus_100.jsonl", "sources_200.txt", dir.path());
  auto r = run(c);
  const auto& m = r.manifest;
  EXPECT_EQ(m["manual"], 100);
  EXPECT_EQ(m["split"]["train"], 80);
  EXPECT_EQ(m["split"]["dev"], 10);
  EXPECT_EQ(m["split"]["test"], 10);
  const double ratio = m["ratio"];
  EXPECT_GE(ratio, 2.7) << m.dump(2);
  EXPECT_LE(ratio, 3.3) << m.dump(2);
  EXPECT_TRUE(m["held_out"]["unchanged"].get<bool>());
  EXPECT_EQ(m["counts"]["rag"], 200) << m.dump(2);
  for (const char* f : {"manifest.json", "merged.jsonl", "merged_split.tsv", "train_augmented.jsonl", "index.gfi",
                        "split/train.jsonl", "split/dev.jsonl", "split/test.jsonl", "aug/rule.jsonl", "aug/mask.jsonl",
                        "aug/rag.jsonl"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
}

TEST(Pipeline, AugmentationNeverTouchesHeldOutPairs) {
  TempDir dir;
  auto r = run(config_for("corpus_100.jsonl", "sources_200.txt", dir.path()));
  const auto dev = load_corpus(dir / "split/dev.jsonl");
  const auto test = load_corpus(dir / "split/test.jsonl");
  std::set<std::string> held_ids, held_sentences;
  for (const auto* c : {&dev, &test})
    for (const auto& p : c->pairs) {
      held_ids.insert(p.id);
      held_sentences.insert(p.sentence);
    }
  for (const auto& p : r.merged.pairs) {
    if (p.provenance == Provenance::manual) continue;
    EXPECT_EQ(r.merged.split->at(p.id), SplitClass::train);
    if (p.source_pair_id) {
      EXPECT_FALSE(held_ids.contains(*p.source_pair_id)) << p.id;
    }
    EXPECT_FALSE(held_sentences.contains(p.sentence)) << p.id;
  }
  // held-out files equal a fresh split of the input
  auto fresh = split_corpus(load_corpus(fixtures_dir() / "corpus_100.jsonl"), SplitRatios{0.8, 0.1, 0.1, 13});
  EXPECT_EQ(read_text_file(dir / "split/test.jsonl"), format_corpus(fresh.subset(SplitClass::test), CorpusFormat::jsonl));
}

TEST(Pipeline, RerunIsByteIdentical) {
  TempDir a, b;
  run(config_for("corpus_100.jsonl", "sources_200.txt", a.path()));
  run(config_for("corpus_100.jsonl", "sources_200.txt", b.path()));
  for (const char* f : {"merged.jsonl", "manifest.json", "split/dev.jsonl", "split/test.jsonl", "index.gfi"})
    EXPECT_EQ(read_text_file(a / f), read_text_file(b / f)) << f;
  // same directory again: journal resume gives the same output
  auto second = run(config_for("corpus_100.jsonl", "sources_200.txt", a.path()));
  EXPECT_EQ(second.manifest["rag"]["resumed"], 200);
  EXPECT_EQ(read_text_file(a / "merged.jsonl"), read_text_file(b / "merged.jsonl"));
}

TEST(Pipeline, ThousandPairFixtureGivesAboutFourThousand) {
  TempDir dir;
  const auto t0 = std::chrono::steady_clock::now();
  auto r = run(config_for("corpus_1000.jsonl", "sources_2000.txt", dir.path()));
  const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto& m = r.manifest;
  EXPECT_EQ(m["manual"], 1000);
  const size_t total = m["total"];
  EXPECT_GE(total, 3700u) << m.dump(2);
  EXPECT_LE(total, 4300u) << m.dump(2);
  EXPECT_NEAR(m["counts"]["rule_tense"].get<double>(), 500, 50) << m.dump(2);
  EXPECT_NEAR(m["counts"]["mask_subst"].get<double>(), 500, 75) << m.dump(2);
  EXPECT_LT(secs, 60.0);
}

TEST(MaskAugment, FillsBudgetWithNovelSentences) {
  auto c = load_corpus(fixtures_dir() / "corpus_100.jsonl");
  std::unordered_set<std::string> seen;
  for (const auto& p : c.pairs) seen.insert(p.sentence);
  VocabularyFillMask backend(load_token_list(data_dir() / "masking/vocabulary.txt"));
  MaskOptions opts;
  opts.stop_list = load_stop_list(data_dir() / "masking/stoplist.txt");
  auto r = mask_augment(c.pairs, backend, opts, 37, seen);
  EXPECT_EQ(r.corpus.size(), 37u);
  EXPECT_EQ(r.report.produced, 37u);
  std::set<std::string> sentences;
  for (const auto& v : r.corpus.pairs) {
    EXPECT_TRUE(sentences.insert(v.sentence).second);
    EXPECT_FALSE(std::any_of(c.pairs.begin(), c.pairs.end(), [&](const auto& q) { return q.sentence == v.sentence; }));
  }
  EXPECT_LT(r.report.pairs_seen, c.size());  // stopped early
}
