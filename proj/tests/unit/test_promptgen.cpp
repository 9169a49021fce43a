#include <gtest/gtest.h>

#include <cstdlib>
#include <set>

#include "glossforge/promptgen.hpp"
#include "local_server.hpp"
#include "test_util.hpp"

namespace gf = glossforge;
using gf::testing::fixtures_dir;
using gf::testing::TempDir;

namespace {

size_t count_occurrences(std::string_view hay, std::string_view needle) {
  size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

// Lines whose content is the sentence itself, with or without the
// "Sentence:" label. Longer examples that merely contain it do not count.
size_t sentence_lines(const std::string& prompt, const std::string& s) {
  size_t n = 0;
  std::istringstream in(prompt);
  for (std::string line; std::getline(in, line);) {
    line = gf::unicode::trim(line);
    if (line == s || line == "Sentence: " + s) ++n;
  }
  return n;
}

gf::RuleSet tense6() { return gf::load_rules(gf::testing::test_data_dir() / "tense6.rules"); }

gf::GenerationConfig fast_config() {
  gf::GenerationConfig cfg;
  cfg.retry = gf::RetryPolicy::immediate();
  cfg.sleep = [](std::chrono::milliseconds) {};
  return cfg;
}

gf::BuildOptions no_wait() {
  gf::BuildOptions o;
  o.retry = gf::RetryPolicy::immediate();
  o.sleep = [](std::chrono::milliseconds) {};
  return o;
}

// Golden files are compared byte for byte. Setting GLOSSFORGE_UPDATE_GOLDEN
// rewrites them instead; review the diff before committing.
void expect_golden(const std::string& name, const std::string& actual) {
  const auto path = std::filesystem::path(GLOSSFORGE_GOLDEN_DIR) / name;
  if (std::getenv("GLOSSFORGE_UPDATE_GOLDEN")) {
    gf::write_text_file(path, actual);
    return;
  }
  ASSERT_TRUE(std::filesystem::exists(path)) << path;
  EXPECT_EQ(gf::read_text_file(path), actual) << name;
}

// Shared offline RAG setup over the 100-pair fixture.
struct Fixture {
  gf::Corpus corpus = gf::split_corpus(gf::load_corpus(fixtures_dir() / "corpus_100.jsonl"), {});
  gf::Corpus train = corpus.subset(gf::SplitClass::train);
  gf::RuleSet rules = gf::load_rules(gf::testing::data_dir() / "rules" / "bangla_tense_full.rules");
  gf::TokenHashEmbedder embedder{256};
  gf::EmbeddingIndex index = gf::build_index(train, embedder, no_wait());
};

}  // namespace

TEST(Template, SinglePassSubstitution) {
  EXPECT_EQ(gf::render_template("a {{x}} b {{y}}", {{"x", "{{y}}"}, {"y", "Y"}}), "a {{y}} b Y");
  EXPECT_EQ(gf::render_template("no placeholders", {}), "no placeholders");
}

TEST(Template, UnknownOrUnterminatedPlaceholder) {
  EXPECT_THROW(gf::render_template("{{nope}}", {{"x", "1"}}), gf::Error);
  EXPECT_THROW(gf::render_template("{{x", {{"x", "1"}}), gf::Error);
}

TEST(Template, ShippedFilesMatchBuiltins) {
  auto shipped = gf::load_templates(gf::testing::data_dir() / "prompts");
  gf::PromptTemplates builtin;
  for (auto name : gf::PromptTemplates::kFileNames) EXPECT_EQ(*shipped.slot(name), *builtin.slot(name)) << name;
}

TEST(Template, DirectoryOverridesSingleFile) {
  TempDir tmp;
  gf::write_text_file(tmp / "tense_user.txt", "T: {{sentence}}");
  auto t = gf::load_templates(tmp.path());
  EXPECT_EQ(t.tense_user, "T: {{sentence}}");
  EXPECT_EQ(t.gloss_system, gf::PromptTemplates{}.gloss_system);
  EXPECT_EQ(gf::build_tense_prompt("আমি যাই।", t).user, "T: আমি যাই।");
  EXPECT_THROW(gf::load_templates(tmp / "missing"), gf::Error);
}

TEST(TensePrompt, ContainsSentenceOnce) {
  const std::string s = "আমরা বাড়িতে ভাত খাই।";
  auto b = gf::build_tense_prompt(s);
  EXPECT_EQ(b.stage, gf::PromptStage::tense_id);
  EXPECT_FALSE(b.mode);
  EXPECT_TRUE(b.included_example_ids.empty());
  EXPECT_TRUE(b.included_rule_ids.empty());
  EXPECT_EQ(count_occurrences(b.user, s), 1u);
  for (auto word : {"present", "past", "future", "present_continuous", "past_continuous", "unknown"})
    EXPECT_NE(b.user.find(word), std::string::npos) << word;
}

TEST(TensePrompt, StableSerialization) {
  auto a = gf::to_json(gf::build_tense_prompt("আমি যাই।")).dump();
  auto b = gf::to_json(gf::build_tense_prompt("আমি যাই।")).dump();
  EXPECT_EQ(a, b);
}

TEST(TensePrompt, Golden) {
  auto c = gf::load_corpus(fixtures_dir() / "corpus_100.jsonl");
  expect_golden("tense_prompt.json", gf::to_json(gf::build_tense_prompt(c.pairs[0].sentence)).dump(2) + "\n");
}

TEST(TensePrompt, EmptySentence) { EXPECT_THROW(gf::build_tense_prompt("  "), gf::Error); }

TEST(ParseTense, Keywords) {
  EXPECT_EQ(gf::parse_tense_response("Future"), gf::Tense::future);
  EXPECT_EQ(gf::parse_tense_response("The tense is past."), gf::Tense::past);
  EXPECT_EQ(gf::parse_tense_response(""), gf::Tense::unknown);
  EXPECT_EQ(gf::parse_tense_response("PRESENT_CONTINUOUS"), gf::Tense::present_continuous);
  EXPECT_EQ(gf::parse_tense_response("It is present continuous."), gf::Tense::present_continuous);
  EXPECT_EQ(gf::parse_tense_response("past-continuous"), gf::Tense::past_continuous);
  EXPECT_EQ(gf::parse_tense_response("past, not future"), gf::Tense::past);
  EXPECT_EQ(gf::parse_tense_response("future, not past"), gf::Tense::future);
  EXPECT_EQ(gf::parse_tense_response("presently unclear"), gf::Tense::unknown);
  EXPECT_EQ(gf::parse_tense_response("I cannot tell"), gf::Tense::unknown);
}

TEST(GlossPrompt, FewShotWithFiveMatches) {
  Fixture f;
  gf::RetrievalResult rr;
  for (size_t i = 0; i < 5; ++i) rr.matches.push_back({f.train.pairs[i].id, 0.9 - 0.01 * i});
  rr.fallback_needed = false;
  auto b = gf::build_gloss_prompt("আমি বই পড়ি।", rr, f.rules, gf::Tense::present, f.train);
  EXPECT_EQ(b.mode, gf::PromptMode::few_shot);
  ASSERT_EQ(b.included_example_ids.size(), 5u);
  EXPECT_TRUE(b.included_rule_ids.empty());
  for (size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(b.included_example_ids[i], f.train.pairs[i].id);
    EXPECT_NE(b.user.find("Gloss: " + gf::join_tokens(f.train.pairs[i].gloss)), std::string::npos);
  }
  // Target sentence comes after every example.
  EXPECT_GT(b.user.rfind("আমি বই পড়ি।"), b.user.find(f.train.pairs[4].sentence));
}

TEST(GlossPrompt, ZeroMatchesUsesTenseRules) {
  Fixture f;
  gf::RetrievalResult rr;  // empty, fallback_needed = true
  auto b = gf::build_gloss_prompt("আমি বই পড়লাম।", rr, f.rules, gf::Tense::past, f.train);
  EXPECT_EQ(b.mode, gf::PromptMode::rule_fallback);
  EXPECT_TRUE(b.included_example_ids.empty());
  ASSERT_FALSE(b.included_rule_ids.empty());
  size_t expected = 0;
  for (const auto& r : f.rules.rules) {
    const bool relevant = r.source_tense == gf::Tense::past || r.target_tense == gf::Tense::past;
    expected += relevant;
    const bool included = std::find(b.included_rule_ids.begin(), b.included_rule_ids.end(), r.rule_id) != b.included_rule_ids.end();
    EXPECT_EQ(included, relevant) << r.rule_id;
    EXPECT_EQ(b.user.find(gf::format_rule(r)) != std::string::npos, relevant) << r.rule_id;
  }
  EXPECT_EQ(b.included_rule_ids.size(), expected);
}

TEST(GlossPrompt, UnknownTenseIncludesAllRules) {
  Fixture f;
  auto b = gf::build_gloss_prompt("আমার নাম রহিম।", {}, f.rules, gf::Tense::unknown, f.train);
  EXPECT_EQ(b.mode, gf::PromptMode::rule_fallback);
  EXPECT_EQ(b.included_rule_ids.size(), f.rules.rules.size());
}

TEST(GlossPrompt, FallbackFlagDecidesNotMatchCount) {
  Fixture f;
  gf::RetrievalResult rr;
  rr.matches.push_back({f.train.pairs[0].id, 0.8});
  rr.fallback_needed = true;  // below min_examples
  auto b = gf::build_gloss_prompt("আমি যাই।", rr, f.rules, gf::Tense::present, f.train);
  EXPECT_EQ(b.mode, gf::PromptMode::rule_fallback);
  EXPECT_TRUE(b.included_example_ids.empty());
}

TEST(GlossPrompt, UnresolvableExampleId) {
  Fixture f;
  gf::RetrievalResult rr;
  rr.matches = {{"nope", 0.9}, {"nope2", 0.9}, {"nope3", 0.9}};
  rr.fallback_needed = false;
  EXPECT_THROW(gf::build_gloss_prompt("আমি যাই।", rr, f.rules, gf::Tense::present, f.train), gf::Error);
}

TEST(GlossPrompt, Golden) {
  Fixture f;
  gf::RetrievalResult few;
  for (size_t i = 0; i < 3; ++i) few.matches.push_back({f.train.pairs[i].id, 0.75});
  few.fallback_needed = false;
  expect_golden("gloss_prompt_few_shot.json",
                gf::to_json(gf::build_gloss_prompt("আমি বই পড়ি।", few, f.rules, gf::Tense::present, f.train)).dump(2) + "\n");
  auto rs = tense6();
  expect_golden("gloss_prompt_rules.json",
                gf::to_json(gf::build_gloss_prompt("আমি বই পড়ব।", {}, rs, gf::Tense::future, f.train)).dump(2) + "\n");
}

TEST(ParseGloss, LastNonEmptyLine) {
  EXPECT_EQ(gf::parse_gloss_response("Sure! Here is the gloss:\n\nআমি বই পড় \n\n"),
            (std::vector<std::string>{"আমি", "বই", "পড়"}));
  EXPECT_EQ(gf::parse_gloss_response("Gloss: আমি যা"), (std::vector<std::string>{"আমি", "যা"}));
  EXPECT_TRUE(gf::parse_gloss_response(" \n\t\n").empty());
}

TEST(HttpLlm, RequestShape) {
  gf::GenerationParams p;
  p.model_id = "gpt-x";
  p.max_output_tokens = 64;
  auto j = gf::HttpLlm::request_body("S", "U", p);
  EXPECT_EQ(j["model"], "gpt-x");
  EXPECT_EQ(j["temperature"], 0.0);
  EXPECT_EQ(j["max_tokens"], 64);
  ASSERT_EQ(j["messages"].size(), 2u);
  EXPECT_EQ(j["messages"][0]["role"], "system");
  EXPECT_EQ(j["messages"][0]["content"], "S");
  EXPECT_EQ(j["messages"][1]["role"], "user");
  EXPECT_EQ(j["messages"][1]["content"], "U");
}

TEST(HttpLlm, AgainstLocalServer) {
  gf::testing::LocalServer srv;
  std::string seen_auth;
  nlohmann::json seen_body;
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = nlohmann::json::parse(req.body);
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"past"}}]})", "application/json");
  });
  srv.server().Post("/broken", [](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("overloaded", "text/plain");
  });
  srv.server().Post("/shape", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices":[]})", "application/json");
  });
  srv.start();

  gf::HttpLlm llm(srv.url("/v1/chat/completions"), "sk-test");
  EXPECT_EQ(llm.complete("sys", "usr", {}), "past");
  EXPECT_EQ(seen_auth, "Bearer sk-test");
  EXPECT_EQ(seen_body["messages"][1]["content"], "usr");

  for (auto path : {"/broken", "/shape"}) {
    gf::HttpLlm bad(srv.url(path), std::nullopt);
    try {
      bad.complete("s", "u", {});
      FAIL() << path;
    } catch (const gf::Error& e) {
      EXPECT_EQ(e.code(), gf::Errc::backend) << path;
    }
  }
  const auto dead = srv.url("/v1");
  srv.stop();
  gf::HttpLlm down(dead, std::nullopt);
  gf::GenerationParams p;
  p.timeout = std::chrono::milliseconds{500};
  try {
    down.complete("s", "u", p);
    FAIL();
  } catch (const gf::Error& e) {
    EXPECT_EQ(e.code(), gf::Errc::backend);
    EXPECT_NE(std::string(e.what()).find(dead), std::string::npos);
  }
}

TEST(HttpEmbedder, AgainstLocalServer) {
  gf::testing::LocalServer srv;
  srv.server().Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    nlohmann::json vecs = nlohmann::json::array();
    for (const auto& t : body["texts"]) vecs.push_back({static_cast<double>(t.get<std::string>().size()), 1.0});
    res.set_content(nlohmann::json{{"vectors", vecs}}.dump(), "application/json");
  });
  srv.start();
  gf::HttpEmbedder e(srv.url("/embed"), std::nullopt, "remote-test");
  std::vector<std::string> texts{"ab", "abcd"};
  auto v = e.embed(texts);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[1], (gf::Vector{4.0f, 1.0f}));
  EXPECT_EQ(e.dimension(), 2u);
}

TEST(Generate, EchoMockReturnsFirstExampleGloss) {
  Fixture f;
  gf::EchoLlm llm(f.rules);
  gf::RagContext ctx{f.index, f.train, f.rules, f.embedder, llm};
  auto cfg = fast_config();
  cfg.retrieval.threshold = 0.3;
  // A train sentence with one word swapped still retrieves its neighbours.
  const auto& base = f.train.pairs[3];
  auto toks = gf::unicode::split_whitespace(base.sentence);
  toks[0] = toks[0] == "আমি" ? "আমরা" : "আমি";
  const std::string query = gf::join_tokens(toks);
  gf::GenerationTrace trace;
  auto p = gf::generate_gloss(query, ctx, cfg, &trace);
  ASSERT_FALSE(trace.retrieval.fallback_needed);
  ASSERT_EQ(trace.gloss_prompt.mode, gf::PromptMode::few_shot);
  const auto* first = f.train.find(trace.retrieval.matches.front().id);
  ASSERT_NE(first, nullptr);
  EXPECT_EQ(p.gloss, first->gloss);
  EXPECT_EQ(p.provenance, gf::Provenance::rag);
  EXPECT_FALSE(p.source_pair_id);
  EXPECT_EQ(p.tense, gf::detect_tense(query, f.rules));
  EXPECT_EQ(p.meta.at("mode"), "few_shot");
  EXPECT_EQ(p.meta.at("match_count"), std::to_string(trace.retrieval.matches.size()));
  EXPECT_EQ(p.meta.at("model_id"), "mock");
  EXPECT_EQ(p.id, gf::rag_pair_id(query));
}

TEST(Generate, EmptyResponseIsEmptyGeneration) {
  Fixture f;
  gf::FunctionLlm llm([](const std::string&, const std::string& user) {
    return gf::unicode::trim(user).ends_with("Tense:") ? std::string("present") : std::string("\n  \n");
  });
  gf::RagContext ctx{f.index, f.train, f.rules, f.embedder, llm};
  try {
    gf::generate_gloss("আমি বই পড়ি।", ctx, fast_config());
    FAIL();
  } catch (const gf::Error& e) {
    EXPECT_EQ(e.code(), gf::Errc::empty_generation);
  }
}

TEST(Generate, BackendFailureAfterThreeAttempts) {
  Fixture f;
  int calls = 0;
  gf::FunctionLlm llm([&](const std::string&, const std::string&) -> std::string {
    ++calls;
    throw gf::Error(gf::Errc::backend, "timeout");
  });
  gf::RagContext ctx{f.index, f.train, f.rules, f.embedder, llm};
  try {
    gf::generate_gloss("আমি বই পড়ি।", ctx, fast_config());
    FAIL();
  } catch (const gf::Error& e) {
    EXPECT_EQ(e.code(), gf::Errc::backend);
  }
  EXPECT_EQ(calls, 3);
}

TEST(Generate, TransientFailureRecovers) {
  Fixture f;
  gf::EchoLlm echo(f.rules);
  int calls = 0;
  gf::FunctionLlm llm([&](const std::string& s, const std::string& u) {
    if (++calls == 1) throw gf::Error(gf::Errc::backend, "503");
    return echo.complete(s, u, {});
  });
  gf::RagContext ctx{f.index, f.train, f.rules, f.embedder, llm};
  EXPECT_NO_THROW(gf::generate_gloss("আমি বই পড়ি।", ctx, fast_config()));
  EXPECT_EQ(calls, 3);
}

// Every generated pair records the branch its retrieval result selected;
// stage-2 prompts contain the target once and never retrieve it.
TEST(GenerateProperty, BranchExclusivityAndHygiene) {
  Fixture f;
  gf::EchoLlm llm(f.rules);
  gf::RagContext ctx{f.index, f.train, f.rules, f.embedder, llm};
  auto sources = gf::load_sentences(fixtures_dir() / "sources_200.txt");
  for (const auto& p : f.corpus.pairs) sources.push_back(p.sentence);  // includes indexed sentences
  size_t few = 0, fallback = 0;
  for (double threshold : {0.3, 0.6, 0.9}) {
    auto cfg = fast_config();
    cfg.retrieval.threshold = threshold;
    for (const auto& s : sources) {
      gf::GenerationTrace tr;
      auto p = gf::generate_gloss(s, ctx, cfg, &tr);
      const bool met = tr.retrieval.matches.size() >= cfg.retrieval.min_examples;
      ASSERT_EQ(p.meta.at("mode"), met ? "few_shot" : "rule_fallback") << s;
      ASSERT_EQ(tr.gloss_prompt.mode, met ? gf::PromptMode::few_shot : gf::PromptMode::rule_fallback);
      ASSERT_TRUE(tr.gloss_prompt.included_example_ids.empty() || tr.gloss_prompt.included_rule_ids.empty());
      ASSERT_EQ(sentence_lines(tr.gloss_prompt.user, s), 1u) << s;
      for (const auto& m : tr.retrieval.matches) ASSERT_NE(f.train.find(m.id)->sentence, s);
      (met ? few : fallback)++;
    }
  }
  EXPECT_GT(few, 0u);
  EXPECT_GT(fallback, 0u);
}

TEST(GenerateProperty, ForcedZeroMatchTakesRuleFallback) {
  Fixture f;
  gf::EchoLlm llm(f.rules);
  gf::RagContext ctx{f.index, f.train, f.rules, f.embedder, llm};
  auto cfg = fast_config();
  cfg.retrieval.threshold = 1.0;
  for (const auto& s : gf::load_sentences(fixtures_dir() / "sources_200.txt")) {
    gf::GenerationTrace tr;
    auto p = gf::generate_gloss(s, ctx, cfg, &tr);
    ASSERT_TRUE(tr.retrieval.matches.empty());
    ASSERT_EQ(p.meta.at("mode"), "rule_fallback");
    const auto detected = *p.tense;
    for (const auto& id : tr.gloss_prompt.included_rule_ids) {
      auto it = std::find_if(f.rules.rules.begin(), f.rules.rules.end(), [&](const auto& r) { return r.rule_id == id; });
      ASSERT_NE(it, f.rules.rules.end());
      if (detected != gf::Tense::unknown) {
        ASSERT_TRUE(it->source_tense == detected || it->target_tense == detected) << id;
      }
    }
  }
}

TEST(Batch, OneForcedFailure) {
  Fixture f;
  auto sources = gf::load_sentences(fixtures_dir() / "sources_200.txt");
  sources.resize(10);
  gf::EchoLlm echo(f.rules);
  const std::string poison = sources[6];
  gf::FunctionLlm llm([&](const std::string& s, const std::string& u) -> std::string {
    if (u.find(poison) != std::string::npos) throw gf::Error(gf::Errc::backend, "rejected");
    return echo.complete(s, u, {});
  });
  gf::RagContext ctx{f.index, f.train, f.rules, f.embedder, llm};
  auto r = gf::batch_augment(sources, ctx, fast_config(), {.concurrency = 3});
  ASSERT_EQ(r.corpus.size(), 9u);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].index, 6u);
  EXPECT_EQ(r.errors[0].code, "backend");
  size_t k = 0;
  for (size_t i = 0; i < sources.size(); ++i)
    if (i != 6) {
      EXPECT_EQ(r.corpus.pairs[k++].sentence, sources[i]);
    }
}

TEST(Batch, ConcurrencyDoesNotChangeOutput) {
  Fixture f;
  auto sources = gf::load_sentences(fixtures_dir() / "sources_200.txt");
  gf::EchoLlm llm(f.rules);
  gf::RagContext ctx{f.index, f.train, f.rules, f.embedder, llm};
  auto one = gf::batch_augment(sources, ctx, fast_config(), {.concurrency = 1});
  auto four = gf::batch_augment(sources, ctx, fast_config(), {.concurrency = 4});
  EXPECT_EQ(one.corpus, four.corpus);
  EXPECT_EQ(gf::format_corpus(one.corpus, gf::CorpusFormat::jsonl), gf::format_corpus(four.corpus, gf::CorpusFormat::jsonl));
}

TEST(Batch, ResumeSkipsCompletedIds) {
  Fixture f;
  auto sources = gf::load_sentences(fixtures_dir() / "sources_200.txt");
  sources.resize(20);
  TempDir tmp;
  const auto journal = tmp / "rag.journal.jsonl";

  // First run dies after 8 items.
  gf::EchoLlm echo(f.rules);
  std::atomic<int> completed{0};
  gf::FunctionLlm flaky([&](const std::string& s, const std::string& u) -> std::string {
    const bool stage2 = gf::unicode::trim(u).ends_with("Gloss:");
    if (stage2 && completed.load() >= 8) throw gf::Error(gf::Errc::backend, "interrupted");
    auto out = echo.complete(s, u, {});
    if (stage2) ++completed;
    return out;
  });
  gf::RagContext ctx1{f.index, f.train, f.rules, f.embedder, flaky};
  auto first = gf::batch_augment(sources, ctx1, fast_config(), {.concurrency = 1, .journal = journal});
  EXPECT_EQ(first.corpus.size(), 8u);
  EXPECT_EQ(first.errors.size(), 12u);

  // Simulate a torn final write.
  {
    std::ofstream out(journal, std::ios::app | std::ios::binary);
    out << "{\"id\":\"rag-";
  }
  gf::EchoLlm llm(f.rules);
  gf::RagContext ctx2{f.index, f.train, f.rules, f.embedder, llm};
  auto second = gf::batch_augment(sources, ctx2, fast_config(), {.concurrency = 2, .journal = journal});
  EXPECT_EQ(second.resumed, 8u);
  EXPECT_TRUE(second.errors.empty());
  EXPECT_EQ(second.corpus.size(), 20u);
  EXPECT_EQ(llm.calls(), 2 * 12);

  gf::EchoLlm fresh_llm(f.rules);
  gf::RagContext ctx3{f.index, f.train, f.rules, f.embedder, fresh_llm};
  auto fresh = gf::batch_augment(sources, ctx3, fast_config(), {.concurrency = 1});
  EXPECT_EQ(second.corpus, fresh.corpus);

  // Third run finds everything done.
  gf::EchoLlm idle(f.rules);
  gf::RagContext ctx4{f.index, f.train, f.rules, f.embedder, idle};
  auto third = gf::batch_augment(sources, ctx4, fast_config(), {.journal = journal});
  EXPECT_EQ(third.resumed, 20u);
  EXPECT_EQ(idle.calls(), 0);
  EXPECT_EQ(third.corpus, fresh.corpus);
}

TEST(Batch, DuplicateSourcesReported) {
  Fixture f;
  gf::EchoLlm llm(f.rules);
  gf::RagContext ctx{f.index, f.train, f.rules, f.embedder, llm};
  std::vector<std::string> sources{"আমি বই পড়ি।", "আমি বই পড়লাম।", "আমি বই পড়ি।"};
  auto r = gf::batch_augment(sources, ctx, fast_config());
  EXPECT_EQ(r.corpus.size(), 2u);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].index, 2u);
  EXPECT_EQ(r.errors[0].code, "duplicate_id");
  EXPECT_THROW(gf::batch_augment({}, ctx, fast_config()), gf::Error);
}

TEST(Batch, TwoThousandSources) {
  auto c = gf::split_corpus(gf::load_corpus(fixtures_dir() / "corpus_1000.jsonl"), {});
  auto train = c.subset(gf::SplitClass::train);
  auto rules = gf::load_rules(gf::testing::data_dir() / "rules" / "bangla_tense_full.rules");
  gf::TokenHashEmbedder emb;
  auto idx = gf::build_index(train, emb, no_wait());
  gf::EchoLlm llm(rules);
  gf::RagContext ctx{idx, train, rules, emb, llm};
  auto sources = gf::load_sentences(fixtures_dir() / "sources_2000.txt");
  ASSERT_EQ(sources.size(), 2000u);
  auto r = gf::batch_augment(sources, ctx, fast_config(), {.concurrency = 8});
  EXPECT_EQ(r.corpus.size() + r.errors.size(), 2000u);
  EXPECT_EQ(r.corpus.size(), 2000u);
  std::set<std::string> ids;
  for (const auto& p : r.corpus.pairs) {
    EXPECT_EQ(p.provenance, gf::Provenance::rag);
    ids.insert(p.id);
  }
  EXPECT_EQ(ids.size(), 2000u);
}
