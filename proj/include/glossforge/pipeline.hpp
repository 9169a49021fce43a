#pragma once

#include <algorithm>
#include <filesystem>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "glossforge/config.hpp"
#include "glossforge/corpus.hpp"
#include "glossforge/log.hpp"
#include "glossforge/masking.hpp"
#include "glossforge/promptgen.hpp"
#include "glossforge/retrieval.hpp"
#include "glossforge/rng.hpp"
#include "glossforge/ruleset.hpp"

namespace glossforge {

struct PipelineBackends {
  std::unique_ptr<EmbedderBackend> embedder;
  std::unique_ptr<LlmBackend> llm;
  std::unique_ptr<FillMaskBackend> fillmask;
};

inline std::unique_ptr<EmbedderBackend> make_embedder(const PipelineConfig& c) {
  if (c.embed.kind == BackendKind::http)
    return std::make_unique<HttpEmbedder>(c.embed.url, c.embed_key, c.embed.model, c.embed.timeout);
  return std::make_unique<TokenHashEmbedder>(c.embed_dimension);
}

inline std::unique_ptr<LlmBackend> make_llm(const PipelineConfig& c, const RuleSet& rs) {
  if (c.llm.kind == BackendKind::http) return std::make_unique<HttpLlm>(c.llm.url, c.llm_key);
  return std::make_unique<EchoLlm>(rs);
}

inline std::unique_ptr<FillMaskBackend> make_fillmask(const PipelineConfig& c) {
  if (c.fillmask.kind == BackendKind::http) return std::make_unique<HttpFillMask>(c.fillmask.url, std::nullopt, c.fillmask.timeout);
  return std::make_unique<VocabularyFillMask>(load_token_list(c.vocabulary));
}

inline PipelineBackends make_backends(const PipelineConfig& c, const RuleSet& rs) {
  return {make_embedder(c), make_llm(c, rs), make_fillmask(c)};
}

inline GenerationConfig generation_config(const PipelineConfig& c) {
  GenerationConfig g;
  g.retrieval = c.retrieval;
  g.params.model_id = c.llm.model;
  g.params.temperature = c.temperature;
  g.params.max_output_tokens = c.max_output_tokens;
  g.params.timeout = c.llm.timeout;
  if (c.prompts) g.templates = load_templates(*c.prompts);
  return g;
}

/// Train pairs in a seeded order; `salt` gives each augmentation its own draw.
inline std::vector<SentenceGlossPair> shuffled_train(const Corpus& c, uint64_t seed, std::string_view salt) {
  auto train = c.split ? c.subset(SplitClass::train) : c;
  DeterministicRng rng(fnv1a64(salt, seed ^ 0x9e3779b97f4a7c15ULL));
  rng.shuffle(train.pairs);
  return train.pairs;
}

inline size_t scaled(size_t n, double fraction) {
  return static_cast<size_t>(std::llround(static_cast<double>(n) * fraction));
}

struct RuleAugmentReport {
  size_t sources = 0;        // pairs that produced at least one variant
  size_t unknown_tense = 0;  // skipped, tense not detected
  size_t no_rule = 0;        // skipped, no reachable target
  size_t existing = 0;       // variants dropped, sentence already known
  size_t produced = 0;
};

struct RuleAugmentResult {
  Corpus corpus;
  RuleAugmentReport report;
};

/// Expands candidates in order until `target` variants exist; each source
/// contributes at most `per_pair`. Variants whose NFC sentence is in `seen`
/// are dropped; accepted ones are added to it.
inline RuleAugmentResult rule_augment(const std::vector<SentenceGlossPair>& candidates, const RuleSet& rs, size_t target,
                                      size_t per_pair, std::unordered_set<std::string>& seen) {
  RuleAugmentResult r;
  for (const auto& p : candidates) {
    if (r.report.produced >= target) break;
    std::vector<SentenceGlossPair> out;
    try {
      out = expand_pair(p, rs);
    } catch (const Error& e) {
      if (e.code() != Errc::unknown_tense) throw;
      ++r.report.unknown_tense;
      log::pair_event("rule", p.id, "skipped", "unknown_tense");
      continue;
    }
    if (out.empty()) {
      ++r.report.no_rule;
      log::pair_event("rule", p.id, "skipped", "no_rule");
      continue;
    }
    size_t accepted = 0;
    for (auto& v : out) {
      if (accepted >= per_pair || r.report.produced >= target) break;
      if (!seen.insert(unicode::nfc(v.sentence)).second) {
        ++r.report.existing;
        log::pair_event("rule", v.id, "skipped", "existing_sentence");
        continue;
      }
      log::pair_event("rule", v.id, "ok", to_string(*v.tense));
      r.corpus.pairs.push_back(std::move(v));
      ++r.report.produced;
      ++accepted;
    }
    r.report.sources += accepted > 0;
  }
  return r;
}

inline nlohmann::ordered_json to_json(const RuleAugmentReport& r) {
  return {{"sources", r.sources}, {"unknown_tense", r.unknown_tense}, {"no_rule", r.no_rule}, {"existing", r.existing},
          {"produced", r.produced}};
}

struct MaskAugmentResult {
  Corpus corpus;
  MaskReport report;
  size_t existing = 0;  // variants dropped, sentence already known
};

/// Masks candidates chunk by chunk until `target` variants exist. Variants
/// whose NFC sentence is in `seen` are dropped; accepted ones are added.
inline MaskAugmentResult mask_augment(const std::vector<SentenceGlossPair>& candidates, FillMaskBackend& backend,
                                      const MaskOptions& opts, size_t target, std::unordered_set<std::string>& seen) {
  MaskAugmentResult r;
  size_t next = 0;
  while (r.corpus.size() < target && next < candidates.size()) {
    const size_t want = (target - r.corpus.size() + opts.per_pair_k - 1) / opts.per_pair_k;
    Corpus chunk;
    for (; next < candidates.size() && chunk.size() < want; ++next) chunk.pairs.push_back(candidates[next]);
    auto part = batch_mask_augment(chunk, backend, opts);
    auto& a = r.report;
    const auto& b = part.report;
    a.pairs_seen += b.pairs_seen;
    a.eligible += b.eligible;
    a.no_position += b.no_position;
    a.degenerate += b.degenerate;
    a.invalid += b.invalid;
    a.duplicates += b.duplicates;
    a.capped += b.capped;
    a.backend_errors.insert(a.backend_errors.end(), b.backend_errors.begin(), b.backend_errors.end());
    for (auto& v : part.corpus.pairs) {
      if (r.corpus.size() >= target) {
        ++a.capped;
        continue;
      }
      if (!seen.insert(unicode::nfc(v.sentence)).second) {
        ++r.existing;
        log::pair_event("mask", v.id, "skipped", "existing_sentence");
        continue;
      }
      r.corpus.pairs.push_back(std::move(v));
    }
  }
  r.report.produced = r.corpus.size();
  return r;
}

struct PipelineOptions {
  Sleeper sleep = real_sleep;
};

struct PipelineResult {
  Corpus merged;
  nlohmann::ordered_json manifest;
};

inline std::string file_digest(const std::filesystem::path& p) { return hex64(fnv1a64(read_text_file(p))); }

/// split -> index -> rule, mask and RAG augmentation -> merge -> dedupe.
/// Augmentation reads only train pairs; dev and test files are written
/// once and checked unchanged at the end.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, PipelineBackends& be, const PipelineOptions& opts = {}) {
  namespace fs = std::filesystem;
  const auto out = cfg.output;
  fs::create_directories(out / "split");
  fs::create_directories(out / "aug");

  // split
  auto manual = load_corpus(cfg.corpus);
  if (manual.empty()) throw Error(Errc::invalid_argument, "manual corpus is empty: " + cfg.corpus.string());
  for (auto& p : manual.pairs) validate_pair(p);
  manual = split_corpus(manual, cfg.split, true);
  const auto train = manual.subset(SplitClass::train);
  const auto dev = manual.subset(SplitClass::dev);
  const auto test = manual.subset(SplitClass::test);
  write_corpus(train, out / "split/train.jsonl");
  write_corpus(dev, out / "split/dev.jsonl");
  write_corpus(test, out / "split/test.jsonl");
  write_text_file(out / "split/split_map.tsv", format_split_map(manual));
  const auto dev_digest = file_digest(out / "split/dev.jsonl");
  const auto test_digest = file_digest(out / "split/test.jsonl");
  log::info("pipeline_split", {{"train", train.size()}, {"dev", dev.size()}, {"test", test.size()}});

  // index
  BuildOptions bopts;
  bopts.sleep = opts.sleep;
  const auto index = build_index(manual, *be.embedder, bopts);
  save_index(index, out / "index.gfi");

  const auto rules = load_rules(cfg.rules);
  const size_t n = manual.size();

  // every manual sentence, held-out included, so no variant can leak into dev/test
  std::unordered_set<std::string> known;
  for (const auto& p : manual.pairs) known.insert(unicode::nfc(p.sentence));

  // rule-based tense expansion
  auto rule = rule_augment(shuffled_train(manual, cfg.split.seed, "rules"), rules,
                           scaled(n, cfg.rules_fraction) * cfg.rules_per_pair, cfg.rules_per_pair, known);
  write_corpus(rule.corpus, out / "aug/rule.jsonl");

  // masked substitution
  MaskOptions mopts;
  mopts.per_pair_k = cfg.mask_k;
  mopts.stop_list = load_stop_list(cfg.stoplist);
  mopts.concurrency = cfg.concurrency;
  mopts.sleep = opts.sleep;
  auto mask = mask_augment(shuffled_train(manual, cfg.split.seed, "mask"), *be.fillmask, mopts,
                           scaled(n, cfg.mask_fraction) * cfg.mask_k, known);
  write_corpus(mask.corpus, out / "aug/mask.jsonl");

  // retrieval-augmented generation; sources matching a held-out sentence are dropped
  std::unordered_set<std::string> held_out;
  for (const auto* c : {&dev, &test})
    for (const auto& p : c->pairs) held_out.insert(unicode::nfc(p.sentence));
  std::vector<std::string> rag_sources;
  size_t held_out_dropped = 0;
  const size_t rag_target = scaled(n, cfg.rag_source_factor);
  for (auto& s : load_sentences(cfg.rag_sources)) {
    if (rag_sources.size() >= rag_target) break;
    if (held_out.contains(unicode::nfc(s))) {
      ++held_out_dropped;
      log::pair_event("rag", s, "skipped", "held_out_sentence");
      continue;
    }
    rag_sources.push_back(std::move(s));
  }
  BatchResult rag;
  if (!rag_sources.empty()) {
    auto gcfg = generation_config(cfg);
    gcfg.sleep = opts.sleep;
    RagContext ctx{index, train, rules, *be.embedder, *be.llm};
    BatchOptions batch;
    batch.concurrency = cfg.concurrency;
    batch.journal = out / "aug/rag.journal.jsonl";
    rag = batch_augment(rag_sources, ctx, gcfg, batch);
  }
  write_corpus(rag.corpus, out / "aug/rag.jsonl");

  // merge and dedupe; augmented pairs join train
  Corpus merged = manual;
  for (const auto* aug : {&rule.corpus, &mask.corpus, &rag.corpus})
    for (const auto& p : aug->pairs) {
      if (merged.split->contains(p.id)) throw Error(Errc::duplicate_id, "augmented id collides: " + p.id);
      merged.pairs.push_back(p);
      merged.split->emplace(p.id, SplitClass::train);
    }
  auto deduped = dedupe(merged);
  // a held-out pair must never be dropped in favour of an augmented one
  for (const auto* c : {&dev, &test})
    for (const auto& p : c->pairs)
      if (!deduped.corpus.find(p.id)) throw Error(Errc::invalid_argument, "dedupe removed held-out pair " + p.id);
  write_corpus(deduped.corpus, out / "merged.jsonl");
  write_text_file(out / "merged_split.tsv", format_split_map(deduped.corpus));
  write_corpus(deduped.corpus.subset(SplitClass::train), out / "train_augmented.jsonl");

  // manifest
  std::map<std::string, size_t> by_prov{{"manual", 0}, {"rule_tense", 0}, {"mask_subst", 0}, {"rag", 0}};
  std::map<std::string, size_t> modes{{"few_shot", 0}, {"rule_fallback", 0}};
  for (const auto& p : deduped.corpus.pairs) {
    ++by_prov[std::string(to_string(p.provenance))];
    if (p.provenance == Provenance::rag) ++modes[p.meta.at("mode")];
  }
  const size_t augmented = deduped.corpus.size() - by_prov["manual"];
  nlohmann::ordered_json rag_errors = nlohmann::ordered_json::array();
  for (const auto& e : rag.errors)
    rag_errors.push_back({{"index", e.index}, {"sentence", e.sentence}, {"code", e.code}, {"reason", e.reason}});

  const bool unchanged = file_digest(out / "split/dev.jsonl") == dev_digest && file_digest(out / "split/test.jsonl") == test_digest;
  nlohmann::ordered_json m;
  m["manual"] = by_prov["manual"];
  m["augmented"] = augmented;
  m["total"] = deduped.corpus.size();
  m["ratio"] = by_prov["manual"] ? static_cast<double>(augmented) / static_cast<double>(by_prov["manual"]) : 0.0;
  m["counts"] = by_prov;
  m["split"] = {{"train", train.size()}, {"dev", dev.size()}, {"test", test.size()}, {"seed", cfg.split.seed}};
  m["dedupe_removed"] = deduped.removed;
  m["rules"] = to_json(rule.report);
  m["mask"] = to_json(mask.report);
  m["mask"]["existing"] = mask.existing;
  m["rag"] = {{"sources", rag_sources.size()},
              {"held_out_dropped", held_out_dropped},
              {"produced", rag.corpus.size()},
              {"resumed", rag.resumed},
              {"modes", modes},
              {"errors", rag_errors}};
  m["backends"] = {{"embed", be.embedder->name()}, {"llm", cfg.llm.model}, {"fillmask", cfg.fillmask.kind == BackendKind::mock ? "mock-vocabulary" : "http"}};
  m["held_out"] = {{"dev", {{"path", "split/dev.jsonl"}, {"fnv1a64", dev_digest}}},
                   {"test", {{"path", "split/test.jsonl"}, {"fnv1a64", test_digest}}},
                   {"unchanged", unchanged}};
  write_text_file(out / "manifest.json", m.dump(2) + "\n");
  if (!unchanged) throw Error(Errc::invalid_argument, "held-out files changed during the pipeline");
  log::info("pipeline_done", {{"manual", by_prov["manual"]}, {"augmented", augmented}});
  return {std::move(deduped.corpus), std::move(m)};
}

}  // namespace glossforge
