#pragma once

#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "glossforge/corpus.hpp"
#include "glossforge/error.hpp"
#include "glossforge/http.hpp"
#include "glossforge/log.hpp"
#include "glossforge/retrieval.hpp"
#include "glossforge/retry.hpp"
#include "glossforge/rng.hpp"
#include "glossforge/ruleset.hpp"
#include "glossforge/unicode.hpp"
#include "glossforge/worker_pool.hpp"

namespace glossforge {

// ---------------------------------------------------------------------------
// Templates

struct PromptTemplates {
  std::string tense_system =
      "You are a linguist who identifies the grammatical tense of Bangla sentences.\n";
  std::string tense_user =
      "Identify the tense of the Bangla sentence below. Answer with exactly one word from: "
      "present, past, future, present_continuous, past_continuous, unknown.\n"
      "\n"
      "Sentence: {{sentence}}\n"
      "Tense:";
  std::string gloss_system =
      "You translate Bangla sentences into Bangla Sign Language glosses. A gloss is a sequence of "
      "space-separated tokens in sign order; verbs appear in root form followed by tense markers.\n";
  std::string gloss_user_few_shot =
      "Here are annotated examples of sentences and their glosses:\n"
      "\n"
      "{{examples}}\n"
      "The sentence below is in the {{tense}} tense. Write its gloss following the examples. "
      "Reply with the gloss tokens on a single line and nothing else.\n"
      "\n"
      "Sentence: {{sentence}}\n"
      "Gloss:";
  std::string gloss_user_rules =
      "The sentence below is in the {{tense}} tense. These rules show how verbs of that tense map to "
      "gloss tokens (ROOT stands for the verb stem):\n"
      "\n"
      "{{rules}}\n"
      "Write the gloss of the sentence. Reply with the gloss tokens on a single line and nothing else.\n"
      "\n"
      "Sentence: {{sentence}}\n"
      "Gloss:";

  static constexpr std::string_view kFileNames[] = {"tense_system.txt", "tense_user.txt", "gloss_system.txt",
                                                    "gloss_user_few_shot.txt", "gloss_user_rules.txt"};

  std::string* slot(std::string_view file) {
    if (file == kFileNames[0]) return &tense_system;
    if (file == kFileNames[1]) return &tense_user;
    if (file == kFileNames[2]) return &gloss_system;
    if (file == kFileNames[3]) return &gloss_user_few_shot;
    if (file == kFileNames[4]) return &gloss_user_rules;
    return nullptr;
  }
};

/// Built-in templates overridden by any of the named files present in `dir`.
inline PromptTemplates load_templates(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(Errc::config, "prompt template directory not found: " + dir.string());
  PromptTemplates t;
  for (auto name : PromptTemplates::kFileNames) {
    const auto path = dir / name;
    if (std::filesystem::exists(path)) *t.slot(name) = read_text_file(path);
  }
  return t;
}

/// Replaces every {{name}} in one pass; substituted text is never rescanned.
/// Unknown placeholders are an error.
inline std::string render_template(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& vars) {
  std::string out;
  size_t i = 0;
  while (i < tmpl.size()) {
    const auto open = tmpl.find("{{", i);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(i));
      break;
    }
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) throw Error(Errc::config, "unterminated placeholder in prompt template");
    out.append(tmpl.substr(i, open - i));
    const auto name = tmpl.substr(open + 2, close - open - 2);
    auto it = vars.find(name);
    if (it == vars.end()) throw Error(Errc::config, "unknown placeholder {{" + std::string(name) + "}} in prompt template");
    out += it->second;
    i = close + 2;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bundles

enum class PromptStage { tense_id, gloss_gen };
enum class PromptMode { few_shot, rule_fallback };

constexpr std::string_view to_string(PromptStage s) { return s == PromptStage::tense_id ? "tense_id" : "gloss_gen"; }
constexpr std::string_view to_string(PromptMode m) { return m == PromptMode::few_shot ? "few_shot" : "rule_fallback"; }

struct PromptBundle {
  PromptStage stage = PromptStage::tense_id;
  std::optional<PromptMode> mode;  // unset for tense_id
  std::string system;
  std::string user;
  std::vector<std::string> included_example_ids;
  std::vector<std::string> included_rule_ids;

  bool operator==(const PromptBundle&) const = default;
};

inline nlohmann::ordered_json to_json(const PromptBundle& b) {
  nlohmann::ordered_json j;
  j["stage"] = to_string(b.stage);
  j["mode"] = b.mode ? nlohmann::ordered_json(to_string(*b.mode)) : nlohmann::ordered_json(nullptr);
  j["system"] = b.system;
  j["user"] = b.user;
  j["included_example_ids"] = b.included_example_ids;
  j["included_rule_ids"] = b.included_rule_ids;
  return j;
}

inline PromptBundle build_tense_prompt(std::string_view sentence, const PromptTemplates& t = {}) {
  const std::string s = unicode::trim(unicode::nfc(sentence));
  if (s.empty()) throw Error(Errc::invalid_argument, "empty sentence");
  PromptBundle b;
  b.stage = PromptStage::tense_id;
  b.system = t.tense_system;
  b.user = render_template(t.tense_user, {{"sentence", s}});
  return b;
}

/// First tense keyword in the text, case-insensitively; at equal positions
/// the longer keyword wins so "present continuous" beats "present".
inline Tense parse_tense_response(std::string_view text) {
  std::string lower(text);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  static const std::pair<std::string_view, Tense> kKeywords[] = {
      {"present_continuous", Tense::present_continuous}, {"present continuous", Tense::present_continuous},
      {"present-continuous", Tense::present_continuous}, {"past_continuous", Tense::past_continuous},
      {"past continuous", Tense::past_continuous},       {"past-continuous", Tense::past_continuous},
      {"present", Tense::present},                       {"past", Tense::past},
      {"future", Tense::future},                         {"unknown", Tense::unknown},
  };
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  size_t best_pos = std::string::npos, best_len = 0;
  Tense best = Tense::unknown;
  for (const auto& [kw, tense] : kKeywords) {
    for (size_t pos = lower.find(kw); pos != std::string::npos; pos = lower.find(kw, pos + 1)) {
      const bool left_ok = pos == 0 || !is_word(lower[pos - 1]);
      const size_t end = pos + kw.size();
      const bool right_ok = end == lower.size() || !is_word(lower[end]);
      if (!left_ok || !right_ok) continue;
      if (pos < best_pos || (pos == best_pos && kw.size() > best_len)) {
        best_pos = pos;
        best_len = kw.size();
        best = tense;
      }
      break;
    }
  }
  return best;
}

inline std::string join_tokens(const std::vector<std::string>& toks) {
  std::string out;
  for (size_t i = 0; i < toks.size(); ++i) out += (i ? " " : "") + toks[i];
  return out;
}

/// Few-shot when retrieval met min_examples, otherwise the tense rules.
/// `examples` resolves match ids to their annotated pairs.
inline PromptBundle build_gloss_prompt(std::string_view sentence, const RetrievalResult& rr, const RuleSet& rs, Tense tense,
                                       const Corpus& examples, const PromptTemplates& t = {}) {
  const std::string s = unicode::trim(unicode::nfc(sentence));
  if (s.empty()) throw Error(Errc::invalid_argument, "empty sentence");
  PromptBundle b;
  b.stage = PromptStage::gloss_gen;
  b.system = t.gloss_system;
  const std::string tense_name(to_string(tense));
  if (!rr.fallback_needed) {
    b.mode = PromptMode::few_shot;
    std::string block;
    for (const auto& m : rr.matches) {
      const auto* p = examples.find(m.id);
      if (!p) throw Error(Errc::invalid_argument, "retrieved example \"" + m.id + "\" not found in the example corpus");
      if (!block.empty()) block += "\n";
      block += "Sentence: " + p->sentence + "\nGloss: " + join_tokens(p->gloss) + "\n";
      b.included_example_ids.push_back(m.id);
    }
    b.user = render_template(t.gloss_user_few_shot, {{"examples", block}, {"sentence", s}, {"tense", tense_name}});
  } else {
    b.mode = PromptMode::rule_fallback;
    std::string block;
    for (const auto* r : rules_for_tense(rs, tense)) {
      block += format_rule(*r) + "\n";
      b.included_rule_ids.push_back(r->rule_id);
    }
    b.user = render_template(t.gloss_user_rules, {{"rules", block}, {"sentence", s}, {"tense", tense_name}});
  }
  return b;
}

// ---------------------------------------------------------------------------
// Chat backends

struct GenerationParams {
  std::string model_id = "mock";
  double temperature = 0.0;
  int max_output_tokens = 256;
  std::chrono::milliseconds timeout{60000};
};

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual std::string complete(const std::string& system, const std::string& user, const GenerationParams& params) = 0;
};

/// Chat-completions wire shape: {model, messages, temperature, max_tokens}
/// -> {choices:[{message:{content}}]}.
class HttpLlm : public LlmBackend {
 public:
  HttpLlm(const std::string& url, std::optional<std::string> key) : url_(url), key_(std::move(key)) {}

  static nlohmann::json request_body(const std::string& system, const std::string& user, const GenerationParams& p) {
    return {{"model", p.model_id},
            {"messages", {{{"role", "system"}, {"content", system}}, {{"role", "user"}, {"content", user}}}},
            {"temperature", p.temperature},
            {"max_tokens", p.max_output_tokens}};
  }

  std::string complete(const std::string& system, const std::string& user, const GenerationParams& params) override {
    http::JsonClient client(url_, key_, params.timeout);
    auto res = client.post(request_body(system, user, params));
    try {
      return res.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw Error(Errc::backend, "chat backend " + url_ + " returned an unexpected response shape");
    }
  }

 private:
  std::string url_;
  std::optional<std::string> key_;
};

/// Offline stand-in that reads the default prompt layout. Stage 1 answers
/// with the rule-detected tense; stage 2 echoes the first example gloss, or
/// the target sentence's tokens (punctuation stripped) without examples.
class EchoLlm : public LlmBackend {
 public:
  explicit EchoLlm(RuleSet rs = {}) : rs_(std::move(rs)) {}

  std::string complete(const std::string&, const std::string& user, const GenerationParams&) override {
    ++calls_;
    std::vector<std::string> lines;
    std::istringstream in(user);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    std::string target;
    for (const auto& l : lines)
      if (l.rfind("Sentence: ", 0) == 0) target = l.substr(10);
    if (unicode::trim(user).ends_with("Tense:")) return std::string(to_string(detect_tense(target, rs_)));
    for (const auto& l : lines)
      if (l.rfind("Gloss: ", 0) == 0 && l.size() > 7) return l.substr(7);
    std::string out;
    for (const auto& tok : unicode::split_whitespace(target)) {
      auto body = unicode::split_trailing_punct(tok).first;
      if (!body.empty()) out += (out.empty() ? "" : " ") + body;
    }
    return out;
  }

  int calls() const { return calls_.load(); }

 private:
  RuleSet rs_;
  std::atomic<int> calls_{0};
};

/// Delegates to a callable; for scripted and failing backends in tests.
class FunctionLlm : public LlmBackend {
 public:
  using Fn = std::function<std::string(const std::string& system, const std::string& user)>;
  explicit FunctionLlm(Fn fn) : fn_(std::move(fn)) {}
  std::string complete(const std::string& system, const std::string& user, const GenerationParams&) override {
    return fn_(system, user);
  }

 private:
  Fn fn_;
};

// ---------------------------------------------------------------------------
// Generation

struct RagContext {
  const EmbeddingIndex& index;
  const Corpus& examples;  // pairs the index entries refer to
  const RuleSet& rules;
  EmbedderBackend& embedder;
  LlmBackend& llm;
};

struct GenerationConfig {
  RetrievalConfig retrieval;
  GenerationParams params;
  PromptTemplates templates;
  RetryPolicy retry;
  Sleeper sleep = real_sleep;
  bool exclude_self = true;
};

/// Gloss tokens from the last non-empty line; a leading "Gloss:" is dropped.
inline std::vector<std::string> parse_gloss_response(std::string_view text) {
  std::string last;
  std::istringstream in{std::string(text)};
  for (std::string l; std::getline(in, l);)
    if (!unicode::trim(l).empty()) last = l;
  auto toks = unicode::split_whitespace(unicode::nfc(last));
  if (!toks.empty() && (toks.front() == "Gloss:" || toks.front() == "gloss:")) toks.erase(toks.begin());
  return toks;
}

inline std::string rag_pair_id(std::string_view sentence) {
  return "rag-" + hex64(fnv1a64(unicode::trim(unicode::nfc(sentence))));
}

struct GenerationTrace {
  PromptBundle tense_prompt;
  PromptBundle gloss_prompt;
  RetrievalResult retrieval;
};

inline SentenceGlossPair generate_gloss(std::string_view sentence, const RagContext& ctx, const GenerationConfig& cfg,
                                        GenerationTrace* trace = nullptr) {
  const std::string s = unicode::trim(unicode::nfc(sentence));
  if (s.empty()) throw Error(Errc::invalid_argument, "empty source sentence");

  auto tense_prompt = build_tense_prompt(s, cfg.templates);
  const auto tense_text = with_retry(cfg.retry, "tense prompt",
                                     [&] { return ctx.llm.complete(tense_prompt.system, tense_prompt.user, cfg.params); }, cfg.sleep);
  const Tense tense = parse_tense_response(tense_text);

  auto rr = with_retry(cfg.retry, "retrieval",
                       [&] { return query_index(ctx.index, s, cfg.retrieval, ctx.embedder, {.exclude_self = cfg.exclude_self}); },
                       cfg.sleep);
  auto gloss_prompt = build_gloss_prompt(s, rr, ctx.rules, tense, ctx.examples, cfg.templates);
  const auto gloss_text = with_retry(cfg.retry, "gloss prompt",
                                     [&] { return ctx.llm.complete(gloss_prompt.system, gloss_prompt.user, cfg.params); }, cfg.sleep);
  auto gloss = parse_gloss_response(gloss_text);
  if (gloss.empty()) throw Error(Errc::empty_generation, "model returned no gloss tokens");

  SentenceGlossPair p;
  p.id = rag_pair_id(s);
  p.sentence = s;
  p.gloss = std::move(gloss);
  p.provenance = Provenance::rag;
  p.tense = tense;
  p.meta["mode"] = std::string(to_string(*gloss_prompt.mode));
  p.meta["match_count"] = std::to_string(rr.matches.size());
  p.meta["model_id"] = cfg.params.model_id;
  if (!gloss_prompt.included_example_ids.empty()) {
    std::string ids;
    for (const auto& id : gloss_prompt.included_example_ids) ids += (ids.empty() ? "" : ",") + id;
    p.meta["example_ids"] = ids;
  }
  validate_pair(p);
  if (trace) *trace = {std::move(tense_prompt), std::move(gloss_prompt), std::move(rr)};
  return p;
}

struct BatchError {
  size_t index = 0;
  std::string sentence;
  std::string code;
  std::string reason;
};

struct BatchResult {
  Corpus corpus;
  std::vector<BatchError> errors;
  size_t resumed = 0;
};

inline nlohmann::ordered_json to_json(const BatchError& e) {
  return {{"index", e.index}, {"sentence", e.sentence}, {"code", e.code}, {"reason", e.reason}};
}

struct BatchOptions {
  size_t concurrency = 4;
  /// Append-only JSONL of completed pairs; existing entries are reused.
  std::optional<std::filesystem::path> journal;
};

/// Generates one pair per source sentence. Output order follows input
/// order; failures are reported, not thrown. Repeated sentences are
/// reported as duplicates after their first occurrence.
inline BatchResult batch_augment(const std::vector<std::string>& sources, const RagContext& ctx, const GenerationConfig& cfg,
                                 const BatchOptions& opts = {}) {
  if (sources.empty()) throw Error(Errc::invalid_argument, "no source sentences");

  std::unordered_map<std::string, SentenceGlossPair> done;
  if (opts.journal && std::filesystem::exists(*opts.journal)) {
    std::istringstream in(read_text_file(*opts.journal));
    size_t lineno = 0;
    for (std::string line; std::getline(in, line);) {
      ++lineno;
      if (unicode::trim(line).empty()) continue;
      try {
        auto p = pair_from_json(nlohmann::json::parse(line));
        done.insert_or_assign(p.id, std::move(p));
      } catch (const std::exception& e) {
        // A torn final line from an interrupted run is expected; skip it.
        log::warn("journal_line_skipped", {{"journal", opts.journal->string()}, {"line", lineno}, {"error", e.what()}});
      }
    }
  }

  std::ofstream journal;
  if (opts.journal) {
    // A torn last line is followed by a newline so new records start clean.
    const bool needs_newline = std::filesystem::exists(*opts.journal) && std::filesystem::file_size(*opts.journal) > 0 &&
                               read_text_file(*opts.journal).back() != '\n';
    journal.open(*opts.journal, std::ios::binary | std::ios::app);
    if (!journal) throw Error(Errc::io, "cannot open journal: " + opts.journal->string());
    if (needs_newline) journal << '\n';
  }
  std::mutex journal_mu;

  const size_t n = sources.size();
  std::vector<std::optional<SentenceGlossPair>> results(n);
  std::vector<std::optional<BatchError>> failures(n);
  std::vector<char> todo(n, 0);
  std::unordered_map<std::string, size_t> first_seen;
  BatchResult out;
  for (size_t i = 0; i < n; ++i) {
    const std::string id = rag_pair_id(sources[i]);
    if (unicode::trim(sources[i]).empty()) {
      failures[i] = BatchError{i, sources[i], "invalid_argument", "empty source sentence"};
      continue;
    }
    if (auto [it, inserted] = first_seen.emplace(id, i); !inserted) {
      failures[i] = BatchError{i, sources[i], "duplicate_id", "same sentence as source " + std::to_string(it->second)};
      continue;
    }
    if (auto it = done.find(id); it != done.end()) {
      results[i] = it->second;
      ++out.resumed;
      log::pair_event("rag", id, "resumed");
      continue;
    }
    todo[i] = 1;
  }

  std::vector<size_t> work;
  for (size_t i = 0; i < n; ++i)
    if (todo[i]) work.push_back(i);
  parallel_for(work.size(), opts.concurrency, [&](size_t k) {
    const size_t i = work[k];
    try {
      auto p = generate_gloss(sources[i], ctx, cfg);
      if (journal.is_open()) {
        const std::string line = to_json(p).dump() + "\n";
        std::lock_guard lock(journal_mu);
        journal << line;
        journal.flush();
      }
      log::pair_event("rag", p.id, "ok", p.meta["mode"]);
      results[i] = std::move(p);
    } catch (const Error& e) {
      failures[i] = BatchError{i, sources[i], std::string(to_string(e.code())), e.what()};
      log::pair_event("rag", rag_pair_id(sources[i]), "error", e.what());
    } catch (const std::exception& e) {
      failures[i] = BatchError{i, sources[i], "internal", e.what()};
      log::pair_event("rag", rag_pair_id(sources[i]), "error", e.what());
    }
  });

  for (size_t i = 0; i < n; ++i) {
    if (results[i]) out.corpus.pairs.push_back(std::move(*results[i]));
    if (failures[i]) out.errors.push_back(std::move(*failures[i]));
  }
  return out;
}

/// One sentence per non-blank line, NFC-normalized and trimmed.
inline std::vector<std::string> load_sentences(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  if (!unicode::is_valid_utf8(text)) throw Error(Errc::parse, path.string() + ": not valid UTF-8");
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    auto s = unicode::trim(unicode::nfc(line));
    if (!s.empty()) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace glossforge
