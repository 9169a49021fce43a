#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "glossforge/corpus.hpp"
#include "glossforge/error.hpp"
#include "glossforge/http.hpp"
#include "glossforge/log.hpp"
#include "glossforge/retry.hpp"
#include "glossforge/rng.hpp"
#include "glossforge/unicode.hpp"
#include "glossforge/worker_pool.hpp"

namespace glossforge {

inline constexpr std::string_view kMaskToken = "[MASK]";

using StopList = std::set<std::string, std::less<>>;

/// One token per line in file order; blank lines are ignored. Tokens are
/// NFC-normalized.
inline std::vector<std::string> load_token_list(const std::filesystem::path& path) {
  std::vector<std::string> out;
  std::istringstream in(read_text_file(path));
  size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    auto tok = unicode::trim(unicode::nfc(line));
    if (tok.empty()) continue;
    if (unicode::contains_whitespace(tok))
      throw Error(Errc::parse, path.string() + ":" + std::to_string(lineno) + ": expected a single token");
    out.push_back(std::move(tok));
  }
  return out;
}

inline StopList load_stop_list(const std::filesystem::path& path) {
  auto toks = load_token_list(path);
  return {toks.begin(), toks.end()};
}

struct MaskTemplate {
  std::string source_pair_id;
  std::vector<std::string> sentence_tokens;  // exactly one kMaskToken
  size_t mask_index = 0;
  std::string mask_punct;  // punctuation that followed the masked word
  std::vector<std::string> gloss_tokens;
  std::vector<size_t> gloss_mask_positions;
  std::string original_token;

  bool operator==(const MaskTemplate&) const = default;

  /// Sentence text with the placeholder in place, as sent to the backend.
  std::string masked_text() const {
    std::string out;
    for (size_t i = 0; i < sentence_tokens.size(); ++i) {
      if (i) out += ' ';
      out += sentence_tokens[i];
      if (i == mask_index) out += mask_punct;
    }
    return out;
  }
};

/// Masks sentence token `index`. The word (without trailing punctuation)
/// must occur verbatim in the gloss and must not be stop-listed.
inline MaskTemplate make_template(const SentenceGlossPair& p, size_t index, const StopList& stop_list = {}) {
  auto tokens = unicode::split_whitespace(unicode::nfc(p.sentence));
  if (index >= tokens.size())
    throw Error(Errc::invalid_argument, "pair \"" + p.id + "\": token index " + std::to_string(index) + " out of range (" +
                                            std::to_string(tokens.size()) + " tokens)");
  auto [word, punct] = unicode::split_trailing_punct(tokens[index]);
  if (word.empty()) throw Error(Errc::not_maskable, "pair \"" + p.id + "\": token " + std::to_string(index) + " is punctuation");
  if (stop_list.contains(word)) throw Error(Errc::not_maskable, "pair \"" + p.id + "\": \"" + word + "\" is in the stop-list");
  MaskTemplate t;
  for (size_t g = 0; g < p.gloss.size(); ++g)
    if (p.gloss[g] == word) t.gloss_mask_positions.push_back(g);
  if (t.gloss_mask_positions.empty())
    throw Error(Errc::not_alignable, "pair \"" + p.id + "\": \"" + word + "\" does not occur in the gloss");
  t.source_pair_id = p.source_pair_id.value_or(p.id);
  t.mask_index = index;
  t.mask_punct = std::move(punct);
  t.original_token = std::move(word);
  tokens[index] = std::string(kMaskToken);
  t.sentence_tokens = std::move(tokens);
  t.gloss_tokens = p.gloss;
  return t;
}

inline SentenceGlossPair substitute(const MaskTemplate& t, std::string_view candidate_raw,
                                    std::optional<Tense> tense = std::nullopt) {
  const std::string candidate = unicode::nfc(candidate_raw);
  if (candidate.empty() || unicode::contains_whitespace(candidate))
    throw Error(Errc::invalid_argument, "candidate must be a single non-empty token");
  if (candidate == kMaskToken) throw Error(Errc::invalid_argument, "candidate is the mask placeholder");
  if (candidate == t.original_token)
    throw Error(Errc::degenerate, "candidate \"" + candidate + "\" equals the masked token");
  SentenceGlossPair p;
  p.id = t.source_pair_id + "~mask" + std::to_string(t.mask_index) + "-" + hex64(fnv1a64(candidate)).substr(0, 8);
  for (size_t i = 0; i < t.sentence_tokens.size(); ++i) {
    if (i) p.sentence += ' ';
    p.sentence += i == t.mask_index ? candidate + t.mask_punct : t.sentence_tokens[i];
  }
  p.gloss = t.gloss_tokens;
  for (size_t g : t.gloss_mask_positions) p.gloss.at(g) = candidate;
  p.provenance = Provenance::mask_subst;
  p.tense = tense;
  p.source_pair_id = t.source_pair_id;
  p.meta["masked_index"] = std::to_string(t.mask_index);
  p.meta["original"] = t.original_token;
  p.meta["candidate"] = candidate;
  return p;
}

/// Maskable sentence positions, longest word first (code points), then
/// by position.
inline std::vector<size_t> rank_mask_positions(const SentenceGlossPair& p, const StopList& stop_list = {}) {
  auto tokens = unicode::split_whitespace(unicode::nfc(p.sentence));
  std::vector<std::pair<size_t, size_t>> scored;  // (length, index)
  for (size_t i = 0; i < tokens.size(); ++i) {
    auto word = unicode::split_trailing_punct(tokens[i]).first;
    if (word.empty() || stop_list.contains(word)) continue;
    if (std::find(p.gloss.begin(), p.gloss.end(), word) == p.gloss.end()) continue;
    scored.emplace_back(unicode::code_points(word).size(), i);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<size_t> out;
  for (const auto& s : scored) out.push_back(s.second);
  return out;
}

// ---------------------------------------------------------------------------
// Backends

struct FillCandidate {
  std::string token;
  double score = 0;

  bool operator==(const FillCandidate&) const = default;
};

class FillMaskBackend {
 public:
  virtual ~FillMaskBackend() = default;
  /// At most k candidates, best first.
  virtual std::vector<FillCandidate> candidates(const std::string& masked_sentence, size_t k) = 0;
};

/// Looks up the masked sentence in a fixed table.
class TableFillMask : public FillMaskBackend {
 public:
  explicit TableFillMask(std::map<std::string, std::vector<FillCandidate>> table) : table_(std::move(table)) {}
  std::vector<FillCandidate> candidates(const std::string& masked, size_t k) override {
    auto it = table_.find(masked);
    if (it == table_.end()) return {};
    std::vector<FillCandidate> out(it->second.begin(), it->second.begin() + static_cast<std::ptrdiff_t>(std::min(k, it->second.size())));
    return out;
  }

 private:
  std::map<std::string, std::vector<FillCandidate>> table_;
};

/// Proposes words from a fixed vocabulary, ordered by a hash of the masked
/// context so every context gets a different but repeatable ranking.
class VocabularyFillMask : public FillMaskBackend {
 public:
  explicit VocabularyFillMask(std::vector<std::string> vocabulary) : vocab_(std::move(vocabulary)) {
    if (vocab_.empty()) throw Error(Errc::invalid_argument, "empty fill-mask vocabulary");
  }
  std::vector<FillCandidate> candidates(const std::string& masked, size_t k) override {
    std::vector<size_t> order(vocab_.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    DeterministicRng rng(fnv1a64(unicode::nfc(masked)));
    rng.shuffle(order);
    std::vector<FillCandidate> out;
    for (size_t i = 0; i < std::min(k, order.size()); ++i) out.push_back({vocab_[order[i]], 1.0 / static_cast<double>(i + 1)});
    return out;
  }

 private:
  std::vector<std::string> vocab_;
};

/// POST {"text_with_mask", "top_k"} -> {"candidates": [{"token", "score"}]}.
class HttpFillMask : public FillMaskBackend {
 public:
  HttpFillMask(const std::string& url, std::optional<std::string> token,
               std::chrono::milliseconds timeout = std::chrono::seconds{30})
      : client_(url, std::move(token), timeout) {}

  std::vector<FillCandidate> candidates(const std::string& masked, size_t k) override {
    auto res = client_.post({{"text_with_mask", masked}, {"top_k", k}});
    if (!res.contains("candidates") || !res["candidates"].is_array())
      throw Error(Errc::backend, "fill-mask response lacks \"candidates\" array");
    std::vector<FillCandidate> out;
    for (const auto& c : res["candidates"]) {
      FillCandidate fc;
      try {
        fc = {c.at("token").get<std::string>(), c.at("score").get<double>()};
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::backend, std::string("malformed fill-mask candidate: ") + e.what());
      }
      if (!std::isfinite(fc.score)) throw Error(Errc::backend, "fill-mask candidate has a non-finite score");
      out.push_back(std::move(fc));
    }
    if (out.size() > k) out.resize(k);
    return out;
  }

 private:
  http::JsonClient client_;
};

// ---------------------------------------------------------------------------
// Batch

struct MaskOptions {
  size_t per_pair_k = 2;
  StopList stop_list;
  /// Stop after this many variants in corpus order.
  std::optional<size_t> max_total;
  size_t concurrency = 4;
  RetryPolicy retry;
  Sleeper sleep = real_sleep;
};

struct MaskReport {
  size_t pairs_seen = 0;
  size_t eligible = 0;        // had at least one maskable position
  size_t produced = 0;
  size_t no_position = 0;     // nothing maskable
  size_t degenerate = 0;      // candidates equal to the original token
  size_t invalid = 0;         // empty or multi-word candidates
  size_t duplicates = 0;      // sentence already in the corpus or produced earlier
  size_t capped = 0;          // dropped by max_total
  std::vector<std::pair<std::string, std::string>> backend_errors;  // (pair id, reason)
};

inline nlohmann::ordered_json to_json(const MaskReport& r) {
  nlohmann::ordered_json errs = nlohmann::ordered_json::array();
  for (const auto& [id, why] : r.backend_errors) errs.push_back({{"id", id}, {"reason", why}});
  return {{"pairs_seen", r.pairs_seen}, {"eligible", r.eligible},     {"produced", r.produced},
          {"no_position", r.no_position}, {"degenerate", r.degenerate}, {"invalid", r.invalid},
          {"duplicates", r.duplicates}, {"capped", r.capped},           {"backend_errors", errs}};
}

struct MaskResult {
  Corpus corpus;
  MaskReport report;
};

/// Up to per_pair_k variants per pair, trying positions in rank order until
/// enough candidates are accepted. Variants whose sentence already exists
/// (in `c` or earlier in the output) are dropped.
inline MaskResult batch_mask_augment(const Corpus& c, FillMaskBackend& backend, const MaskOptions& opts = {}) {
  if (opts.per_pair_k < 1) throw Error(Errc::config, "per_pair_k must be at least 1");

  struct PerPair {
    std::vector<SentenceGlossPair> variants;
    size_t degenerate = 0, invalid = 0;
    bool eligible = false;
    std::optional<std::string> error;
  };
  std::vector<PerPair> work(c.size());

  parallel_for(c.size(), opts.concurrency, [&](size_t i) {
    const auto& p = c.pairs[i];
    auto& out = work[i];
    const auto positions = rank_mask_positions(p, opts.stop_list);
    out.eligible = !positions.empty();
    std::set<std::string> seen;
    try {
      for (size_t pos : positions) {
        if (out.variants.size() >= opts.per_pair_k) break;
        const auto t = make_template(p, pos, opts.stop_list);
        const auto masked = t.masked_text();
        auto cands = with_retry(opts.retry, "fill-mask", [&] { return backend.candidates(masked, opts.per_pair_k); }, opts.sleep);
        for (const auto& cand : cands) {
          if (out.variants.size() >= opts.per_pair_k) break;
          try {
            auto v = substitute(t, cand.token, p.tense);
            if (!seen.insert(v.sentence).second) continue;
            out.variants.push_back(std::move(v));
          } catch (const Error& e) {
            (e.code() == Errc::degenerate ? out.degenerate : out.invalid)++;
          }
        }
      }
    } catch (const Error& e) {
      if (e.code() != Errc::backend) throw;
      out.error = e.what();
      out.variants.clear();
    }
  });

  MaskResult r;
  std::unordered_set<std::string> sentences;
  for (const auto& p : c.pairs) sentences.insert(unicode::nfc(p.sentence));
  std::unordered_set<std::string> ids;
  for (const auto& p : c.pairs) ids.insert(p.id);
  r.report.pairs_seen = c.size();
  for (size_t i = 0; i < c.size(); ++i) {
    auto& w = work[i];
    const auto& id = c.pairs[i].id;
    if (w.error) {
      r.report.backend_errors.emplace_back(id, *w.error);
      log::pair_event("mask", id, "error", *w.error);
      continue;
    }
    r.report.eligible += w.eligible;
    r.report.no_position += !w.eligible;
    r.report.degenerate += w.degenerate;
    r.report.invalid += w.invalid;
    size_t accepted = 0;
    for (auto& v : w.variants) {
      if (sentences.contains(v.sentence) || ids.contains(v.id)) {
        ++r.report.duplicates;
        continue;
      }
      if (opts.max_total && r.corpus.size() >= *opts.max_total) {
        ++r.report.capped;
        continue;
      }
      sentences.insert(v.sentence);
      ids.insert(v.id);
      r.corpus.pairs.push_back(std::move(v));
      ++accepted;
    }
    log::pair_event("mask", id, w.eligible ? "ok" : "skipped", std::to_string(accepted) + " variants");
  }
  r.report.produced = r.corpus.size();
  return r;
}

}  // namespace glossforge
