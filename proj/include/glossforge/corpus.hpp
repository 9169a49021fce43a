#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "glossforge/error.hpp"
#include "glossforge/rng.hpp"
#include "glossforge/unicode.hpp"

namespace glossforge {

enum class Provenance { manual, rule_tense, mask_subst, rag };

enum class Tense { present, past, future, present_continuous, past_continuous, unknown };

inline constexpr Tense kAllTenses[] = {Tense::present, Tense::past, Tense::future, Tense::present_continuous,
                                       Tense::past_continuous, Tense::unknown};

enum class SplitClass { train, dev, test };

enum class CorpusFormat { jsonl, tsv };

constexpr std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::manual: return "manual";
    case Provenance::rule_tense: return "rule_tense";
    case Provenance::mask_subst: return "mask_subst";
    case Provenance::rag: return "rag";
  }
  return "manual";
}

constexpr std::string_view to_string(Tense t) {
  switch (t) {
    case Tense::present: return "present";
    case Tense::past: return "past";
    case Tense::future: return "future";
    case Tense::present_continuous: return "present_continuous";
    case Tense::past_continuous: return "past_continuous";
    case Tense::unknown: return "unknown";
  }
  return "unknown";
}

constexpr std::string_view to_string(SplitClass s) {
  switch (s) {
    case SplitClass::train: return "train";
    case SplitClass::dev: return "dev";
    case SplitClass::test: return "test";
  }
  return "train";
}

inline std::optional<Provenance> parse_provenance(std::string_view s) {
  for (auto p : {Provenance::manual, Provenance::rule_tense, Provenance::mask_subst, Provenance::rag})
    if (to_string(p) == s) return p;
  return std::nullopt;
}

inline std::optional<Tense> parse_tense(std::string_view s) {
  for (auto t : kAllTenses)
    if (to_string(t) == s) return t;
  return std::nullopt;
}

inline std::optional<SplitClass> parse_split_class(std::string_view s) {
  for (auto c : {SplitClass::train, SplitClass::dev, SplitClass::test})
    if (to_string(c) == s) return c;
  return std::nullopt;
}

inline CorpusFormat format_from_path(const std::filesystem::path& p) {
  return p.extension() == ".tsv" ? CorpusFormat::tsv : CorpusFormat::jsonl;
}

struct SentenceGlossPair {
  std::string id;
  std::string sentence;
  std::vector<std::string> gloss;
  Provenance provenance = Provenance::manual;
  std::optional<Tense> tense;
  std::optional<std::string> source_pair_id;
  std::map<std::string, std::string> meta;

  bool operator==(const SentenceGlossPair&) const = default;
};

struct Corpus {
  std::vector<SentenceGlossPair> pairs;
  std::optional<std::map<std::string, SplitClass>> split;

  bool operator==(const Corpus&) const = default;

  size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }

  const SentenceGlossPair* find(std::string_view id) const {
    for (const auto& p : pairs)
      if (p.id == id) return &p;
    return nullptr;
  }

  /// Pairs assigned to `cls`, in corpus order. Requires a populated split.
  Corpus subset(SplitClass cls) const {
    if (!split) throw Error(Errc::invalid_argument, "corpus has no split");
    Corpus out;
    for (const auto& p : pairs) {
      auto it = split->find(p.id);
      if (it != split->end() && it->second == cls) out.pairs.push_back(p);
    }
    return out;
  }
};

struct SplitRatios {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
  uint64_t seed = 0;

  void validate() const {
    for (double f : {train, dev, test})
      if (!(f > 0.0 && f < 1.0)) throw Error(Errc::invalid_argument, "split fractions must lie in (0,1)");
    if (std::abs(train + dev + test - 1.0) > 1e-9)
      throw Error(Errc::invalid_argument, "split fractions must sum to 1");
  }
};

// ---------------------------------------------------------------------------
// Validation

/// Checks the per-pair invariants. Cross-pair references are checked by
/// validate_references().
inline void validate_pair(const SentenceGlossPair& p) {
  auto fail = [&](const std::string& why) { throw Error(Errc::invalid_argument, "pair \"" + p.id + "\": " + why); };
  if (p.id.empty()) throw Error(Errc::invalid_argument, "pair with empty id");
  if (unicode::trim(p.sentence).empty()) fail("empty sentence");
  if (p.gloss.empty()) fail("empty gloss");
  for (const auto& tok : p.gloss) {
    if (tok.empty()) fail("empty gloss token");
    if (unicode::contains_whitespace(tok)) fail("gloss token contains whitespace");
  }
  if (p.provenance == Provenance::manual && p.source_pair_id)
    fail("manual pair must not have source_pair_id");
  if ((p.provenance == Provenance::rule_tense || p.provenance == Provenance::mask_subst) && !p.source_pair_id)
    fail(std::string(to_string(p.provenance)) + " pair requires source_pair_id");
}

/// Every derived pair's source_pair_id must name a manual pair of `c`.
inline void validate_references(const Corpus& c) {
  std::map<std::string_view, const SentenceGlossPair*> by_id;
  for (const auto& p : c.pairs) by_id.emplace(p.id, &p);
  for (const auto& p : c.pairs) {
    if (!p.source_pair_id) continue;
    auto it = by_id.find(*p.source_pair_id);
    if (it == by_id.end() || it->second->provenance != Provenance::manual)
      throw Error(Errc::invalid_argument,
                  "pair \"" + p.id + "\": source_pair_id \"" + *p.source_pair_id + "\" is not a manual pair");
  }
}

// ---------------------------------------------------------------------------
// JSON mapping

inline nlohmann::ordered_json to_json(const SentenceGlossPair& p) {
  nlohmann::ordered_json j;
  j["id"] = p.id;
  j["sentence"] = p.sentence;
  j["gloss"] = p.gloss;
  j["provenance"] = to_string(p.provenance);
  j["tense"] = p.tense ? nlohmann::ordered_json(to_string(*p.tense)) : nlohmann::ordered_json(nullptr);
  j["source_pair_id"] = p.source_pair_id ? nlohmann::ordered_json(*p.source_pair_id) : nlohmann::ordered_json(nullptr);
  j["meta"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : p.meta) j["meta"][k] = v;
  return j;
}

/// Parses one JSONL record; NFC-normalizes text and validates invariants.
inline SentenceGlossPair pair_from_json(const nlohmann::json& j) {
  auto need_string = [&](const char* key) -> std::string {
    if (!j.contains(key) || !j[key].is_string()) throw Error(Errc::parse, std::string("missing or non-string \"") + key + "\"");
    return j[key].get<std::string>();
  };
  if (!j.is_object()) throw Error(Errc::parse, "record is not a JSON object");
  SentenceGlossPair p;
  p.id = need_string("id");
  p.sentence = unicode::nfc(need_string("sentence"));
  if (!j.contains("gloss")) throw Error(Errc::parse, "missing \"gloss\"");
  const auto& g = j["gloss"];
  if (g.is_array()) {
    for (const auto& t : g) {
      if (!t.is_string()) throw Error(Errc::parse, "gloss tokens must be strings");
      p.gloss.push_back(unicode::nfc(t.get<std::string>()));
    }
  } else if (g.is_string()) {
    std::string s = unicode::nfc(g.get<std::string>());
    if (!s.empty()) {
      size_t start = 0;
      for (size_t pos; (pos = s.find(' ', start)) != std::string::npos; start = pos + 1) p.gloss.push_back(s.substr(start, pos - start));
      p.gloss.push_back(s.substr(start));
    }
  } else {
    throw Error(Errc::parse, "\"gloss\" must be an array or string");
  }
  if (j.contains("provenance") && !j["provenance"].is_null()) {
    auto prov = parse_provenance(j["provenance"].get<std::string>());
    if (!prov) throw Error(Errc::parse, "unknown provenance \"" + j["provenance"].get<std::string>() + "\"");
    p.provenance = *prov;
  }
  if (j.contains("tense") && !j["tense"].is_null()) {
    auto t = parse_tense(j["tense"].get<std::string>());
    if (!t) throw Error(Errc::parse, "unknown tense \"" + j["tense"].get<std::string>() + "\"");
    p.tense = *t;
  }
  if (j.contains("source_pair_id") && !j["source_pair_id"].is_null())
    p.source_pair_id = j["source_pair_id"].get<std::string>();
  if (j.contains("meta") && !j["meta"].is_null()) {
    if (!j["meta"].is_object()) throw Error(Errc::parse, "\"meta\" must be an object");
    for (const auto& [k, v] : j["meta"].items()) {
      if (!v.is_string()) throw Error(Errc::parse, "meta values must be strings");
      p.meta[k] = v.get<std::string>();
    }
  }
  validate_pair(p);
  return p;
}

// ---------------------------------------------------------------------------
// Load / write

namespace detail {

inline std::string at_line(const std::string& source, size_t line, const std::string& what) {
  return source + ":" + std::to_string(line) + ": " + what;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  for (size_t pos; (pos = line.find('\t', start)) != std::string::npos; start = pos + 1) out.push_back(line.substr(start, pos - start));
  out.push_back(line.substr(start));
  return out;
}

}  // namespace detail

/// Parses a corpus from a stream. `source` names the input in error messages.
inline Corpus parse_corpus(std::istream& in, CorpusFormat format, const std::string& source = "<stream>") {
  Corpus c;
  std::map<std::string, size_t> first_line;
  std::string line;
  size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!unicode::is_valid_utf8(line)) throw Error(Errc::parse, detail::at_line(source, lineno, "invalid UTF-8"));
    if (format == CorpusFormat::tsv && !header_seen) {
      if (line != "id\tsentence\tgloss") throw Error(Errc::parse, detail::at_line(source, lineno, "expected header id<TAB>sentence<TAB>gloss"));
      header_seen = true;
      continue;
    }
    if (unicode::trim(line).empty()) continue;
    SentenceGlossPair p;
    try {
      if (format == CorpusFormat::jsonl) {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
          throw Error(Errc::parse, e.what());
        }
        p = pair_from_json(j);
      } else {
        auto cols = detail::split_tabs(line);
        if (cols.size() != 3) throw Error(Errc::parse, "expected 3 tab-separated columns, got " + std::to_string(cols.size()));
        nlohmann::json j = {{"id", cols[0]}, {"sentence", cols[1]}, {"gloss", cols[2]}};
        p = pair_from_json(j);
      }
    } catch (const Error& e) {
      throw Error(e.code(), detail::at_line(source, lineno, e.what()));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse, detail::at_line(source, lineno, e.what()));
    }
    auto [it, inserted] = first_line.emplace(p.id, lineno);
    if (!inserted)
      throw Error(Errc::duplicate_id, source + ": duplicate id \"" + p.id + "\" on lines " + std::to_string(it->second) +
                                          " and " + std::to_string(lineno));
    c.pairs.push_back(std::move(p));
  }
  if (format == CorpusFormat::tsv && !header_seen) throw Error(Errc::parse, source + ": missing TSV header");
  return c;
}

inline Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  return parse_corpus(in, format, path.string());
}

inline Corpus load_corpus(const std::filesystem::path& path) { return load_corpus(path, format_from_path(path)); }

inline std::string format_corpus(const Corpus& c, CorpusFormat format) {
  std::string out;
  if (format == CorpusFormat::jsonl) {
    for (const auto& p : c.pairs) {
      out += to_json(p).dump();
      out += '\n';
    }
    return out;
  }
  out = "id\tsentence\tgloss\n";
  for (const auto& p : c.pairs) {
    auto reject = [&](const std::string& why) {
      throw Error(Errc::invalid_argument, "pair \"" + p.id + "\": tsv cannot encode " + why);
    };
    if (p.provenance != Provenance::manual) reject("provenance " + std::string(to_string(p.provenance)));
    if (p.tense) reject("tense");
    if (!p.meta.empty()) reject("meta");
    std::string gloss;
    for (size_t i = 0; i < p.gloss.size(); ++i) gloss += (i ? " " : "") + p.gloss[i];
    for (const std::string* field : std::array<const std::string*, 3>{&p.id, &p.sentence, &gloss})
      if (field->find_first_of("\t\n\r") != std::string::npos) reject("tab or newline in a field");
    out += p.id + '\t' + p.sentence + '\t' + gloss + '\n';
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(Errc::io, "write failed: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_corpus(const Corpus& c, const std::filesystem::path& path, CorpusFormat format) {
  write_text_file(path, format_corpus(c, format));
}

inline void write_corpus(const Corpus& c, const std::filesystem::path& path) { write_corpus(c, path, format_from_path(path)); }

// ---------------------------------------------------------------------------
// Split

/// Seeded Fisher-Yates over ids, then contiguous slices: floor(n*train),
/// floor(n*dev), remainder to test.
inline Corpus split_corpus(const Corpus& c, const SplitRatios& r, bool overwrite = false) {
  r.validate();
  if (c.empty()) throw Error(Errc::invalid_argument, "cannot split an empty corpus");
  if (c.split && !overwrite) throw Error(Errc::invalid_argument, "corpus already has a split; pass overwrite to replace it");
  const size_t n = c.size();
  // The epsilon absorbs products like 0.7*10 = 6.999...; fractions are user-facing decimals.
  const auto n_train = static_cast<size_t>(std::floor(static_cast<double>(n) * r.train + 1e-9));
  const auto n_dev = static_cast<size_t>(std::floor(static_cast<double>(n) * r.dev + 1e-9));
  std::vector<std::string> ids;
  ids.reserve(n);
  for (const auto& p : c.pairs) ids.push_back(p.id);
  DeterministicRng rng(r.seed);
  rng.shuffle(ids);
  Corpus out = c;
  out.split.emplace();
  for (size_t i = 0; i < n; ++i) {
    SplitClass cls = i < n_train ? SplitClass::train : (i < n_train + n_dev ? SplitClass::dev : SplitClass::test);
    out.split->emplace(ids[i], cls);
  }
  return out;
}

inline std::string format_split_map(const Corpus& c) {
  if (!c.split) throw Error(Errc::invalid_argument, "corpus has no split");
  std::string out = "id\tsplit\n";
  for (const auto& p : c.pairs) out += p.id + '\t' + std::string(to_string(c.split->at(p.id))) + '\n';
  return out;
}

/// Reads an id<TAB>split file and attaches it to `c`; every id must be assigned exactly once.
inline Corpus attach_split_map(Corpus c, const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  size_t lineno = 0;
  std::map<std::string, SplitClass> m;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line == "id\tsplit") continue;
    if (line.empty()) continue;
    auto cols = detail::split_tabs(line);
    auto cls = cols.size() == 2 ? parse_split_class(cols[1]) : std::nullopt;
    if (!cls) throw Error(Errc::parse, detail::at_line(path.string(), lineno, "expected id<TAB>train|dev|test"));
    if (!m.emplace(cols[0], *cls).second) throw Error(Errc::duplicate_id, detail::at_line(path.string(), lineno, "id assigned twice: " + cols[0]));
  }
  for (const auto& p : c.pairs)
    if (!m.count(p.id)) throw Error(Errc::invalid_argument, "split map has no entry for \"" + p.id + "\"");
  if (m.size() != c.size()) throw Error(Errc::invalid_argument, "split map names ids not in the corpus");
  c.split = std::move(m);
  return c;
}

// ---------------------------------------------------------------------------
// Dedupe

struct DedupeResult {
  Corpus corpus;
  size_t removed = 0;
};

/// Collapses pairs with equal (NFC sentence, gloss tokens); first occurrence wins.
inline DedupeResult dedupe(const Corpus& c) {
  DedupeResult r;
  std::set<std::pair<std::string, std::vector<std::string>>> seen;
  for (const auto& p : c.pairs) {
    std::vector<std::string> gloss;
    gloss.reserve(p.gloss.size());
    for (const auto& t : p.gloss) gloss.push_back(unicode::nfc(t));
    if (seen.emplace(unicode::nfc(p.sentence), std::move(gloss)).second)
      r.corpus.pairs.push_back(p);
    else
      ++r.removed;
  }
  if (c.split) {
    r.corpus.split.emplace();
    for (const auto& p : r.corpus.pairs) r.corpus.split->emplace(p.id, c.split->at(p.id));
  }
  return r;
}

}  // namespace glossforge
