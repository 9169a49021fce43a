#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "glossforge/corpus.hpp"
#include "glossforge/error.hpp"
#include "glossforge/unicode.hpp"

namespace glossforge {

inline constexpr std::string_view kRootPlaceholder = "ROOT";

/// Rewrites the final verb of a sentence from one tense to another.
/// `verb_suffix` is stripped from the verb to obtain the stem; the stem then
/// replaces ROOT in both templates.
struct TenseRule {
  std::string rule_id;
  Tense source_tense = Tense::present;
  Tense target_tense = Tense::present;
  std::string verb_suffix;
  std::string sentence_template;
  std::string gloss_template;

  bool operator==(const TenseRule&) const = default;
};

struct DetectionRule {
  std::string suffix;
  Tense tense = Tense::unknown;

  bool operator==(const DetectionRule&) const = default;
};

struct RuleSet {
  std::vector<TenseRule> rules;
  std::vector<DetectionRule> detection_rules;
  std::string version;

  bool operator==(const RuleSet&) const = default;
};

namespace detail {

inline size_t count_occurrences(std::string_view hay, std::string_view needle) {
  size_t n = 0;
  for (size_t pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

inline std::string replace_root(std::string_view tmpl, std::string_view stem) {
  std::string out(tmpl);
  auto pos = out.find(kRootPlaceholder);
  if (pos != std::string::npos) out.replace(pos, kRootPlaceholder.size(), stem);
  return out;
}

// Whitespace-separated words; "double-quoted strings" with \" and \\ escapes
// are single tokens.
struct RuleToken {
  std::string text;
  bool quoted = false;
};

inline std::vector<RuleToken> lex_rule_line(std::string_view line) {
  std::vector<RuleToken> out;
  size_t i = 0;
  while (i < line.size()) {
    char c = line[i];
    if (c == ' ' || c == '\t') {
      ++i;
      continue;
    }
    if (c == '"') {
      RuleToken t{"", true};
      ++i;
      bool closed = false;
      while (i < line.size()) {
        if (line[i] == '\\' && i + 1 < line.size()) {
          t.text += line[i + 1];
          i += 2;
        } else if (line[i] == '"') {
          closed = true;
          ++i;
          break;
        } else {
          t.text += line[i++];
        }
      }
      if (!closed) throw Error(Errc::parse, "unterminated string");
      out.push_back(std::move(t));
      continue;
    }
    size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    out.push_back({std::string(line.substr(i, j - i)), false});
    i = j;
  }
  return out;
}

inline std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + '"';
}

inline Tense parse_rule_tense(const RuleToken& t) {
  auto tense = parse_tense(t.text);
  if (!tense || *tense == Tense::unknown || t.quoted) throw Error(Errc::parse, "invalid tense \"" + t.text + "\"");
  return *tense;
}

inline void expect(const std::vector<RuleToken>& toks, size_t i, std::string_view word) {
  if (i >= toks.size() || toks[i].quoted || toks[i].text != word)
    throw Error(Errc::parse, "expected \"" + std::string(word) + "\"" +
                                 (i < toks.size() ? " near \"" + toks[i].text + "\"" : " at end of line"));
}

inline const std::string& expect_string(const std::vector<RuleToken>& toks, size_t i, std::string_view what) {
  if (i >= toks.size() || !toks[i].quoted) throw Error(Errc::parse, "expected quoted " + std::string(what));
  return toks[i].text;
}

inline void require_nfc(const std::string& s, std::string_view what) {
  if (!unicode::is_nfc(s)) throw Error(Errc::parse, std::string(what) + " is not NFC-normalized");
}

}  // namespace detail

inline void validate_rule(const TenseRule& r) {
  auto fail = [&](const std::string& why) { throw Error(Errc::invalid_argument, "rule " + r.rule_id + ": " + why); };
  if (r.rule_id.empty()) throw Error(Errc::invalid_argument, "rule with empty id");
  if (r.verb_suffix.empty()) fail("empty verb suffix");
  if (r.source_tense == r.target_tense) fail("source and target tense are equal");
  if (r.source_tense == Tense::unknown || r.target_tense == Tense::unknown) fail("unknown is not a rule tense");
  if (detail::count_occurrences(r.sentence_template, kRootPlaceholder) > 1) fail("sentence template uses ROOT more than once");
  if (detail::count_occurrences(r.gloss_template, kRootPlaceholder) > 1) fail("gloss template uses ROOT more than once");
  if (unicode::split_whitespace(r.gloss_template).empty()) fail("empty gloss template");
  if (unicode::trim(r.sentence_template).empty() || unicode::contains_whitespace(r.sentence_template))
    fail("sentence template must be a single non-empty token");
}

/// Parses the line-oriented rule grammar:
///   version <text>
///   detect <suffix> -> <tense>
///   rule <id> <src> -> <dst> : verb "<suffix>" => "<template>" ; gloss => "<template>"
inline RuleSet parse_rules(std::string_view text, const std::string& source = "<rules>") {
  RuleSet rs;
  std::map<std::string, size_t> rule_lines;
  std::istringstream in{std::string(text)};
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto where = [&](const std::string& what) { return source + ":" + std::to_string(lineno) + ": " + what; };
    try {
      auto trimmed = unicode::trim(line);
      if (trimmed.empty() || trimmed[0] == '#') continue;
      auto toks = detail::lex_rule_line(trimmed);
      const auto& head = toks[0].text;
      if (head == "version" && !toks[0].quoted) {
        rs.version = unicode::trim(trimmed.substr(7));
      } else if (head == "detect" && !toks[0].quoted) {
        if (toks.size() != 4) throw Error(Errc::parse, "detect line needs: detect <suffix> -> <tense>");
        detail::expect(toks, 2, "->");
        DetectionRule d{toks[1].text, detail::parse_rule_tense(toks[3])};
        if (d.suffix.empty()) throw Error(Errc::invalid_argument, "empty detection suffix");
        detail::require_nfc(d.suffix, "suffix");
        rs.detection_rules.push_back(std::move(d));
      } else if (head == "rule" && !toks[0].quoted) {
        if (toks.size() != 14) throw Error(Errc::parse, "malformed rule line: expected rule <id> <src> -> <dst> : verb \"..\" => \"..\" ; gloss => \"..\"");
        TenseRule r;
        r.rule_id = toks[1].text;
        r.source_tense = detail::parse_rule_tense(toks[2]);
        detail::expect(toks, 3, "->");
        r.target_tense = detail::parse_rule_tense(toks[4]);
        detail::expect(toks, 5, ":");
        detail::expect(toks, 6, "verb");
        r.verb_suffix = detail::expect_string(toks, 7, "verb suffix");
        detail::expect(toks, 8, "=>");
        r.sentence_template = detail::expect_string(toks, 9, "sentence template");
        detail::expect(toks, 10, ";");
        detail::expect(toks, 11, "gloss");
        detail::expect(toks, 12, "=>");
        r.gloss_template = detail::expect_string(toks, 13, "gloss template");
        detail::require_nfc(r.verb_suffix, "verb suffix");
        detail::require_nfc(r.sentence_template, "sentence template");
        detail::require_nfc(r.gloss_template, "gloss template");
        validate_rule(r);
        auto [it, inserted] = rule_lines.emplace(r.rule_id, lineno);
        if (!inserted)
          throw Error(Errc::duplicate_id, "duplicate rule id \"" + r.rule_id + "\" (first defined on line " + std::to_string(it->second) + ")");
        rs.rules.push_back(std::move(r));
      } else {
        throw Error(Errc::parse, "unrecognized line starting with \"" + head + "\"");
      }
    } catch (const Error& e) {
      throw Error(e.code(), where(e.what()));
    }
  }
  return rs;
}

inline RuleSet load_rules(const std::filesystem::path& path) { return parse_rules(read_text_file(path), path.string()); }

inline std::string format_rule(const TenseRule& r) {
  return "rule " + r.rule_id + " " + std::string(to_string(r.source_tense)) + " -> " + std::string(to_string(r.target_tense)) +
         " : verb " + detail::quote(r.verb_suffix) + " => " + detail::quote(r.sentence_template) + " ; gloss => " +
         detail::quote(r.gloss_template);
}

/// Canonical text form; parse_rules(format_rules(rs)) == rs. Comments are not preserved.
inline std::string format_rules(const RuleSet& rs) {
  std::string out;
  if (!rs.version.empty()) out += "version " + rs.version + "\n";
  for (const auto& d : rs.detection_rules) out += "detect " + d.suffix + " -> " + std::string(to_string(d.tense)) + "\n";
  for (const auto& r : rs.rules) out += format_rule(r) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

struct VerbSlot {
  size_t token_index = 0;
  std::string body;         // verb without trailing punctuation
  std::string punctuation;  // e.g. "।"
};

/// Locates the sentence-final verb token. Returns nullopt when the sentence
/// has no word-like final token.
inline std::optional<VerbSlot> final_verb(const std::vector<std::string>& tokens) {
  if (tokens.empty()) return std::nullopt;
  auto [body, punct] = unicode::split_trailing_punct(tokens.back());
  if (body.empty()) return std::nullopt;
  return VerbSlot{tokens.size() - 1, std::move(body), std::move(punct)};
}

/// Longest matching suffix wins; equal lengths fall back to file order.
/// The stem left after removing the suffix must be non-empty.
inline Tense detect_tense(std::string_view sentence, const RuleSet& rs) {
  auto verb = final_verb(unicode::split_whitespace(unicode::nfc(sentence)));
  if (!verb) return Tense::unknown;
  const DetectionRule* best = nullptr;
  for (const auto& d : rs.detection_rules) {
    if (verb->body.size() <= d.suffix.size() || !unicode::ends_with(verb->body, d.suffix)) continue;
    if (!best || d.suffix.size() > best->suffix.size()) best = &d;
  }
  return best ? best->tense : Tense::unknown;
}

inline std::vector<const TenseRule*> rules_for_tense(const RuleSet& rs, Tense t) {
  std::vector<const TenseRule*> out;
  for (const auto& r : rs.rules)
    if (t == Tense::unknown || r.source_tense == t || r.target_tense == t) out.push_back(&r);
  return out;
}

/// Rewrites `p` into `target`. The sentence's final verb is rewritten by the
/// selected rule; in the gloss, the span from the last occurrence of the stem
/// to the end (the verb phrase) is replaced by the gloss template.
inline SentenceGlossPair transform_tense(const SentenceGlossPair& p, Tense target, const RuleSet& rs) {
  if (target == Tense::unknown) throw Error(Errc::invalid_argument, "cannot transform into the unknown tense");
  const Tense detected = detect_tense(p.sentence, rs);
  if (detected == Tense::unknown) throw Error(Errc::unknown_tense, "pair \"" + p.id + "\": tense not detected");
  if (detected == target) return p;

  auto tokens = unicode::split_whitespace(unicode::nfc(p.sentence));
  auto verb = final_verb(tokens);
  const TenseRule* rule = nullptr;
  for (const auto& r : rs.rules) {
    if (r.source_tense != detected || r.target_tense != target) continue;
    if (verb->body.size() <= r.verb_suffix.size() || !unicode::ends_with(verb->body, r.verb_suffix)) continue;
    if (!rule || r.verb_suffix.size() > rule->verb_suffix.size()) rule = &r;
  }
  if (!rule)
    throw Error(Errc::no_rule, "pair \"" + p.id + "\": no rule from " + std::string(to_string(detected)) + " to " +
                                   std::string(to_string(target)));

  const std::string stem = verb->body.substr(0, verb->body.size() - rule->verb_suffix.size());
  tokens[verb->token_index] = detail::replace_root(rule->sentence_template, stem) + verb->punctuation;

  size_t at = p.gloss.size();
  for (size_t i = p.gloss.size(); i-- > 0;)
    if (p.gloss[i] == stem) {
      at = i;
      break;
    }
  if (at == p.gloss.size())
    throw Error(Errc::gloss_misaligned, "pair \"" + p.id + "\": verb stem \"" + stem + "\" not found in gloss");

  SentenceGlossPair out;
  out.id = p.id + "~" + std::string(to_string(target));
  for (size_t i = 0; i < tokens.size(); ++i) out.sentence += (i ? " " : "") + tokens[i];
  out.gloss.assign(p.gloss.begin(), p.gloss.begin() + static_cast<std::ptrdiff_t>(at));
  for (auto& t : unicode::split_whitespace(detail::replace_root(rule->gloss_template, stem))) out.gloss.push_back(std::move(t));
  out.provenance = Provenance::rule_tense;
  out.tense = target;
  out.source_pair_id = p.source_pair_id.value_or(p.id);
  out.meta["rule_id"] = rule->rule_id;
  return out;
}

/// One transformed pair per target tense reachable from the detected tense.
inline std::vector<SentenceGlossPair> expand_pair(const SentenceGlossPair& p, const RuleSet& rs) {
  std::vector<SentenceGlossPair> out;
  if (rs.rules.empty()) return out;
  const Tense detected = detect_tense(p.sentence, rs);
  if (detected == Tense::unknown) throw Error(Errc::unknown_tense, "pair \"" + p.id + "\": tense not detected");
  for (Tense t : kAllTenses) {
    if (t == Tense::unknown || t == detected) continue;
    try {
      out.push_back(transform_tense(p, t, rs));
    } catch (const Error& e) {
      if (e.code() != Errc::no_rule) throw;
    }
  }
  return out;
}

}  // namespace glossforge
