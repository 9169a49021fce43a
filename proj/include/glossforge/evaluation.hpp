#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "glossforge/corpus.hpp"
#include "glossforge/error.hpp"
#include "glossforge/log.hpp"
#include "glossforge/unicode.hpp"
#include "glossforge/validation.hpp"

namespace glossforge {

/// NFC, then split on Unicode whitespace.
inline std::vector<std::string> tokenize_gloss(std::string_view text) { return unicode::split_whitespace(unicode::nfc(text)); }

struct EvalExample {
  std::string id;
  std::vector<std::string> reference;
  std::vector<std::string> hypothesis;
};

enum class BleuSmoothing { none, add_one_clipped };

inline std::optional<BleuSmoothing> parse_smoothing(std::string_view s) {
  if (s == "none") return BleuSmoothing::none;
  if (s == "add_one_clipped" || s == "add-one") return BleuSmoothing::add_one_clipped;
  return std::nullopt;
}

inline constexpr int kMaxOrder = 4;

struct BleuComponents {
  int max_n = kMaxOrder;
  std::array<size_t, kMaxOrder> matches{};  // clipped
  std::array<size_t, kMaxOrder> totals{};
  std::array<double, kMaxOrder> p{};
  size_t c = 0;  // hypothesis length
  size_t r = 0;  // reference length
  double bp = 0;
  std::array<double, kMaxOrder> bleu{};  // cumulative, x100; bleu[n-1] is BLEU-n
};

namespace detail {
using NgramCounts = std::map<std::vector<std::string>, size_t>;

inline NgramCounts ngrams(const std::vector<std::string>& toks, size_t n) {
  NgramCounts out;
  for (size_t i = 0; i + n <= toks.size(); ++i) ++out[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return out;
}

inline void accumulate(const EvalExample& e, int max_n, BleuComponents& b) {
  b.c += e.hypothesis.size();
  b.r += e.reference.size();
  for (int n = 1; n <= max_n; ++n) {
    const auto hyp = ngrams(e.hypothesis, n);
    const auto ref = ngrams(e.reference, n);
    for (const auto& [g, count] : hyp) {
      auto it = ref.find(g);
      if (it != ref.end()) b.matches[n - 1] += std::min(count, it->second);
    }
    if (e.hypothesis.size() >= static_cast<size_t>(n)) b.totals[n - 1] += e.hypothesis.size() - n + 1;
  }
}

inline void finish(BleuComponents& b, BleuSmoothing smoothing) {
  for (int n = 1; n <= b.max_n; ++n) {
    const double m = static_cast<double>(b.matches[n - 1]);
    const double t = static_cast<double>(b.totals[n - 1]);
    if (smoothing == BleuSmoothing::add_one_clipped && n >= 2)
      b.p[n - 1] = (m + 1.0) / (t + 1.0);
    else
      b.p[n - 1] = t > 0 ? m / t : 0.0;
  }
  if (b.c == 0) {
    b.bp = 0;
    return;
  }
  b.bp = b.c > b.r ? 1.0 : std::exp(1.0 - static_cast<double>(b.r) / static_cast<double>(b.c));
  double log_sum = 0;
  bool zero = false;
  for (int n = 1; n <= b.max_n; ++n) {
    if (b.p[n - 1] <= 0) zero = true;
    if (!zero) log_sum += std::log(b.p[n - 1]);
    b.bleu[n - 1] = zero ? 0.0 : 100.0 * b.bp * std::exp(log_sum / n);
  }
}

inline void check_example(const EvalExample& e) {
  if (e.reference.empty()) throw Error(Errc::invalid_argument, "empty reference for example " + e.id);
}
}  // namespace detail

/// Corpus BLEU: clipped counts are summed over all examples before dividing.
inline BleuComponents bleu_corpus(const std::vector<EvalExample>& examples, int max_n = kMaxOrder,
                                  BleuSmoothing smoothing = BleuSmoothing::none) {
  if (examples.empty()) throw Error(Errc::invalid_argument, "no examples to score");
  if (max_n < 1 || max_n > kMaxOrder) throw Error(Errc::invalid_argument, "max_n must be in 1..4");
  BleuComponents b;
  b.max_n = max_n;
  for (const auto& e : examples) {
    detail::check_example(e);
    detail::accumulate(e, max_n, b);
  }
  detail::finish(b, smoothing);
  if (b.c == 0) log::warn("bleu_empty_hypotheses", {{"examples", examples.size()}});
  return b;
}

/// Sentence-level BLEU-n for error analysis, add-one smoothed by default.
inline double sentence_bleu(const EvalExample& e, int max_n = kMaxOrder,
                            BleuSmoothing smoothing = BleuSmoothing::add_one_clipped) {
  detail::check_example(e);
  BleuComponents b;
  b.max_n = max_n;
  detail::accumulate(e, max_n, b);
  detail::finish(b, smoothing);
  return b.bleu[max_n - 1];
}

// ---------------------------------------------------------------------------
// Files

enum class EvalFormat { plain, jsonl };

inline EvalFormat eval_format_from_path(const std::filesystem::path& p) {
  return p.extension() == ".jsonl" ? EvalFormat::jsonl : EvalFormat::plain;
}

struct GlossLine {
  std::string id;
  std::vector<std::string> tokens;
};

/// Plain: one gloss per line, ids are 1-based line numbers. JSONL: objects
/// with "id" and "gloss" as a token array or a string.
inline std::vector<GlossLine> load_gloss_lines(const std::filesystem::path& path, EvalFormat format) {
  std::istringstream in(read_text_file(path));
  std::vector<GlossLine> out;
  size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (format == EvalFormat::plain) {
      out.push_back({std::to_string(lineno), tokenize_gloss(line)});
      continue;
    }
    if (unicode::trim(line).empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("gloss"))
      throw Error(Errc::parse, where + ": expected an object with \"id\" and \"gloss\"");
    GlossLine g{j["id"].get<std::string>(), {}};
    if (j["gloss"].is_string()) {
      g.tokens = tokenize_gloss(j["gloss"].get<std::string>());
    } else if (j["gloss"].is_array()) {
      for (const auto& t : j["gloss"]) {
        if (!t.is_string()) throw Error(Errc::parse, where + ": gloss tokens must be strings");
        g.tokens.push_back(unicode::nfc(t.get<std::string>()));
      }
    } else {
      throw Error(Errc::parse, where + ": gloss must be a string or an array");
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// Aligns hypothesis and reference lines. Plain files align by line number,
/// JSONL by id in reference order.
inline std::vector<EvalExample> align_examples(const std::vector<GlossLine>& hyp, const std::vector<GlossLine>& ref,
                                               EvalFormat format) {
  if (hyp.size() != ref.size())
    throw Error(Errc::invalid_argument, "hypothesis has " + std::to_string(hyp.size()) + " entries, reference has " +
                                            std::to_string(ref.size()));
  std::vector<EvalExample> out;
  out.reserve(ref.size());
  if (format == EvalFormat::plain) {
    for (size_t i = 0; i < ref.size(); ++i) out.push_back({ref[i].id, ref[i].tokens, hyp[i].tokens});
    return out;
  }
  std::map<std::string, const GlossLine*, std::less<>> by_id;
  for (const auto& h : hyp)
    if (!by_id.emplace(h.id, &h).second) throw Error(Errc::duplicate_id, "duplicate hypothesis id: " + h.id);
  std::set<std::string, std::less<>> seen;
  for (const auto& r : ref) {
    if (!seen.insert(r.id).second) throw Error(Errc::duplicate_id, "duplicate reference id: " + r.id);
    auto it = by_id.find(r.id);
    if (it == by_id.end()) throw Error(Errc::invalid_argument, "no hypothesis for reference id " + r.id);
    out.push_back({r.id, r.tokens, it->second->tokens});
  }
  return out;
}

struct EvalResult {
  BleuComponents bleu;
  std::vector<EvalExample> examples;
  std::vector<double> sentence_scores;  // smoothed BLEU-4, per example
};

inline EvalResult evaluate_files(const std::filesystem::path& hyp_path, const std::filesystem::path& ref_path,
                                 std::optional<EvalFormat> format = std::nullopt,
                                 BleuSmoothing smoothing = BleuSmoothing::none) {
  const auto fmt = format.value_or(eval_format_from_path(ref_path));
  EvalResult r;
  r.examples = align_examples(load_gloss_lines(hyp_path, fmt), load_gloss_lines(ref_path, fmt), fmt);
  r.bleu = bleu_corpus(r.examples, kMaxOrder, smoothing);
  for (const auto& e : r.examples) r.sentence_scores.push_back(sentence_bleu(e));
  return r;
}

inline std::string render_bleu_table(const std::vector<std::pair<std::string, BleuComponents>>& rows) {
  std::string out = "System | BLEU-1 | BLEU-2 | BLEU-3 | BLEU-4\n";
  for (const auto& [name, b] : rows) {
    out += name;
    for (int n = 1; n <= kMaxOrder; ++n) out += " | " + (n <= b.max_n ? fixed(b.bleu[n - 1], 2) : std::string("-"));
    out += "\n";
  }
  return out;
}

inline nlohmann::ordered_json to_json(const BleuComponents& b) {
  nlohmann::ordered_json j;
  for (int n = 1; n <= b.max_n; ++n) j["bleu_" + std::to_string(n)] = std::stod(fixed(b.bleu[n - 1], 2));
  j["precisions"] = std::vector<double>(b.p.begin(), b.p.begin() + b.max_n);
  j["hyp_len"] = b.c;
  j["ref_len"] = b.r;
  j["bp"] = b.bp;
  return j;
}

// ---------------------------------------------------------------------------
// External scorer hook

struct ExternalScore {
  std::vector<double> per_line;
  double system = 0;
  std::string raw;  // scorer stdout, verbatim
};

inline std::string shell_quote(std::string_view s) {
  std::string out = "'";
  for (char ch : s) out += ch == '\'' ? std::string("'\\''") : std::string(1, ch);
  return out + "'";
}

/// Output contract: one float per line, then "system: <float>".
inline ExternalScore parse_scorer_output(const std::string& text) {
  ExternalScore s;
  s.raw = text;
  bool have_system = false;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    const auto t = unicode::trim(line);
    if (t.empty()) continue;
    if (have_system) throw Error(Errc::backend, "scorer printed output after the system line: " + t);
    try {
      size_t used = 0;
      if (t.starts_with("system:")) {
        const auto v = unicode::trim(std::string_view(t).substr(7));
        s.system = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        have_system = true;
      } else {
        s.per_line.push_back(std::stod(t, &used));
        if (used != t.size()) throw std::invalid_argument(t);
      }
    } catch (const std::logic_error&) {
      throw Error(Errc::backend, "scorer printed a non-numeric line: " + t);
    }
  }
  if (!have_system) throw Error(Errc::backend, "scorer output has no \"system:\" line");
  return s;
}

/// Runs `<cmd> <hyp> <ref>` through the shell.
inline ExternalScore run_external_scorer(const std::string& cmd, const std::filesystem::path& hyp,
                                         const std::filesystem::path& ref, std::optional<size_t> expected_lines = {}) {
  const std::string full = cmd + " " + shell_quote(hyp.string()) + " " + shell_quote(ref.string());
  FILE* pipe = ::popen(full.c_str(), "r");
  if (!pipe) throw Error(Errc::backend, "cannot start scorer: " + cmd);
  std::string out;
  char buf[4096];
  for (size_t n; (n = std::fread(buf, 1, sizeof buf, pipe)) > 0;) out.append(buf, n);
  const int status = ::pclose(pipe);
  if (status != 0)
    throw Error(Errc::backend, "scorer exited with status " + std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : status));
  auto s = parse_scorer_output(out);
  if (expected_lines && s.per_line.size() != *expected_lines)
    throw Error(Errc::backend, "scorer returned " + std::to_string(s.per_line.size()) + " scores for " +
                                   std::to_string(*expected_lines) + " examples");
  return s;
}

}  // namespace glossforge
