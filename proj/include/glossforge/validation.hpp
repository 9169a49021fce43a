#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "glossforge/corpus.hpp"
#include "glossforge/error.hpp"
#include "glossforge/log.hpp"
#include "glossforge/rng.hpp"
#include "glossforge/unicode.hpp"

namespace glossforge {

// ---------------------------------------------------------------------------
// Sampling

/// round(n * fraction) ids drawn uniformly without replacement, in draw order.
inline std::vector<std::string> sample_for_review(const Corpus& c, double fraction, uint64_t seed) {
  if (c.empty()) throw Error(Errc::invalid_argument, "cannot sample from an empty corpus");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error(Errc::invalid_argument, "sample fraction must lie in (0, 1]");
  std::vector<std::string> ids;
  ids.reserve(c.size());
  for (const auto& p : c.pairs) ids.push_back(p.id);
  DeterministicRng rng(seed);
  rng.shuffle(ids);
  const auto m = static_cast<size_t>(std::llround(static_cast<double>(c.size()) * fraction));
  ids.resize(std::max<size_t>(1, std::min(m, ids.size())));
  return ids;
}

// ---------------------------------------------------------------------------
// Agreement statistics

struct AgreementStats {
  double p_o = 0;
  double p_e = 0;
  double kappa = 0;

  bool operator==(const AgreementStats&) const = default;
};

namespace detail {
inline void check_aligned(size_t na, size_t nb) {
  if (na != nb) throw Error(Errc::invalid_argument, "label lists differ in length: " + std::to_string(na) + " vs " + std::to_string(nb));
  if (na == 0) throw Error(Errc::invalid_argument, "kappa needs at least one item");
}
}  // namespace detail

/// Cohen's kappa over any ordered label type. When chance agreement is
/// total (both raters constant and identical) kappa is 1.
template <typename T>
AgreementStats cohen_kappa_nominal(const std::vector<T>& a, const std::vector<T>& b) {
  detail::check_aligned(a.size(), b.size());
  const size_t n = a.size();
  std::map<T, size_t> ma, mb;
  size_t agree = 0;
  for (size_t i = 0; i < n; ++i) {
    ++ma[a[i]];
    ++mb[b[i]];
    agree += a[i] == b[i];
  }
  unsigned long long chance = 0;  // sum of marginal products, over n^2
  for (const auto& [label, ca] : ma) {
    auto it = mb.find(label);
    if (it != mb.end()) chance += static_cast<unsigned long long>(ca) * it->second;
  }
  const double nn = static_cast<double>(n);
  AgreementStats s;
  s.p_o = static_cast<double>(agree) / nn;
  s.p_e = static_cast<double>(chance) / (nn * nn);
  if (chance == static_cast<unsigned long long>(n) * n) {
    s.kappa = 1.0;
  } else {
    s.kappa = (s.p_o - s.p_e) / (1.0 - s.p_e);
  }
  return s;
}

enum class KappaWeighting { none, linear, quadratic };

constexpr std::string_view to_string(KappaWeighting w) {
  switch (w) {
    case KappaWeighting::none: return "none";
    case KappaWeighting::linear: return "linear";
    case KappaWeighting::quadratic: return "quadratic";
  }
  return "?";
}

inline std::optional<KappaWeighting> parse_weighting(std::string_view s) {
  if (s == "none") return KappaWeighting::none;
  if (s == "linear") return KappaWeighting::linear;
  if (s == "quadratic") return KappaWeighting::quadratic;
  return std::nullopt;
}

/// Kappa over 1..5 ratings. Weighted variants use disagreement weights
/// |i-j|/4 or (i-j)^2/16 and report p_o, p_e as weighted agreements.
inline AgreementStats cohen_kappa_weighted(const std::vector<int>& a, const std::vector<int>& b, KappaWeighting w) {
  detail::check_aligned(a.size(), b.size());
  for (const auto* v : {&a, &b})
    for (int x : *v)
      if (x < 1 || x > 5) throw Error(Errc::invalid_argument, "rating " + std::to_string(x) + " outside 1..5");
  if (w == KappaWeighting::none) return cohen_kappa_nominal(a, b);

  auto weight = [w](int i, int j) {
    const double d = std::abs(i - j);
    return w == KappaWeighting::linear ? d / 4.0 : d * d / 16.0;
  };
  const double n = static_cast<double>(a.size());
  double observed[5][5] = {}, ra[5] = {}, rb[5] = {};
  for (size_t k = 0; k < a.size(); ++k) {
    observed[a[k] - 1][b[k] - 1] += 1.0 / n;
    ra[a[k] - 1] += 1.0 / n;
    rb[b[k] - 1] += 1.0 / n;
  }
  double dis_o = 0, dis_e = 0;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      dis_o += weight(i, j) * observed[i][j];
      dis_e += weight(i, j) * ra[i] * rb[j];
    }
  AgreementStats s;
  s.p_o = 1.0 - dis_o;
  s.p_e = 1.0 - dis_e;
  s.kappa = dis_e == 0.0 ? 1.0 : 1.0 - dis_o / dis_e;
  return s;
}

/// Landis-Koch bands; each upper bound is inclusive.
inline std::string_view interpret_kappa(double k) {
  if (k < 0.0) return "Poor";
  if (k <= 0.20) return "Slight";
  if (k <= 0.40) return "Fair";
  if (k <= 0.60) return "Moderate";
  if (k <= 0.80) return "Substantial";
  return "Almost Perfect";
}

// ---------------------------------------------------------------------------
// Annotation records and journal

struct AnnotationRecord {
  std::string sample_id;
  std::string rater_id;
  bool understandable = false;
  int quality = 0;
  std::string created_at;  // ISO-8601 UTC

  bool operator==(const AnnotationRecord&) const = default;
};

inline void validate_record(const AnnotationRecord& r) {
  if (unicode::trim(r.sample_id).empty()) throw Error(Errc::invalid_argument, "sample_id must be non-empty");
  if (unicode::trim(r.rater_id).empty()) throw Error(Errc::invalid_argument, "rater_id must be non-empty");
  if (r.quality < 1 || r.quality > 5) throw Error(Errc::invalid_argument, "quality must be an integer in 1..5");
}

inline nlohmann::ordered_json to_json(const AnnotationRecord& r) {
  return {{"sample_id", r.sample_id}, {"rater_id", r.rater_id}, {"understandable", r.understandable},
          {"quality", r.quality},     {"created_at", r.created_at}};
}

inline AnnotationRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::parse, "annotation record must be a JSON object");
  AnnotationRecord r;
  try {
    r.sample_id = j.at("sample_id").get<std::string>();
    r.rater_id = j.at("rater_id").get<std::string>();
    r.understandable = j.at("understandable").get<bool>();
    if (!j.at("quality").is_number_integer()) throw Error(Errc::parse, "quality must be an integer");
    r.quality = j.at("quality").get<int>();
    r.created_at = j.value("created_at", "");
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("malformed annotation record: ") + e.what());
  }
  validate_record(r);
  return r;
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now()) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Every record in file order; parse errors carry the line number.
inline std::vector<AnnotationRecord> load_journal(const std::filesystem::path& path) {
  std::vector<AnnotationRecord> out;
  if (!std::filesystem::exists(path)) return out;
  std::istringstream in(read_text_file(path));
  size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (unicode::trim(line).empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// Last record per (sample_id, rater_id), in order of first appearance.
inline std::vector<AnnotationRecord> latest_records(const std::vector<AnnotationRecord>& records) {
  std::map<std::pair<std::string, std::string>, size_t> slot;
  std::vector<AnnotationRecord> out;
  for (const auto& r : records) {
    auto key = std::make_pair(r.sample_id, r.rater_id);
    if (auto it = slot.find(key); it != slot.end()) {
      out[it->second] = r;
    } else {
      slot.emplace(std::move(key), out.size());
      out.push_back(r);
    }
  }
  return out;
}

/// Append-only JSONL store. One line per write, flushed under a lock.
class AnnotationJournal {
 public:
  explicit AnnotationJournal(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path() && !std::filesystem::exists(path_.parent_path()))
      throw Error(Errc::io, "journal directory does not exist: " + path_.parent_path().string());
    records_ = load_journal(path_);
    for (size_t i = 0; i < records_.size(); ++i) latest_[{records_[i].sample_id, records_[i].rater_id}] = i;
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw Error(Errc::io, "cannot open journal: " + path_.string());
  }

  /// Returns true when the record replaced an earlier one.
  bool append(const AnnotationRecord& r) {
    validate_record(r);
    const std::string line = to_json(r).dump() + "\n";
    std::lock_guard lock(mu_);
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.flush();
    if (!out_) throw Error(Errc::io, "write failed: " + path_.string());
    const auto key = std::make_pair(r.sample_id, r.rater_id);
    const bool replaced = latest_.contains(key);
    if (replaced)
      log::info("annotation_replaced", {{"sample_id", r.sample_id}, {"rater_id", r.rater_id}, {"quality", r.quality},
                                        {"understandable", r.understandable}});
    latest_[key] = records_.size();
    records_.push_back(r);
    return replaced;
  }

  /// Consistent copy of all records written so far.
  std::vector<AnnotationRecord> snapshot() const {
    std::lock_guard lock(mu_);
    return records_;
  }

  std::optional<AnnotationRecord> find(const std::string& sample_id, const std::string& rater_id) const {
    std::lock_guard lock(mu_);
    auto it = latest_.find({sample_id, rater_id});
    if (it == latest_.end()) return std::nullopt;
    return records_[it->second];
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::ofstream out_;
  std::vector<AnnotationRecord> records_;
  std::map<std::pair<std::string, std::string>, size_t> latest_;
};

// ---------------------------------------------------------------------------
// Report

struct RaterSummary {
  std::string rater_id;
  size_t n = 0;
  size_t understandable = 0;
  double validation_rate = 0;  // percent
  double avg_quality = 0;
  double high = 0, acceptable = 0, low = 0;  // percent

  bool operator==(const RaterSummary&) const = default;
};

struct KappaSummary {
  AgreementStats stats;
  std::string label;
  KappaWeighting weighting = KappaWeighting::none;

  bool operator==(const KappaSummary&) const = default;
};

struct ValidationReport {
  RaterSummary rater_a, rater_b, combined;
  KappaSummary kappa_binary, kappa_quality;
  size_t samples = 0;

  bool operator==(const ValidationReport&) const = default;
};

namespace detail {
inline RaterSummary summarize(std::string id, const std::vector<const AnnotationRecord*>& recs) {
  RaterSummary s;
  s.rater_id = std::move(id);
  s.n = recs.size();
  size_t sum = 0, hi = 0, mid = 0, lo = 0;
  for (const auto* r : recs) {
    s.understandable += r->understandable;
    sum += static_cast<size_t>(r->quality);
    (r->quality >= 4 ? hi : r->quality == 3 ? mid : lo)++;
  }
  const double n = static_cast<double>(s.n);
  s.validation_rate = 100.0 * static_cast<double>(s.understandable) / n;
  s.avg_quality = static_cast<double>(sum) / n;
  s.high = 100.0 * static_cast<double>(hi) / n;
  s.acceptable = 100.0 * static_cast<double>(mid) / n;
  s.low = 100.0 * static_cast<double>(lo) / n;
  return s;
}
}  // namespace detail

/// Dual-rater report. Raters are ordered by id; later records for the same
/// (sample, rater) replace earlier ones.
inline ValidationReport build_report(const std::vector<AnnotationRecord>& all_records,
                                     KappaWeighting quality_weighting = KappaWeighting::none) {
  const auto records = latest_records(all_records);
  std::map<std::string, std::map<std::string, const AnnotationRecord*>> by_rater;
  for (const auto& r : records) by_rater[r.rater_id][r.sample_id] = &r;
  if (by_rater.size() != 2)
    throw Error(Errc::invalid_argument, "report needs exactly two raters, found " + std::to_string(by_rater.size()));
  auto ita = by_rater.begin();
  auto itb = std::next(ita);
  const auto& sa = ita->second;
  const auto& sb = itb->second;

  std::vector<std::string> missing;
  for (const auto& [id, _] : sa)
    if (!sb.contains(id)) missing.push_back(id + " (no " + itb->first + ")");
  for (const auto& [id, _] : sb)
    if (!sa.contains(id)) missing.push_back(id + " (no " + ita->first + ")");
  if (!missing.empty()) {
    std::string msg = "samples not rated by both raters:";
    for (const auto& m : missing) msg += " " + m;
    throw Error(Errc::unmatched_samples, msg);
  }

  std::vector<const AnnotationRecord*> ra, rb, both;
  std::vector<bool> ua, ub;
  std::vector<int> qa, qb;
  for (const auto& [id, rec] : sa) {  // map order: aligned by sample id
    const auto* other = sb.at(id);
    ra.push_back(rec);
    rb.push_back(other);
    ua.push_back(rec->understandable);
    ub.push_back(other->understandable);
    qa.push_back(rec->quality);
    qb.push_back(other->quality);
  }
  both = ra;
  both.insert(both.end(), rb.begin(), rb.end());

  ValidationReport rep;
  rep.samples = sa.size();
  rep.rater_a = detail::summarize(ita->first, ra);
  rep.rater_b = detail::summarize(itb->first, rb);
  rep.combined = detail::summarize("combined", both);
  rep.kappa_binary.stats = cohen_kappa_nominal(ua, ub);
  rep.kappa_binary.label = interpret_kappa(rep.kappa_binary.stats.kappa);
  rep.kappa_quality.stats = cohen_kappa_weighted(qa, qb, quality_weighting);
  rep.kappa_quality.label = interpret_kappa(rep.kappa_quality.stats.kappa);
  rep.kappa_quality.weighting = quality_weighting;
  return rep;
}

/// Fixed-point text with `decimals` digits, rounding half away from zero.
inline std::string fixed(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  double r = std::round(v * scale) / scale;
  if (r == 0.0) r = 0.0;  // no "-0.0"
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, r);
  return buf;
}

inline std::string render_kappa(const KappaSummary& k) {
  std::string s = "κ = " + fixed(k.stats.kappa, 4) + " (" + k.label + ")";
  if (k.weighting != KappaWeighting::none) s += " [" + std::string(to_string(k.weighting)) + "-weighted]";
  return s;
}

/// Table rows as "label | A | B | Combined".
inline std::vector<std::string> render_report_rows(const ValidationReport& r) {
  auto row3 = [&](std::string label, auto get, int decimals, std::string_view suffix) {
    return label + " | " + fixed(get(r.rater_a), decimals) + std::string(suffix) + " | " + fixed(get(r.rater_b), decimals) +
           std::string(suffix) + " | " + fixed(get(r.combined), decimals) + std::string(suffix);
  };
  return {
      "Metric | " + r.rater_a.rater_id + " | " + r.rater_b.rater_id + " | Combined",
      row3("Validation Rate (%)", [](const RaterSummary& s) { return s.validation_rate; }, 1, ""),
      row3("Average Quality Score", [](const RaterSummary& s) { return s.avg_quality; }, 2, ""),
      row3("High Quality (Score ≥ 4)", [](const RaterSummary& s) { return s.high; }, 1, "%"),
      row3("Acceptable (Score = 3)", [](const RaterSummary& s) { return s.acceptable; }, 1, "%"),
      row3("Low Quality (Score ≤ 2)", [](const RaterSummary& s) { return s.low; }, 1, "%"),
      "Binary Agreement | " + render_kappa(r.kappa_binary),
      "Quality Agreement | " + render_kappa(r.kappa_quality),
  };
}

inline std::string render_report(const ValidationReport& r) {
  std::string out;
  for (const auto& row : render_report_rows(r)) out += row + "\n";
  return out;
}

inline nlohmann::ordered_json to_json(const RaterSummary& s) {
  return {{"rater_id", s.rater_id},
          {"n", s.n},
          {"understandable", s.understandable},
          {"validation_rate", std::stod(fixed(s.validation_rate, 1))},
          {"avg_quality", std::stod(fixed(s.avg_quality, 2))},
          {"distribution",
           {{"high", std::stod(fixed(s.high, 1))}, {"acceptable", std::stod(fixed(s.acceptable, 1))}, {"low", std::stod(fixed(s.low, 1))}}}};
}

inline nlohmann::ordered_json to_json(const KappaSummary& k) {
  return {{"p_o", k.stats.p_o},     {"p_e", k.stats.p_e},
          {"kappa", k.stats.kappa}, {"kappa_display", fixed(k.stats.kappa, 4)},
          {"label", k.label},       {"weighting", to_string(k.weighting)}};
}

/// Rounded values for display plus the rendered rows, so clients never
/// recompute anything.
inline nlohmann::ordered_json to_json(const ValidationReport& r) {
  return {{"samples", r.samples},
          {"raters", {to_json(r.rater_a), to_json(r.rater_b)}},
          {"combined", to_json(r.combined)},
          {"kappa_binary", to_json(r.kappa_binary)},
          {"kappa_quality", to_json(r.kappa_quality)},
          {"rows", render_report_rows(r)}};
}

}  // namespace glossforge
