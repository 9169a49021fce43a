#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "glossforge/corpus.hpp"
#include "glossforge/error.hpp"
#include "glossforge/log.hpp"
#include "glossforge/validation.hpp"

namespace glossforge {

struct ReviewSample {
  std::string sample_id;
  std::string sentence;
  std::vector<std::string> gloss;
};

/// Review queue in sampled order. Every id must exist in the corpus.
inline std::vector<ReviewSample> review_samples(const Corpus& c, const std::vector<std::string>& ids) {
  std::vector<ReviewSample> out;
  std::set<std::string, std::less<>> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw Error(Errc::duplicate_id, "sample listed twice: " + id);
    const auto* p = c.find(id);
    if (!p) throw Error(Errc::invalid_argument, "sample id not in corpus: " + id);
    out.push_back({p->id, p->sentence, p->gloss});
  }
  return out;
}

/// One id per line; blank lines are skipped.
inline std::vector<std::string> load_sample_ids(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::string> ids;
  for (std::string line; std::getline(in, line);)
    if (auto t = unicode::trim(line); !t.empty()) ids.push_back(t);
  return ids;
}

inline void save_sample_ids(const std::vector<std::string>& ids, const std::filesystem::path& path) {
  std::string text;
  for (const auto& id : ids) text += id + "\n";
  write_text_file(path, text);
}

struct ReviewProgress {
  size_t done = 0;
  size_t total = 0;
};

/// Raised for requests that name a sample outside the review set.
struct UnknownSample : Error {
  explicit UnknownSample(const std::string& id) : Error(Errc::invalid_argument, "unknown sample: " + id) {}
};

/// Queue, submission and report logic behind the HTTP API. At most two
/// raters may submit; the third distinct rater is rejected.
class ReviewService {
 public:
  using Clock = std::function<std::string()>;

  ReviewService(std::vector<ReviewSample> samples, AnnotationJournal& journal,
                KappaWeighting weighting = KappaWeighting::none, Clock clock = [] { return utc_timestamp(); })
      : samples_(std::move(samples)), journal_(journal), weighting_(weighting), clock_(std::move(clock)) {
    for (size_t i = 0; i < samples_.size(); ++i) index_.emplace(samples_[i].sample_id, i);
  }

  std::optional<ReviewSample> next(const std::string& rater) const {
    for (const auto& s : samples_)
      if (!journal_.find(s.sample_id, rater)) return s;
    return std::nullopt;
  }

  ReviewProgress progress(const std::string& rater) const {
    ReviewProgress p{0, samples_.size()};
    for (const auto& s : samples_) p.done += journal_.find(s.sample_id, rater).has_value();
    return p;
  }

  /// Body is {rater, understandable, quality}. Violations raise Error.
  AnnotationRecord submit(const std::string& sample_id, const nlohmann::json& body) {
    if (!index_.contains(sample_id)) throw UnknownSample(sample_id);
    if (!body.is_object()) throw Error(Errc::invalid_argument, "body must be a JSON object");
    AnnotationRecord r;
    r.sample_id = sample_id;
    if (!body.contains("rater") || !body["rater"].is_string()) throw Error(Errc::invalid_argument, "rater must be a string");
    if (!body.contains("understandable") || !body["understandable"].is_boolean())
      throw Error(Errc::invalid_argument, "understandable must be a boolean");
    if (!body.contains("quality") || !body["quality"].is_number_integer())
      throw Error(Errc::invalid_argument, "quality must be an integer in 1..5");
    r.rater_id = body["rater"].get<std::string>();
    r.understandable = body["understandable"].get<bool>();
    r.quality = body["quality"].get<int>();
    r.created_at = clock_();
    validate_record(r);

    std::lock_guard lock(mu_);
    std::set<std::string> raters;
    for (const auto& rec : journal_.snapshot()) raters.insert(rec.rater_id);
    if (!raters.contains(r.rater_id) && raters.size() >= 2)
      throw Error(Errc::invalid_argument, "review already has two raters; rejecting " + r.rater_id);
    journal_.append(r);
    return r;
  }

  ValidationReport report() const {
    std::vector<AnnotationRecord> mine;
    for (auto& r : journal_.snapshot())
      if (index_.contains(r.sample_id)) mine.push_back(std::move(r));
    return build_report(mine, weighting_);
  }

  const std::vector<ReviewSample>& samples() const { return samples_; }

  void mount(httplib::Server& svr) {
    svr.Get("/api/review/next", [this](const httplib::Request& req, httplib::Response& res) {
      const auto rater = req.get_param_value("rater");
      if (unicode::trim(rater).empty()) return fail(res, 400, "missing rater");
      auto s = next(rater);
      if (!s) {
        res.status = 204;
        return;
      }
      reply(res, 200, {{"sample_id", s->sample_id}, {"sentence", s->sentence}, {"gloss", s->gloss}});
    });
    svr.Post(R"(/api/review/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception&) {
        return fail(res, 400, "body is not valid JSON");
      }
      try {
        auto r = submit(id, body);
        log::pair_event("review_submit", id, "ok", r.rater_id);
        reply(res, 200, to_json(r));
      } catch (const UnknownSample& e) {
        fail(res, 404, e.what());
      } catch (const Error& e) {
        fail(res, 422, e.what());
      }
    });
    svr.Get("/api/report", [this](const httplib::Request&, httplib::Response& res) {
      try {
        reply(res, 200, to_json(report()));
      } catch (const Error& e) {
        fail(res, 409, e.what());
      }
    });
    svr.Get("/api/progress", [this](const httplib::Request& req, httplib::Response& res) {
      const auto rater = req.get_param_value("rater");
      if (unicode::trim(rater).empty()) return fail(res, 400, "missing rater");
      const auto p = progress(rater);
      reply(res, 200, {{"done", p.done}, {"total", p.total}});
    });
  }

 private:
  static void reply(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }
  static void fail(httplib::Response& res, int status, const std::string& msg) { reply(res, status, {{"error", msg}}); }

  std::vector<ReviewSample> samples_;
  std::map<std::string, size_t, std::less<>> index_;
  AnnotationJournal& journal_;
  KappaWeighting weighting_;
  Clock clock_;
  std::mutex mu_;
};

}  // namespace glossforge
