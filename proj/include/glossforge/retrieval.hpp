#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <memory>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "glossforge/corpus.hpp"
#include "glossforge/error.hpp"
#include "glossforge/http.hpp"
#include "glossforge/log.hpp"
#include "glossforge/retry.hpp"
#include "glossforge/rng.hpp"
#include "glossforge/unicode.hpp"

namespace glossforge {

using Vector = std::vector<float>;

/// Text -> fixed-dimension vectors. Implementations must be deterministic:
/// the same text always maps to the same vector.
class EmbedderBackend {
 public:
  virtual ~EmbedderBackend() = default;
  virtual std::vector<Vector> embed(std::span<const std::string> texts) = 0;
  virtual std::string name() const = 0;
  /// 0 when the dimension is only known after the first call.
  virtual size_t dimension() const = 0;
};

inline double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw Error(Errc::dimension, "dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(Errc::invalid_argument, "cosine similarity of a zero vector");
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

inline double l2_norm(std::span<const float> v) {
  double s = 0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

inline Vector normalized(std::span<const float> v) {
  const double n = l2_norm(v);
  if (n == 0.0) throw Error(Errc::invalid_argument, "cannot normalize a zero vector");
  Vector out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / n);
  return out;
}

// ---------------------------------------------------------------------------
// Offline embedders

/// Maps each NFC text to a pseudo-random unit vector seeded by its hash.
/// Distinct texts are nearly orthogonal; identical texts score 1.
class HashEmbedder : public EmbedderBackend {
 public:
  explicit HashEmbedder(size_t dim = 64, uint64_t salt = 0) : dim_(dim), salt_(salt) {}

  std::vector<Vector> embed(std::span<const std::string> texts) override {
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(vector_for(unicode::nfc(t)));
    return out;
  }
  std::string name() const override { return "mock-hash-" + std::to_string(dim_); }
  size_t dimension() const override { return dim_; }

  Vector vector_for(std::string_view key) const {
    DeterministicRng rng(fnv1a64(key) ^ salt_);
    std::vector<double> g(dim_);
    // Box-Muller pairs give an isotropic direction.
    for (size_t i = 0; i < dim_; i += 2) {
      const double u1 = 1.0 - rng.unit();
      const double u2 = rng.unit();
      const double r = std::sqrt(-2.0 * std::log(u1));
      g[i] = r * std::cos(2 * std::numbers::pi * u2);
      if (i + 1 < dim_) g[i + 1] = r * std::sin(2 * std::numbers::pi * u2);
    }
    double n = 0;
    for (double x : g) n += x * x;
    n = std::sqrt(n);
    Vector v(dim_);
    for (size_t i = 0; i < dim_; ++i) v[i] = static_cast<float>(g[i] / n);
    return v;
  }

 private:
  size_t dim_;
  uint64_t salt_;
};

/// Bag-of-tokens variant: the sum of per-token hash vectors, normalized.
/// Sentences sharing most tokens score high, which exercises both the
/// few-shot and the fallback paths offline.
class TokenHashEmbedder : public EmbedderBackend {
 public:
  explicit TokenHashEmbedder(size_t dim = 256) : tokens_(dim, 0x9e3779b97f4a7c15ULL) {}

  std::vector<Vector> embed(std::span<const std::string> texts) override {
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
      std::vector<double> acc(tokens_.dimension(), 0.0);
      auto toks = unicode::split_whitespace(unicode::nfc(t));
      if (toks.empty()) toks.emplace_back();
      for (const auto& tok : toks) {
        auto v = tokens_.vector_for(unicode::split_trailing_punct(tok).first);
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
      }
      Vector v(acc.size());
      for (size_t i = 0; i < acc.size(); ++i) v[i] = static_cast<float>(acc[i]);
      out.push_back(normalized(v));
    }
    return out;
  }
  std::string name() const override { return "mock-token-" + std::to_string(tokens_.dimension()); }
  size_t dimension() const override { return tokens_.dimension(); }

 private:
  HashEmbedder tokens_;
};

/// Remote embedder: POST {"texts": [...]} -> {"vectors": [[...], ...]}.
class HttpEmbedder : public EmbedderBackend {
 public:
  HttpEmbedder(const std::string& url, std::optional<std::string> token, std::string model_name = "remote",
               std::chrono::milliseconds timeout = std::chrono::seconds{60})
      : client_(url, std::move(token), timeout), name_(std::move(model_name)) {}

  std::vector<Vector> embed(std::span<const std::string> texts) override {
    nlohmann::json body = {{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
    auto res = client_.post(body);
    if (!res.contains("vectors") || !res["vectors"].is_array())
      throw Error(Errc::backend, "embedder response lacks \"vectors\" array");
    std::vector<Vector> out;
    for (const auto& row : res["vectors"]) {
      if (!row.is_array()) throw Error(Errc::backend, "embedder vector is not an array");
      Vector v;
      v.reserve(row.size());
      for (const auto& x : row) v.push_back(x.get<float>());
      out.push_back(std::move(v));
    }
    if (out.size() != texts.size())
      throw Error(Errc::backend, "embedder returned " + std::to_string(out.size()) + " vectors for " + std::to_string(texts.size()) + " texts");
    if (!out.empty()) dim_ = out.front().size();
    return out;
  }
  std::string name() const override { return name_; }
  size_t dimension() const override { return dim_; }

 private:
  http::JsonClient client_;
  std::string name_;
  size_t dim_ = 0;
};

// ---------------------------------------------------------------------------
// Index

struct IndexEntry {
  std::string id;
  Vector vec;
  std::string text;

  bool operator==(const IndexEntry&) const = default;
};

struct EmbeddingIndex {
  std::vector<IndexEntry> entries;
  size_t dimension = 0;
  std::string backend_name;

  bool operator==(const EmbeddingIndex&) const = default;
  size_t size() const { return entries.size(); }
};

enum class SimilarityMetric { cosine, dot };

struct RetrievalConfig {
  double threshold = 0.5;
  size_t cap = 20;
  size_t min_examples = 3;
  SimilarityMetric metric = SimilarityMetric::cosine;

  void validate() const {
    if (!(threshold >= -1.0 && threshold <= 1.0)) throw Error(Errc::config, "retrieval threshold must lie in [-1,1]");
    if (cap == 0) throw Error(Errc::config, "retrieval cap must be positive");
    if (min_examples > cap) throw Error(Errc::config, "min_examples must not exceed cap");
  }
};

struct Match {
  std::string id;
  double score = 0;

  bool operator==(const Match&) const = default;
};

struct RetrievalResult {
  std::vector<Match> matches;  // descending score, ties by ascending id
  bool fallback_needed = true;

  bool operator==(const RetrievalResult&) const = default;
};

struct BuildOptions {
  size_t batch_size = 64;
  RetryPolicy retry;
  Sleeper sleep = real_sleep;
};

/// Embeds every training pair. When `train` carries a split, only its train
/// class is indexed. Vectors are L2-normalized on insert.
inline EmbeddingIndex build_index(const Corpus& train, EmbedderBackend& backend, const BuildOptions& opts = {}) {
  const Corpus source = train.split ? train.subset(SplitClass::train) : train;
  if (source.empty()) throw Error(Errc::invalid_argument, "cannot build an index over an empty training set");
  EmbeddingIndex idx;
  idx.backend_name = backend.name();
  idx.dimension = backend.dimension();
  std::set<std::string_view> ids;
  for (const auto& p : source.pairs)
    if (!ids.insert(p.id).second) throw Error(Errc::duplicate_id, "duplicate pair id in training set: " + p.id);

  const size_t batch = std::max<size_t>(1, opts.batch_size);
  for (size_t start = 0; start < source.size(); start += batch) {
    const size_t end = std::min(source.size(), start + batch);
    std::vector<std::string> texts;
    for (size_t i = start; i < end; ++i) texts.push_back(source.pairs[i].sentence);
    auto vecs = with_retry(opts.retry, "embed batch", [&] { return backend.embed(texts); }, opts.sleep);
    if (vecs.size() != texts.size()) throw Error(Errc::backend, "embedder returned a short batch");
    for (size_t k = 0; k < vecs.size(); ++k) {
      if (idx.dimension == 0) idx.dimension = vecs[k].size();
      if (vecs[k].size() != idx.dimension)
        throw Error(Errc::dimension, "embedding dimension drift: expected " + std::to_string(idx.dimension) + ", got " +
                                         std::to_string(vecs[k].size()));
      const auto& p = source.pairs[start + k];
      idx.entries.push_back({p.id, normalized(vecs[k]), p.sentence});
    }
  }
  return idx;
}

struct QueryOptions {
  /// Skip entries whose text equals the query (self-retrieval). Generation
  /// turns this on so a stored sentence cannot be its own example.
  bool exclude_self = false;
};

/// Scores an already-embedded query against the index.
inline RetrievalResult rank(const EmbeddingIndex& idx, std::span<const float> query, std::string_view query_text,
                            const RetrievalConfig& cfg, const QueryOptions& opts = {}) {
  cfg.validate();
  if (query.size() != idx.dimension)
    throw Error(Errc::dimension, "query dimension " + std::to_string(query.size()) + " != index dimension " + std::to_string(idx.dimension));
  Vector q = cfg.metric == SimilarityMetric::cosine ? normalized(query) : Vector(query.begin(), query.end());
  const std::string self = opts.exclude_self ? unicode::nfc(query_text) : std::string();
  RetrievalResult r;
  for (const auto& e : idx.entries) {
    if (opts.exclude_self && e.text == self) continue;
    double s = 0;
    for (size_t i = 0; i < q.size(); ++i) s += static_cast<double>(q[i]) * e.vec[i];
    if (cfg.metric == SimilarityMetric::cosine) s = std::clamp(s, -1.0, 1.0);
    if (s >= cfg.threshold) r.matches.push_back({e.id, s});
  }
  std::sort(r.matches.begin(), r.matches.end(), [](const Match& a, const Match& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (r.matches.size() > cfg.cap) r.matches.resize(cfg.cap);
  r.fallback_needed = r.matches.size() < cfg.min_examples;
  return r;
}

inline RetrievalResult query_index(const EmbeddingIndex& idx, std::string_view sentence, const RetrievalConfig& cfg,
                                   EmbedderBackend& backend, const QueryOptions& opts = {}) {
  if (idx.entries.empty()) throw Error(Errc::invalid_argument, "query against an empty index");
  std::vector<std::string> texts{std::string(sentence)};
  auto vecs = backend.embed(texts);
  if (vecs.size() != 1) throw Error(Errc::backend, "embedder returned no vector for the query");
  return rank(idx, vecs[0], sentence, cfg, opts);
}

// ---------------------------------------------------------------------------
// Persistence
//
//   glossforge-index v1 dim=<D> backend=<name>
//   {"id":..,"vec":[..],"text":..}      one per entry
//   checksum=<16 hex digits of FNV-1a 64 over all preceding bytes>

inline constexpr std::string_view kIndexMagic = "glossforge-index";
inline constexpr int kIndexVersion = 1;

inline std::string serialize_index(const EmbeddingIndex& idx) {
  std::string out = std::string(kIndexMagic) + " v" + std::to_string(kIndexVersion) + " dim=" + std::to_string(idx.dimension) +
                    " backend=" + idx.backend_name + "\n";
  char buf[64];
  for (const auto& e : idx.entries) {
    out += "{\"id\":" + nlohmann::json(e.id).dump() + ",\"vec\":[";
    for (size_t i = 0; i < e.vec.size(); ++i) {
      if (i) out += ',';
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, e.vec[i]);
      out.append(buf, end);
    }
    out += "],\"text\":" + nlohmann::json(e.text).dump() + "}\n";
  }
  out += "checksum=" + hex64(fnv1a64(out)) + "\n";
  return out;
}

/// Parses and validates an index file body. A backend name different from
/// `expected_backend` (when given) logs a warning and loading proceeds.
inline EmbeddingIndex parse_index(std::string_view data, std::string_view expected_backend = {},
                                  const std::string& source = "<index>") {
  auto corrupt = [&](const std::string& why) { return Error(Errc::checksum, source + ": " + why); };
  std::string_view body = data;
  if (!body.empty() && body.back() == '\n') body.remove_suffix(1);
  const auto last_nl = body.rfind('\n');
  if (last_nl == std::string_view::npos) throw corrupt("missing checksum line (truncated file?)");
  const std::string_view checksum_line = body.substr(last_nl + 1);
  const std::string_view covered = data.substr(0, last_nl + 1);
  if (checksum_line.substr(0, 9) != "checksum=") throw corrupt("missing checksum line (truncated file?)");
  if (checksum_line.substr(9) != hex64(fnv1a64(covered))) throw corrupt("checksum mismatch");

  std::istringstream in{std::string(covered)};
  std::string line;
  std::getline(in, line);
  const std::string magic = std::string(kIndexMagic) + " v";
  if (line.rfind(magic, 0) != 0) throw Error(Errc::parse, source + ": not a glossforge index");
  EmbeddingIndex idx;
  {
    std::istringstream hdr(line.substr(magic.size()));
    int version = 0;
    std::string dim_field, backend_field;
    hdr >> version >> dim_field;
    std::getline(hdr, backend_field);
    if (version != kIndexVersion)
      throw Error(Errc::version, source + ": index version " + std::to_string(version) + " is not supported (expected " +
                                     std::to_string(kIndexVersion) + ")");
    if (dim_field.rfind("dim=", 0) != 0) throw Error(Errc::parse, source + ": header lacks dim=");
    idx.dimension = std::stoul(dim_field.substr(4));
    backend_field = unicode::trim(backend_field);
    if (backend_field.rfind("backend=", 0) != 0) throw Error(Errc::parse, source + ": header lacks backend=");
    idx.backend_name = backend_field.substr(8);
  }
  size_t lineno = 1;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++lineno;
    auto where = [&](const std::string& why) { return source + ":" + std::to_string(lineno) + ": " + why; };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse, where(e.what()));
    }
    IndexEntry e;
    e.id = j.at("id").get<std::string>();
    e.text = j.at("text").get<std::string>();
    // Re-read the vector with from_chars so float values round-trip exactly.
    const auto vec_start = line.find("\"vec\":[");
    const auto vec_end = line.find(']', vec_start);
    if (vec_start == std::string::npos || vec_end == std::string::npos) throw Error(Errc::parse, where("missing vec"));
    const char* p = line.data() + vec_start + 7;
    const char* stop = line.data() + vec_end;
    while (p < stop) {
      float f;
      auto [next, ec] = std::from_chars(p, stop, f);
      if (ec != std::errc()) throw Error(Errc::parse, where("bad float in vec"));
      e.vec.push_back(f);
      p = next;
      if (p < stop && *p == ',') ++p;
    }
    if (e.vec.size() != idx.dimension)
      throw Error(Errc::dimension, where("vector has " + std::to_string(e.vec.size()) + " components, header says " +
                                         std::to_string(idx.dimension)));
    if (std::abs(l2_norm(e.vec) - 1.0) > 1e-6) throw Error(Errc::invalid_argument, where("vector is not unit length"));
    if (!ids.insert(e.id).second) throw Error(Errc::duplicate_id, where("duplicate id " + e.id));
    idx.entries.push_back(std::move(e));
  }
  if (!expected_backend.empty() && expected_backend != idx.backend_name)
    log::warn("index_backend_mismatch", {{"index", source}, {"index_backend", idx.backend_name}, {"expected", expected_backend}});
  return idx;
}

inline void save_index(const EmbeddingIndex& idx, const std::filesystem::path& path) { write_text_file(path, serialize_index(idx)); }

inline EmbeddingIndex load_index(const std::filesystem::path& path, std::string_view expected_backend = {}) {
  return parse_index(read_text_file(path), expected_backend, path.string());
}

}  // namespace glossforge
