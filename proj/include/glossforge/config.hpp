#pragma once

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "glossforge/corpus.hpp"
#include "glossforge/error.hpp"
#include "glossforge/retrieval.hpp"
#include "glossforge/unicode.hpp"
#include "glossforge/validation.hpp"

namespace glossforge {

// Grammar, one statement per line:
//   # comment            (also ';')
//   [section]            prefixes following keys with "section."
//   key = value          value trimmed; surrounding double quotes removed
// Keys are [a-z0-9_.]+. A key may appear once.

class ConfigFile {
 public:
  std::optional<std::string> get(std::string_view key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::string require(std::string_view key) const {
    auto v = get(key);
    if (!v) throw Error(Errc::config, "missing config key: " + std::string(key));
    return *v;
  }

  void set(const std::string& key, std::string value, std::string origin) {
    values_[key] = std::move(value);
    origin_[key] = std::move(origin);
  }

  bool contains(std::string_view key) const { return values_.find(key) != values_.end(); }
  const std::map<std::string, std::string, std::less<>>& values() const { return values_; }
  std::string origin(const std::string& key) const {
    auto it = origin_.find(key);
    return it == origin_.end() ? "<default>" : it->second;
  }

 private:
  std::map<std::string, std::string, std::less<>> values_;
  std::map<std::string, std::string> origin_;
};

/// Key names that look like credentials.
inline bool is_secret_key(std::string_view key) {
  const auto leaf = key.substr(key.rfind('.') == std::string_view::npos ? 0 : key.rfind('.') + 1);
  for (std::string_view w : {"key", "token", "secret", "password"})
    if (leaf == w || leaf.ends_with("_" + std::string(w)) || leaf.starts_with(std::string(w) + "_")) return true;
  return false;
}

inline ConfigFile parse_config(std::string_view text, const std::string& source = "<config>") {
  ConfigFile cfg;
  std::istringstream in{std::string(text)};
  std::string section;
  size_t lineno = 0;
  auto valid_name = [](std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
      return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '.';
    });
  };
  for (std::string raw; std::getline(in, raw);) {
    ++lineno;
    const auto where = source + ":" + std::to_string(lineno);
    const auto line = unicode::trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(Errc::config, where + ": unterminated section header");
      section = unicode::trim(std::string_view(line).substr(1, line.size() - 2));
      if (!valid_name(section)) throw Error(Errc::config, where + ": bad section name \"" + section + "\"");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(Errc::config, where + ": expected key = value");
    const auto name = unicode::trim(std::string_view(line).substr(0, eq));
    auto value = unicode::trim(std::string_view(line).substr(eq + 1));
    if (!valid_name(name)) throw Error(Errc::config, where + ": bad key \"" + name + "\"");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    const auto key = section.empty() ? name : section + "." + name;
    if (is_secret_key(key))
      throw Error(Errc::config, where + ": \"" + key + "\" looks like a secret; pass credentials through the environment");
    if (cfg.contains(key)) throw Error(Errc::config, where + ": duplicate key " + key);
    cfg.set(key, value, where);
  }
  return cfg;
}

inline ConfigFile load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(Errc::config, "config file not found: " + path.string());
  return parse_config(read_text_file(path), path.string());
}

using EnvLookup = std::function<std::optional<std::string>(const char*)>;

inline std::optional<std::string> process_env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

/// Environment variables that override config keys.
inline const std::map<std::string, std::string>& env_overrides() {
  static const std::map<std::string, std::string> m{
      {"GLOSSFORGE_LLM_URL", "llm.url"},
      {"GLOSSFORGE_EMBED_URL", "embed.url"},
      {"GLOSSFORGE_FILLMASK_URL", "masking.url"},
  };
  return m;
}

inline void apply_env(ConfigFile& cfg, const EnvLookup& env = process_env) {
  for (const auto& [var, key] : env_overrides())
    if (auto v = env(var.c_str())) cfg.set(key, *v, "$" + var);
}

// ---------------------------------------------------------------------------
// Typed view

enum class BackendKind { mock, http };

struct BackendConfig {
  BackendKind kind = BackendKind::mock;
  std::string url;
  std::string model = "mock";
  std::chrono::milliseconds timeout{60000};
};

struct PipelineConfig {
  std::filesystem::path corpus;
  SplitRatios split;
  std::filesystem::path rules;
  double rules_fraction = 0.25;
  size_t rules_per_pair = 2;
  RetrievalConfig retrieval;
  BackendConfig embed;
  size_t embed_dimension = 256;
  BackendConfig llm;
  double temperature = 0.0;
  size_t max_output_tokens = 256;
  size_t concurrency = 4;
  std::optional<std::filesystem::path> prompts;
  double mask_fraction = 0.25;
  size_t mask_k = 2;
  std::filesystem::path stoplist;
  std::filesystem::path vocabulary;
  BackendConfig fillmask;
  std::filesystem::path rag_sources;
  double rag_source_factor = 2.0;
  int review_port = 8080;
  double review_fraction = 0.15;
  uint64_t review_seed = 0;
  KappaWeighting weighting = KappaWeighting::none;
  std::filesystem::path output = "out";
  std::optional<std::string> llm_key;    // environment only
  std::optional<std::string> embed_key;  // environment only
};

namespace detail {
template <typename T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  if constexpr (std::is_floating_point_v<T>) {
    try {
      size_t used = 0;
      v = static_cast<T>(std::stod(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::logic_error&) {
      throw Error(Errc::config, key + ": expected a number, got \"" + s + "\"");
    }
  } else {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
      throw Error(Errc::config, key + ": expected an integer, got \"" + s + "\"");
  }
  return v;
}
}  // namespace detail

inline const std::set<std::string, std::less<>>& known_config_keys() {
  static const std::set<std::string, std::less<>> k{
      "corpus.path",        "split.train",       "split.dev",         "split.test",           "split.seed",
      "rules.path",         "rules.fraction",    "rules.per_pair",    "retrieval.threshold",  "retrieval.cap",
      "retrieval.min_examples", "retrieval.metric", "embed.backend",  "embed.url",            "embed.model",
      "embed.dimension",    "embed.timeout_ms",  "llm.backend",       "llm.url",              "llm.model",
      "llm.temperature",    "llm.max_output_tokens", "llm.timeout_ms", "llm.concurrency",     "prompts.dir",
      "masking.fraction",   "masking.k",         "masking.stoplist",  "masking.vocabulary",   "masking.backend",
      "masking.url",        "masking.timeout_ms", "rag.sources",      "rag.source_factor",    "review.port",
      "review.fraction",    "review.seed",       "review.weighting",  "output.dir",
  };
  return k;
}

/// Typed config. Relative paths resolve against `base`; unknown keys are
/// rejected so typos surface early.
inline PipelineConfig to_pipeline_config(const ConfigFile& f, const std::filesystem::path& base,
                                         const EnvLookup& env = process_env) {
  for (const auto& [k, _] : f.values())
    if (!known_config_keys().contains(k)) throw Error(Errc::config, f.origin(k) + ": unknown config key " + k);

  auto path = [&](std::string_view key) {
    std::filesystem::path p = f.require(key);
    return p.is_absolute() ? p : base / p;
  };
  auto opt_path = [&](std::string_view key, std::filesystem::path fallback) {
    if (!f.contains(key)) return fallback;
    return path(key);
  };
  auto num = [&]<typename T>(std::string_view key, T fallback) {
    auto v = f.get(key);
    return v ? detail::parse_number<T>(std::string(key), *v) : fallback;
  };
  auto backend = [&](const std::string& section, std::chrono::milliseconds timeout) {
    BackendConfig b;
    const auto kind = f.get(section + ".backend").value_or("mock");
    if (kind == "mock") {
      b.kind = BackendKind::mock;
    } else if (kind == "http") {
      b.kind = BackendKind::http;
      b.url = f.require(section + ".url");
    } else {
      throw Error(Errc::config, section + ".backend must be mock or http, got \"" + kind + "\"");
    }
    b.model = f.get(section + ".model").value_or(b.kind == BackendKind::mock ? "mock" : "remote");
    b.timeout = std::chrono::milliseconds(num(section + ".timeout_ms", static_cast<long long>(timeout.count())));
    return b;
  };

  PipelineConfig c;
  c.corpus = path("corpus.path");
  c.split.train = num("split.train", c.split.train);
  c.split.dev = num("split.dev", c.split.dev);
  c.split.test = num("split.test", c.split.test);
  c.split.seed = num("split.seed", c.split.seed);
  try {
    c.split.validate();
  } catch (const Error& e) {
    throw Error(Errc::config, e.what());
  }
  c.rules = path("rules.path");
  c.rules_fraction = num("rules.fraction", c.rules_fraction);
  c.rules_per_pair = num("rules.per_pair", c.rules_per_pair);
  c.retrieval.threshold = num("retrieval.threshold", c.retrieval.threshold);
  c.retrieval.cap = num("retrieval.cap", c.retrieval.cap);
  c.retrieval.min_examples = num("retrieval.min_examples", c.retrieval.min_examples);
  if (auto m = f.get("retrieval.metric")) {
    if (*m == "cosine") c.retrieval.metric = SimilarityMetric::cosine;
    else if (*m == "dot") c.retrieval.metric = SimilarityMetric::dot;
    else throw Error(Errc::config, "retrieval.metric must be cosine or dot, got \"" + *m + "\"");
  }
  c.retrieval.validate();
  c.embed = backend("embed", std::chrono::seconds{60});
  c.embed_dimension = num("embed.dimension", c.embed_dimension);
  c.llm = backend("llm", std::chrono::seconds{60});
  c.temperature = num("llm.temperature", c.temperature);
  c.max_output_tokens = num("llm.max_output_tokens", c.max_output_tokens);
  c.concurrency = num("llm.concurrency", c.concurrency);
  if (f.contains("prompts.dir")) c.prompts = path("prompts.dir");
  c.mask_fraction = num("masking.fraction", c.mask_fraction);
  c.mask_k = num("masking.k", c.mask_k);
  c.stoplist = path("masking.stoplist");
  c.fillmask = backend("masking", std::chrono::seconds{30});
  if (c.fillmask.kind == BackendKind::mock) c.vocabulary = path("masking.vocabulary");
  c.rag_sources = path("rag.sources");
  c.rag_source_factor = num("rag.source_factor", c.rag_source_factor);
  c.review_port = num("review.port", c.review_port);
  c.review_fraction = num("review.fraction", c.review_fraction);
  c.review_seed = num("review.seed", c.review_seed);
  if (auto w = f.get("review.weighting")) {
    auto parsed = parse_weighting(*w);
    if (!parsed) throw Error(Errc::config, "review.weighting must be none, linear or quadratic");
    c.weighting = *parsed;
  }
  c.output = opt_path("output.dir", base / "out");
  c.llm_key = env("GLOSSFORGE_LLM_KEY");
  c.embed_key = env("GLOSSFORGE_EMBED_KEY");

  for (double fr : {c.rules_fraction, c.mask_fraction})
    if (!(fr >= 0.0 && fr <= 1.0)) throw Error(Errc::config, "augmentation fractions must lie in [0,1]");
  if (!(c.rag_source_factor >= 0.0)) throw Error(Errc::config, "rag.source_factor must be non-negative");
  if (c.mask_k == 0) throw Error(Errc::config, "masking.k must be at least 1");
  if (c.concurrency == 0) throw Error(Errc::config, "llm.concurrency must be at least 1");

  std::vector<std::pair<std::string, std::filesystem::path>> must_exist{
      {"corpus.path", c.corpus}, {"rules.path", c.rules}, {"masking.stoplist", c.stoplist}, {"rag.sources", c.rag_sources}};
  if (c.fillmask.kind == BackendKind::mock) must_exist.emplace_back("masking.vocabulary", c.vocabulary);
  if (c.prompts) must_exist.emplace_back("prompts.dir", *c.prompts);
  for (const auto& [key, p] : must_exist)
    if (!std::filesystem::exists(p)) throw Error(Errc::config, key + ": path does not exist: " + p.string());
  return c;
}

/// Loads, applies environment overrides, resolves paths against the
/// config file's directory.
inline PipelineConfig load_pipeline_config(const std::filesystem::path& path, const EnvLookup& env = process_env) {
  auto f = load_config(path);
  apply_env(f, env);
  const auto base = std::filesystem::absolute(path).parent_path();
  return to_pipeline_config(f, base, env);
}

}  // namespace glossforge
