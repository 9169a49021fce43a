#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace glossforge::log {

enum class Level { debug, info, warn, error };

constexpr std::string_view to_string(Level l) {
  switch (l) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warn";
    case Level::error: return "error";
  }
  return "info";
}

using Sink = std::function<void(Level, const std::string&)>;

namespace detail {
struct State {
  std::mutex mu;
  Level min_level = Level::warn;
  Sink sink = [](Level, const std::string& line) { std::cerr << line << '\n'; };
};

inline State& state() {
  static State s;
  return s;
}
}  // namespace detail

inline void set_level(Level l) {
  std::lock_guard lock(detail::state().mu);
  detail::state().min_level = l;
}

/// Replaces the output sink; returns the previous one.
inline Sink set_sink(Sink s) {
  std::lock_guard lock(detail::state().mu);
  return std::exchange(detail::state().sink, std::move(s));
}

/// Emits one JSON object per line: {"level":..,"event":..,<fields>}.
inline void emit(Level l, std::string_view event, nlohmann::ordered_json fields = nlohmann::ordered_json::object()) {
  auto& st = detail::state();
  std::lock_guard lock(st.mu);
  if (l < st.min_level) return;
  nlohmann::ordered_json line = {{"level", to_string(l)}, {"event", event}};
  for (auto& [k, v] : fields.items()) line[k] = v;
  st.sink(l, line.dump());
}

inline void info(std::string_view event, nlohmann::ordered_json fields = nlohmann::ordered_json::object()) {
  emit(Level::info, event, std::move(fields));
}
inline void warn(std::string_view event, nlohmann::ordered_json fields = nlohmann::ordered_json::object()) {
  emit(Level::warn, event, std::move(fields));
}

/// One line per processed pair, for resumability audits.
inline void pair_event(std::string_view action, std::string_view id, std::string_view outcome,
                       std::string_view detail = {}) {
  nlohmann::ordered_json f = {{"id", id}, {"action", action}, {"outcome", outcome}};
  if (!detail.empty()) f["detail"] = detail;
  emit(Level::info, "pair", std::move(f));
}

}  // namespace glossforge::log
