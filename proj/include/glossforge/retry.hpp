#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <string>
#include <thread>

#include "glossforge/error.hpp"
#include "glossforge/log.hpp"

namespace glossforge {

/// Exponential backoff: attempt k (0-based) waits initial_delay * multiplier^(k-1)
/// before running, capped at max_delay. Only Errc::backend failures are retried.
struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_delay{250};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{4000};

  std::chrono::milliseconds delay_before(int attempt) const {
    if (attempt <= 0) return std::chrono::milliseconds{0};
    double ms = static_cast<double>(initial_delay.count());
    for (int i = 1; i < attempt; ++i) ms *= multiplier;
    return std::chrono::milliseconds{static_cast<long long>(std::min(ms, static_cast<double>(max_delay.count())))};
  }

  static RetryPolicy immediate(int attempts = 3) { return {attempts, std::chrono::milliseconds{0}, 1.0, std::chrono::milliseconds{0}}; }
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline void real_sleep(std::chrono::milliseconds d) {
  if (d.count() > 0) std::this_thread::sleep_for(d);
}

template <typename F>
auto with_retry(const RetryPolicy& policy, std::string_view what, F&& fn, const Sleeper& sleep = real_sleep) -> decltype(fn()) {
  const int attempts = std::max(1, policy.max_attempts);
  std::string last;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    sleep(policy.delay_before(attempt));
    try {
      return fn();
    } catch (const Error& e) {
      if (e.code() != Errc::backend) throw;
      last = e.what();
      log::warn("retry", {{"what", what}, {"attempt", attempt + 1}, {"of", attempts}, {"error", last}});
    }
  }
  throw Error(Errc::backend, std::string(what) + " failed after " + std::to_string(attempts) + " attempts: " + last);
}

}  // namespace glossforge
