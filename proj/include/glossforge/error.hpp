#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace glossforge {

enum class Errc {
  invalid_argument,
  parse,
  duplicate_id,
  io,
  config,
  backend,
  no_rule,
  unknown_tense,
  gloss_misaligned,
  not_alignable,
  not_maskable,
  degenerate,
  empty_generation,
  checksum,
  version,
  dimension,
  unmatched_samples,
};

constexpr std::string_view to_string(Errc c) {
  switch (c) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::parse: return "parse";
    case Errc::duplicate_id: return "duplicate_id";
    case Errc::io: return "io";
    case Errc::config: return "config";
    case Errc::backend: return "backend";
    case Errc::no_rule: return "no_rule";
    case Errc::unknown_tense: return "unknown_tense";
    case Errc::gloss_misaligned: return "gloss_misaligned";
    case Errc::not_alignable: return "not_alignable";
    case Errc::not_maskable: return "not_maskable";
    case Errc::degenerate: return "degenerate";
    case Errc::empty_generation: return "empty_generation";
    case Errc::checksum: return "checksum";
    case Errc::version: return "version";
    case Errc::dimension: return "dimension";
    case Errc::unmatched_samples: return "unmatched_samples";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Process exit status for the CLI: 2 config, 3 backend, 4 data.
constexpr int exit_code(Errc c) {
  switch (c) {
    case Errc::config: return 2;
    case Errc::backend: return 3;
    default: return 4;
  }
}

}  // namespace glossforge
