#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace supmae {

// Machine-parsable failure classes. The CLI prints `error: <category>: <message>`.
enum class ErrorCategory {
  dimension,
  usage,
  config,
  ingest,
  data,
  geometry,
  contract,
  capability,
  protocol,
  corruption,
  migration,
  load,
  numeric,
  invariant,
  io,
};

constexpr std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::dimension: return "dimension";
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::config: return "config";
    case ErrorCategory::ingest: return "ingest";
    case ErrorCategory::data: return "data";
    case ErrorCategory::geometry: return "geometry";
    case ErrorCategory::contract: return "contract";
    case ErrorCategory::capability: return "capability";
    case ErrorCategory::protocol: return "protocol";
    case ErrorCategory::corruption: return "corruption";
    case ErrorCategory::migration: return "migration";
    case ErrorCategory::load: return "load";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::invariant: return "invariant";
    case ErrorCategory::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

}  // namespace supmae
