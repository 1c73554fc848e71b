#pragma once

#include <cstddef>
#include <string>

namespace supmae {

// Diagnostics go to stderr, one line per call, prefixed by level.
void log_warning(const std::string& message);
void log_info(const std::string& message);

// Suppresses info lines (warnings always print).
void set_quiet(bool quiet);

// Number of warnings issued so far in this process.
std::size_t warning_count();

}  // namespace supmae
