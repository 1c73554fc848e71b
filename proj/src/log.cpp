#include "supmae/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace supmae {
namespace {

std::mutex g_mu;
std::atomic<std::size_t> g_warnings{0};
std::atomic<bool> g_quiet{false};

}  // namespace

void log_warning(const std::string& message) {
  g_warnings.fetch_add(1);
  std::lock_guard lock(g_mu);
  std::cerr << "warning: " << message << '\n';
}

void log_info(const std::string& message) {
  if (g_quiet.load()) return;
  std::lock_guard lock(g_mu);
  std::cerr << "info: " << message << '\n';
}

void set_quiet(bool quiet) { g_quiet.store(quiet); }

std::size_t warning_count() { return g_warnings.load(); }

}  // namespace supmae
