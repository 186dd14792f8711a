#include "decan/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace decan::log {

namespace {
std::atomic<Level> g_level{Level::Warn};
std::mutex g_mutex;

void emit(Level lvl, std::string_view tag, std::string_view message) {
  if (lvl < g_level.load()) return;
  std::lock_guard lock(g_mutex);
  std::cerr << "[" << tag << "] " << message << "\n";
}
}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level.load(); }

void info(std::string_view message) { emit(Level::Info, "info", message); }
void warn(std::string_view message) { emit(Level::Warn, "warn", message); }

}  // namespace decan::log
