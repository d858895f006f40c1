#include "ffo/types.hpp"

#include <cstdlib>
#include <iostream>

namespace ffo {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("FFO_LOG");
    if (env == nullptr) return LogLevel::off;
    const std::string value(env);
    if (value == "debug" || value == "DEBUG" || value == "2")
      return LogLevel::debug;
    if (value == "info" || value == "INFO" || value == "1")
      return LogLevel::info;
    return LogLevel::off;
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::info) std::cerr << "[ffo] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::debug) std::cerr << "[ffo:debug] " << msg << "\n";
}

}  // namespace ffo
