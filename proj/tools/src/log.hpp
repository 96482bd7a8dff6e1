#pragma once

#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace sda::cli {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

/// Level from SDA_LOG (error|warn|info|debug), info when unset.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("SDA_LOG");
    if (env == nullptr) return LogLevel::info;
    if (std::strcmp(env, "error") == 0) return LogLevel::error;
    if (std::strcmp(env, "warn") == 0) return LogLevel::warn;
    if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
    return LogLevel::info;
  }();
  return level;
}

/// printf-style line on stderr when `level` is enabled.
[[gnu::format(printf, 2, 3)]] inline void log(LogLevel level, const char* fmt, ...) {
  if (level > log_level()) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::fprintf(stderr, "[%s] ", names[static_cast<int>(level)]);
  va_list args;
  va_start(args, fmt);
  std::vfprintf(stderr, fmt, args);
  va_end(args);
  std::fputc('\n', stderr);
}

}  // namespace sda::cli
