#ifndef MUFM_LOG_HPP
#define MUFM_LOG_HPP

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>

namespace mufm::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Read once from MUFM_LOG; anything unrecognized falls back to warn.
inline Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("MUFM_LOG");
    const std::string_view v = env ? env : "warn";
    if (v == "error") return Level::Error;
    if (v == "info") return Level::Info;
    if (v == "debug") return Level::Debug;
    return Level::Warn;
  }();
  return level;
}

template <typename... Args>
void write(Level level, Args&&... args) {
  if (static_cast<int>(level) > static_cast<int>(threshold())) return;
  static constexpr const char* tags[] = {"error", "warn", "info", "debug"};
  std::ostringstream os;
  os << "[mufm " << tags[static_cast<int>(level)] << "] ";
  (os << ... << args);
  os << '\n';
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << os.str();
}

template <typename... Args> void error(Args&&... a) { write(Level::Error, std::forward<Args>(a)...); }
template <typename... Args> void warn(Args&&... a) { write(Level::Warn, std::forward<Args>(a)...); }
template <typename... Args> void info(Args&&... a) { write(Level::Info, std::forward<Args>(a)...); }
template <typename... Args> void debug(Args&&... a) { write(Level::Debug, std::forward<Args>(a)...); }

}  // namespace mufm::log

#endif  // MUFM_LOG_HPP
