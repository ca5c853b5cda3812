#ifndef GDDM_LOG_HPP
#define GDDM_LOG_HPP

#include <atomic>
#include <iostream>
#include <string_view>

namespace gddm::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

inline std::atomic<Level>& threshold() {
  static std::atomic<Level> level{Level::kWarn};
  return level;
}

inline void set_level(Level l) { threshold().store(l); }

inline void write(Level l, std::string_view msg) {
  if (l < threshold().load()) return;
  static constexpr std::string_view kTags[] = {"debug", "info", "warning",
                                               "error"};
  std::cerr << "[gddm] " << kTags[static_cast<int>(l)] << ": " << msg << '\n';
}

inline void debug(std::string_view msg) { write(Level::kDebug, msg); }
inline void info(std::string_view msg) { write(Level::kInfo, msg); }
inline void warn(std::string_view msg) { write(Level::kWarn, msg); }
inline void error(std::string_view msg) { write(Level::kError, msg); }

}  // namespace gddm::log

#endif  // GDDM_LOG_HPP
