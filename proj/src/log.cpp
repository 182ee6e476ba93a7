#include "acpc/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace acpc::log {

Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("ACPC_LOG");
    const std::string v = env ? env : "";
    if (v == "debug") return Level::Debug;
    if (v == "info") return Level::Info;
    return Level::Warn;
  }();
  return level;
}

void write(Level level, std::string_view message) {
  if (level < threshold()) return;
  static std::mutex mu;
  static constexpr const char* kNames[] = {"debug", "info", "warn"};
  std::lock_guard lock(mu);
  std::cerr << "[" << kNames[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace acpc::log
