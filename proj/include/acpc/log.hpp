#pragma once

#include <string_view>

// Minimal stderr logging. Verbosity comes from ACPC_LOG (debug|info); unset
// means warnings only.
namespace acpc::log {

enum class Level { Debug = 0, Info = 1, Warn = 2 };

Level threshold();
void write(Level level, std::string_view message);

inline void debug(std::string_view m) { write(Level::Debug, m); }
inline void info(std::string_view m) { write(Level::Info, m); }
inline void warn(std::string_view m) { write(Level::Warn, m); }

}  // namespace acpc::log
