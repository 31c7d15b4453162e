#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace queenwatch {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

// Verbosity comes from QUEENWATCH_LOG (0/1/2 or quiet/info/debug). Default: info.
inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("QUEENWATCH_LOG");
        if (env == nullptr || *env == '\0') return LogLevel::info;
        if (std::strcmp(env, "0") == 0 || std::strcmp(env, "quiet") == 0) return LogLevel::quiet;
        if (std::strcmp(env, "2") == 0 || std::strcmp(env, "debug") == 0) return LogLevel::debug;
        return LogLevel::info;
    }();
    return level;
}

// One structured line per stage: "queenwatch stage=train rows=5000 ...".
inline void log_line(LogLevel at, const std::string& stage, const std::string& kv) {
    if (static_cast<int>(log_level()) < static_cast<int>(at)) return;
    std::fprintf(stderr, "queenwatch stage=%s %s\n", stage.c_str(), kv.c_str());
}

inline void log_info(const std::string& stage, const std::string& kv) {
    log_line(LogLevel::info, stage, kv);
}

inline void log_debug(const std::string& stage, const std::string& kv) {
    log_line(LogLevel::debug, stage, kv);
}

}  // namespace queenwatch
