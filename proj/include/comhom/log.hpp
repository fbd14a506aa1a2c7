#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace comhom::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Verbosity comes from COMHOM_LOG (error|warn|info|debug), default warn.
inline Level threshold() {
    static Level lv = [] {
        const char* env = std::getenv("COMHOM_LOG");
        if (!env) return Level::Warn;
        if (std::strcmp(env, "error") == 0) return Level::Error;
        if (std::strcmp(env, "info") == 0) return Level::Info;
        if (std::strcmp(env, "debug") == 0) return Level::Debug;
        return Level::Warn;
    }();
    return lv;
}

inline void write(Level lv, const std::string& msg) {
    if (lv > threshold()) return;
    static const char* tag[] = {"error", "warn", "info", "debug"};
    std::fprintf(stderr, "[%s] %s\n", tag[static_cast<int>(lv)], msg.c_str());
    std::fflush(stderr);
}

inline void error(const std::string& m) { write(Level::Error, m); }
inline void warn(const std::string& m) { write(Level::Warn, m); }
inline void info(const std::string& m) { write(Level::Info, m); }
inline void debug(const std::string& m) { write(Level::Debug, m); }

}  // namespace comhom::log
