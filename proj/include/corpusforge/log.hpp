#pragma once

#include <chrono>
#include <ctime>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace corpusforge::log {

enum class Level { debug, info, warn, error };

inline std::string_view level_name(Level l) {
    switch (l) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warn";
    case Level::error: return "error";
    }
    return "info";
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point tp = std::chrono::system_clock::now()) {
    const std::time_t t = std::chrono::system_clock::to_time_t(tp);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct Settings {
    Level min_level = Level::info;
    std::ostream* sink = &std::cerr;
};

inline Settings& settings() {
    static Settings s;
    return s;
}

// One structured line per event: timestamp, stage, level, message.
inline void write(Level level, std::string_view stage, std::string_view message) {
    auto& s = settings();
    if (level < s.min_level || s.sink == nullptr) return;
    static std::mutex mu;
    std::lock_guard lock(mu);
    *s.sink << utc_timestamp() << " stage=" << stage << " level=" << level_name(level)
            << " msg=\"" << message << "\"\n";
}

inline void info(std::string_view stage, std::string_view msg) { write(Level::info, stage, msg); }
inline void warn(std::string_view stage, std::string_view msg) { write(Level::warn, stage, msg); }
inline void error(std::string_view stage, std::string_view msg) { write(Level::error, stage, msg); }
inline void debug(std::string_view stage, std::string_view msg) { write(Level::debug, stage, msg); }

} // namespace corpusforge::log
