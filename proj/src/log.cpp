// SPDX-License-Identifier: Apache-2.0
#include "dfd/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>

namespace dfd {

LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("BE_LOG");
        if (env == nullptr) return LogLevel::Info;
        if (std::strcmp(env, "debug") == 0) return LogLevel::Debug;
        if (std::strcmp(env, "error") == 0) return LogLevel::Error;
        return LogLevel::Info;
    }();
    return level;
}

namespace {
std::mutex g_log_mutex;

void emit(const char* tag, const std::string& msg) {
    std::lock_guard<std::mutex> lock(g_log_mutex);
    std::fprintf(stderr, "[%s] %s\n", tag, msg.c_str());
}
}  // namespace

void log_error(const std::string& msg) {
    emit("error", msg);
}
void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::Info) emit("info", msg);
}
void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::Debug) emit("debug", msg);
}

}  // namespace dfd
