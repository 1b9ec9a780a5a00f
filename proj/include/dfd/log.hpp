// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

namespace dfd {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

/// Current level, read once from the BE_LOG env var (error|info|debug).
LogLevel log_level();

void log_error(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace dfd
