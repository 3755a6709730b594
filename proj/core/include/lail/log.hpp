#pragma once

#include <functional>
#include <string_view>

namespace lail {

enum class LogLevel { info, warning };

using LogSink = std::function<void(LogLevel, std::string_view)>;

/// Replaces the process-wide sink; an empty function restores the stderr sink.
/// Returns the previous sink.
LogSink set_log_sink(LogSink sink);

/// Info messages reach the default stderr sink only when verbose is on.
void set_log_verbose(bool verbose);

void log_info(std::string_view message);
void log_warning(std::string_view message);

}  // namespace lail
