#pragma once

#include <iosfwd>
#include <string_view>

namespace kgfuse {

enum class LogLevel { kInfo, kWarning };

// Destination for diagnostic messages; std::cerr until changed, nullptr
// silences. Not synchronized: set it before starting work.
void set_log_stream(std::ostream* stream);
std::ostream* log_stream();

void log_message(LogLevel level, std::string_view message);
inline void log_info(std::string_view m) { log_message(LogLevel::kInfo, m); }
inline void log_warning(std::string_view m) { log_message(LogLevel::kWarning, m); }

}  // namespace kgfuse
