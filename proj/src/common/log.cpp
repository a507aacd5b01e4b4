#include "kgfuse/log.hpp"

#include <iostream>

namespace kgfuse {

namespace {
std::ostream* g_stream = &std::cerr;
}

void set_log_stream(std::ostream* stream) { g_stream = stream; }
std::ostream* log_stream() { return g_stream; }

void log_message(LogLevel level, std::string_view message) {
  if (!g_stream) return;
  *g_stream << (level == LogLevel::kWarning ? "[warn] " : "[info] ") << message << '\n';
}

}  // namespace kgfuse
