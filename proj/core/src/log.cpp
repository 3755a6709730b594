#include "lail/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>
#include <utility>

namespace lail {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

LogSink& current_sink() {
  static LogSink sink;
  return sink;
}

std::atomic<bool> verbose{false};

void emit(LogLevel level, std::string_view message) {
  std::lock_guard lock(sink_mutex());
  if (auto& sink = current_sink()) {
    sink(level, message);
    return;
  }
  if (level == LogLevel::info && !verbose.load()) return;
  std::cerr << (level == LogLevel::warning ? "warning: " : "") << message << '\n';
}

}  // namespace

LogSink set_log_sink(LogSink sink) {
  std::lock_guard lock(sink_mutex());
  return std::exchange(current_sink(), std::move(sink));
}

void set_log_verbose(bool on) { verbose.store(on); }

void log_info(std::string_view message) { emit(LogLevel::info, message); }
void log_warning(std::string_view message) { emit(LogLevel::warning, message); }

}  // namespace lail
