#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace redlesion {

enum class LogLevel { Quiet = 0, Warning = 1, Info = 2 };

void set_log_level(LogLevel level);
LogLevel log_level();

// Both write one line to standard error.
void log_warning(std::string_view message);
void log_info(std::string_view message);

/// Logs "<what>: <seconds> s" at info level when it goes out of scope.
class StageTimer {
 public:
  explicit StageTimer(std::string what) : what_(std::move(what)), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer();
  StageTimer(const StageTimer&) = delete;
  StageTimer& operator=(const StageTimer&) = delete;

 private:
  std::string what_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace redlesion
