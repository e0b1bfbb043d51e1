#pragma once

#include <chrono>
#include <cstdio>
#include <string>

namespace kqid {

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Round-trip-safe decimal form of a double. Identical input bits always give
// identical text, which keeps emitted CSV byte-stable across runs.
[[nodiscard]] inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace kqid
