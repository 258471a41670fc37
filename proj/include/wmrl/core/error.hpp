#pragma once

#include <stdexcept>
#include <string>

namespace wmrl {

enum class ErrorKind {
  shape,
  usage,
  config,
  numeric,
  format,
  io,
  training,
  calibration,
};

const char* to_string(ErrorKind kind);

/// Base exception for everything thrown by the library. The kind drives the
/// CLI exit code (see tools/wmrl_main.cpp).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void throw_error(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw_error(kind, message);
}

}  // namespace wmrl
