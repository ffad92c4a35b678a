#pragma once

#include <stdexcept>
#include <string>

namespace acdmsr {

enum class ErrorKind {
  shape,       // tensor / image dimensions disagree
  range,       // argument outside its valid domain
  non_finite,  // NaN or Inf where finite values are required
  io,          // file missing, unreadable, malformed
  config,      // bad or unknown configuration key
  data,        // dataset empty or inconsistent
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::shape: return "shape";
    case ErrorKind::range: return "range";
    case ErrorKind::non_finite: return "non-finite";
    case ErrorKind::io: return "io";
    case ErrorKind::config: return "config";
    case ErrorKind::data: return "data";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace acdmsr
