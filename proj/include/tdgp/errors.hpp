#pragma once

#include <stdexcept>
#include <string>

namespace tdgp {

// Error categories surfaced by the CLI as `error: [category] message`.
enum class ErrorCategory { usage, io, format, config, data, numeric };

inline const char* to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::io: return "io";
    case ErrorCategory::format: return "format";
    case ErrorCategory::config: return "config";
    case ErrorCategory::data: return "data";
    case ErrorCategory::numeric: return "numeric";
  }
  return "unknown";
}

class TdgpError : public std::runtime_error {
 public:
  TdgpError(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}
  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

inline TdgpError usage_error(const std::string& m) { return {ErrorCategory::usage, m}; }
inline TdgpError io_error(const std::string& m) { return {ErrorCategory::io, m}; }
inline TdgpError format_error(const std::string& m) { return {ErrorCategory::format, m}; }
inline TdgpError config_error(const std::string& m) { return {ErrorCategory::config, m}; }
inline TdgpError data_error(const std::string& m) { return {ErrorCategory::data, m}; }
inline TdgpError numeric_error(const std::string& m) { return {ErrorCategory::numeric, m}; }

}  // namespace tdgp
