#pragma once

#include <stdexcept>
#include <string>

namespace tempov {

// Every failure raised by the library carries a short machine-readable kind so
// the CLI can map it onto an exit code and a one-line JSON diagnostic.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

  // User-facing errors (bad config, bad input files) map to exit code 1,
  // everything else is an internal failure.
  virtual bool user_error() const noexcept { return true; }

 private:
  std::string kind_;
};

#define TEMPOV_DEFINE_ERROR(Name, kind_str, is_user)                  \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& message) : Error(kind_str, message) {} \
    bool user_error() const noexcept override { return is_user; }     \
  };

TEMPOV_DEFINE_ERROR(ConfigError, "config", true)
TEMPOV_DEFINE_ERROR(ShapeError, "shape", true)
TEMPOV_DEFINE_ERROR(InputError, "input", true)
TEMPOV_DEFINE_ERROR(DataError, "data", true)
TEMPOV_DEFINE_ERROR(IoError, "io", true)
TEMPOV_DEFINE_ERROR(NumericError, "numeric", false)
TEMPOV_DEFINE_ERROR(StateError, "state", false)
TEMPOV_DEFINE_ERROR(ProtocolError, "protocol", false)
TEMPOV_DEFINE_ERROR(DegenerateError, "degenerate", true)
TEMPOV_DEFINE_ERROR(MetricError, "metric", true)

#undef TEMPOV_DEFINE_ERROR

}  // namespace tempov
