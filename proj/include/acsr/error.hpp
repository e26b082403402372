#pragma once

#include <stdexcept>
#include <string>

namespace acsr {

/// Base of every error raised by the library. `kind()` names the failure
/// class so the CLI can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define ACSR_DEFINE_ERROR(Name)                                     \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  };

ACSR_DEFINE_ERROR(InsufficientData)
ACSR_DEFINE_ERROR(MalformedInput)
ACSR_DEFINE_ERROR(InvalidConfig)
ACSR_DEFINE_ERROR(InfeasibleAlignment)
ACSR_DEFINE_ERROR(OracleLimit)
ACSR_DEFINE_ERROR(EmptyDecode)
ACSR_DEFINE_ERROR(ScorerUnavailable)
ACSR_DEFINE_ERROR(UndefinedScore)

#undef ACSR_DEFINE_ERROR

/// Raised when training produces a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(int epoch, const std::string& what)
      : Error("DivergenceError", "epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace acsr
