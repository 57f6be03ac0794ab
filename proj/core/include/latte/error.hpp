#ifndef LATTE_ERROR_HPP
#define LATTE_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace latte {

// Every failure the library can raise, by contract name. CLI maps
// validation-type codes to exit 1 and runtime-type codes to exit 2.
enum class ErrorCode {
  ZeroVector,
  DimMismatch,
  BadClass,
  BadClient,
  BadMagic,
  TruncatedFile,
  ChecksumMismatch,
  LabelOutOfRange,
  EmptyMemory,
  EmptyDomain,
  DomainError,
  InvalidArgument,
  BadConfig,
  IoError,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace latte

#endif  // LATTE_ERROR_HPP
