#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace genrestat {

enum class ErrorKind {
  kContractViolation,
  kInvalidSignature,
  kIo,
  kUnsupportedFormat,
  kCorruptFile,
  kProgrammeTooShort,
  kNumericOverflow,
  kDegenerateTraining,
  kFormat,
  kInvalidProbabilities,
  kEmptyProgramme,
  kInvariantViolation,
  kInvalidInput,
  kInsufficientData,
  kIncompleteDataset,
  kFractionTooSmall,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries one of the kinds above so the
// CLI can map it to an exit code and tests can assert on the category.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorKind::kContractViolation, message);
}

}  // namespace genrestat
