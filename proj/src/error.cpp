#include "genrestat/error.hpp"

namespace genrestat {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kContractViolation: return "contract-violation";
    case ErrorKind::kInvalidSignature: return "invalid-signature";
    case ErrorKind::kIo: return "io-error";
    case ErrorKind::kUnsupportedFormat: return "unsupported-format";
    case ErrorKind::kCorruptFile: return "corrupt-file";
    case ErrorKind::kProgrammeTooShort: return "programme-too-short";
    case ErrorKind::kNumericOverflow: return "numeric-overflow";
    case ErrorKind::kDegenerateTraining: return "degenerate-training";
    case ErrorKind::kFormat: return "format-error";
    case ErrorKind::kInvalidProbabilities: return "invalid-probabilities";
    case ErrorKind::kEmptyProgramme: return "empty-programme";
    case ErrorKind::kInvariantViolation: return "invariant-violation";
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kInsufficientData: return "insufficient-data";
    case ErrorKind::kIncompleteDataset: return "incomplete-dataset";
    case ErrorKind::kFractionTooSmall: return "fraction-too-small";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace genrestat
