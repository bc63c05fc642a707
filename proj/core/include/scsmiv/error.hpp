#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace scsmiv {

enum class ErrorCode {
  // input validation
  NegativeTime,
  NonFiniteValue,
  NonBinaryTreatment,
  UnsortedChanges,
  ConsecutiveEqualValues,
  MissingInitialValue,
  DuplicateId,
  MissingCovariates,
  HorizonTooShort,
  MissingColumn,
  UnknownSubjectInTreatmentFile,
  ParseError,
  InvalidConfig,
  // estimation
  NoEvents,
  DegenerateInstrument,
  NonConvergence,
  SingularDenominator,
  ZeroWeight,
  SingularSystem,
  // filesystem
  Io,
};

enum class ErrorCategory { Validation, Estimation, Io };

std::string_view to_string(ErrorCode code) noexcept;
ErrorCategory category_of(ErrorCode code) noexcept;

/// Process exit code for a failure category: 2 validation, 3 estimation, 4 I/O.
int exit_code_for(ErrorCategory category) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }
  /// The message without the code prefix carried by what().
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

struct ValidationIssue {
  ErrorCode code;
  std::string subject_id;
  std::string detail;
};

/// Raised by validate_subjects with every offending record, not just the first.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<ValidationIssue> issues);

  const std::vector<ValidationIssue>& issues() const noexcept { return issues_; }

 private:
  std::vector<ValidationIssue> issues_;
};

/// The IV denominator vanished (weak or non-identifying instrument) at `time`.
class SingularDenominatorError : public Error {
 public:
  SingularDenominatorError(double time, double value);

  double time() const noexcept { return time_; }
  double value() const noexcept { return value_; }

 private:
  double time_;
  double value_;
};

}  // namespace scsmiv
