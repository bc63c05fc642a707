#include "scsmiv/error.hpp"

#include <cstdio>

#include <sstream>

namespace scsmiv {

namespace {

std::string format_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NegativeTime: return "NegativeTime";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::NonBinaryTreatment: return "NonBinaryTreatment";
    case ErrorCode::UnsortedChanges: return "UnsortedChanges";
    case ErrorCode::ConsecutiveEqualValues: return "ConsecutiveEqualValues";
    case ErrorCode::MissingInitialValue: return "MissingInitialValue";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::MissingCovariates: return "MissingCovariates";
    case ErrorCode::HorizonTooShort: return "HorizonTooShort";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::UnknownSubjectInTreatmentFile: return "UnknownSubjectInTreatmentFile";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::NoEvents: return "NoEvents";
    case ErrorCode::DegenerateInstrument: return "DegenerateInstrument";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::SingularDenominator: return "SingularDenominator";
    case ErrorCode::ZeroWeight: return "ZeroWeight";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NoEvents:
    case ErrorCode::DegenerateInstrument:
    case ErrorCode::NonConvergence:
    case ErrorCode::SingularDenominator:
    case ErrorCode::ZeroWeight:
    case ErrorCode::SingularSystem:
      return ErrorCategory::Estimation;
    case ErrorCode::Io:
      return ErrorCategory::Io;
    default:
      return ErrorCategory::Validation;
  }
}

int exit_code_for(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::Validation: return 2;
    case ErrorCategory::Estimation: return 3;
    case ErrorCategory::Io: return 4;
  }
  return 1;
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

namespace {

ErrorCode first_code(const std::vector<ValidationIssue>& issues) {
  return issues.empty() ? ErrorCode::InvalidConfig : issues.front().code;
}

std::string summarize(const std::vector<ValidationIssue>& issues) {
  std::ostringstream out;
  out << issues.size() << " invalid record(s)";
  constexpr std::size_t kShown = 5;
  for (std::size_t i = 0; i < issues.size() && i < kShown; ++i) {
    out << (i == 0 ? ": " : "; ") << to_string(issues[i].code) << " [subject " << issues[i].subject_id
        << "] " << issues[i].detail;
  }
  if (issues.size() > kShown) out << "; ...";
  return out.str();
}

}  // namespace

ValidationError::ValidationError(std::vector<ValidationIssue> issues)
    : Error(first_code(issues), summarize(issues)), issues_(std::move(issues)) {}

SingularDenominatorError::SingularDenominatorError(double time, double value)
    : Error(ErrorCode::SingularDenominator,
            "IV denominator A(t) = " + format_g(value) + " is below the floor at t = " + format_g(time)),
      time_(time),
      value_(value) {}

}  // namespace scsmiv
