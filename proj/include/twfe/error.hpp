#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace twfe {

enum class ErrorKind {
  NonFiniteIndex,
  BadFamilyData,
  EmptyPanel,
  NoConvergence,
  SingularHessian,
  NonNegativeHessian,
  TauTooLarge,
  RankDeficientConstraint,
  DegenerateVariance,
  IndefiniteHessian,
  SingularBlock,
  UnbalancedPanel,
  DuplicateCell,
  NonNumericField,
  ConfigError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonFiniteIndex: return "NonFiniteIndex";
    case ErrorKind::BadFamilyData: return "BadFamilyData";
    case ErrorKind::EmptyPanel: return "EmptyPanel";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::SingularHessian: return "SingularHessian";
    case ErrorKind::NonNegativeHessian: return "NonNegativeHessian";
    case ErrorKind::TauTooLarge: return "TauTooLarge";
    case ErrorKind::RankDeficientConstraint: return "RankDeficientConstraint";
    case ErrorKind::DegenerateVariance: return "DegenerateVariance";
    case ErrorKind::IndefiniteHessian: return "IndefiniteHessian";
    case ErrorKind::SingularBlock: return "SingularBlock";
    case ErrorKind::UnbalancedPanel: return "UnbalancedPanel";
    case ErrorKind::DuplicateCell: return "DuplicateCell";
    case ErrorKind::NonNumericField: return "NonNumericField";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Configuration and input errors map to exit code 2, numerical failures to 3.
inline bool is_config_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BadFamilyData:
    case ErrorKind::EmptyPanel:
    case ErrorKind::TauTooLarge:
    case ErrorKind::RankDeficientConstraint:
    case ErrorKind::UnbalancedPanel:
    case ErrorKind::DuplicateCell:
    case ErrorKind::NonNumericField:
    case ErrorKind::ConfigError:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace twfe
