#pragma once

#include <stdexcept>
#include <string>

namespace wsdrive {

// Invalid inputs: bad config values, inconsistent fields, unusable windows.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A computation that could not reach its accuracy contract.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Resonant drive has no revival; kept apart so callers can branch on it.
class NoRevivalError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

}  // namespace wsdrive
