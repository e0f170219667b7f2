#pragma once

#include <stdexcept>
#include <string>

namespace eertrack {

/// Invalid configuration or precondition violated by caller-supplied data.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite value appeared during a numeric computation.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(where) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

}  // namespace eertrack
