#pragma once

#include <stdexcept>
#include <string>

namespace cyberdef {

/// A caller broke a documented precondition (bad action, shape mismatch, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid scenario, training config or file contents. `rule()` names the
/// check that failed, `line()` is 0 when no source line applies.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string rule, const std::string& message, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": [" + rule + "] " + message
                                    : "[" + rule + "] " + message),
        rule_(std::move(rule)),
        line_(line) {}

  const std::string& rule() const noexcept { return rule_; }
  int line() const noexcept { return line_; }

 private:
  std::string rule_;
  int line_;
};

}  // namespace cyberdef
