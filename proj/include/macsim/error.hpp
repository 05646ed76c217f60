#pragma once

#include <stdexcept>
#include <string>

namespace macsim {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid generator / training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed .fjs text. Carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(int line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

// JSON document that does not match the instance schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A joint action containing a pair outside the feasible edge set.
class InfeasibleActionError : public Error {
 public:
  using Error::Error;
};

// A joint action in which no agent selected a real task.
class SkipRuleError : public Error {
 public:
  using Error::Error;
};

// Caller broke a precondition (terminal state, incomplete solution, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Exhaustive search exceeded its hard enumeration cap.
class BudgetError : public Error {
 public:
  using Error::Error;
};

}  // namespace macsim
