#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace loopflow {

// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Parse failure in the block-expression DSL or in a spec file.
// Offsets are byte positions into the source text; line/column are 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, int line, int column, std::string expected,
             const std::string& msg)
      : Error("parse error at " + std::to_string(line) + ":" +
              std::to_string(column) + ": " + msg +
              (expected.empty() ? "" : " (expected " + expected + ")")),
        offset(offset),
        line(line),
        column(column),
        expected(std::move(expected)) {}

  std::size_t offset;
  int line;
  int column;
  std::string expected;
};

// The four loop delays sum to zero, or the sample-level dependency graph
// has a cycle.
class DelayViolation : public Error {
 public:
  using Error::Error;
};

// An expression references an undeclared signal, a sample before the
// signal's prologue, or a future sample.
class DanglingReference : public Error {
 public:
  using Error::Error;
};

// A block references its loop input closer than its declared delay.
class CausalityViolation : public Error {
 public:
  using Error::Error;
};

// A pmf whose mass differs from 1 by more than 1e-12, or with negative
// entries, or of the wrong arity.
class BadPmf : public Error {
 public:
  using Error::Error;
};

// Alphabet size outside 1..16.
class AlphabetOverflow : public Error {
 public:
  using Error::Error;
};

// An independence pattern references a signal that is not exogenous.
class UnknownSignal : public Error {
 public:
  using Error::Error;
};

// Evaluation environment is missing a referenced sample. Indicates an
// engine bug; never raised for validated systems with complete inputs.
class MissingSample : public Error {
 public:
  using Error::Error;
};

// Exact computation would exceed the configured atom or leaf budget.
class BudgetExceeded : public Error {
 public:
  BudgetExceeded(const std::string& what, double required, double budget)
      : Error(what + ": requires " + format_count(required) + " vs budget " +
              format_count(budget)),
        required(required),
        budget(budget) {}

  double required;
  double budget;

 private:
  static std::string format_count(double v);
};

// Conditioning on an event of zero probability.
class ZeroMassEvent : public Error {
 public:
  using Error::Error;
};

// A measure references a variable absent from the table it is given.
class VariableMissing : public Error {
 public:
  using Error::Error;
};

// FSM compilation requires i.i.d.-across-time exogenous groups in the
// observed region.
class NonIIDExogenous : public Error {
 public:
  using Error::Error;
};

}  // namespace loopflow
