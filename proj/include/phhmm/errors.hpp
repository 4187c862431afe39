#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace phhmm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function (e.g. a
/// non-positive rate).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Every state assigns zero probability to an observed count.
class DegenerateEmissionError : public Error {
 public:
  DegenerateEmissionError(std::size_t record, const std::string& what)
      : Error(what), record_(record) {}
  std::size_t record() const noexcept { return record_; }

 private:
  std::size_t record_;
};

/// A latent state received (numerically) no posterior mass.
class StateStarvationError : public Error {
 public:
  StateStarvationError(int state, const std::string& what) : Error(what), state_(state) {}
  int state() const noexcept { return state_; }

 private:
  int state_;
};

class SingularDesignError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver ran out of iterations. Carries the objective trace.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> trace = {})
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

/// Two mixture components converged onto the same mean.
class DegenerateMixtureError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `line` is 1-based, 0 when not tied to a line.
class InputError : public Error {
 public:
  InputError(const std::string& what, std::size_t line = 0) : Error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace phhmm
