#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sdemem {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidConfiguration : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// A model function produced an unusable value (non-PSD diffusion, non-finite state).
class NumericalModelError : public Error {
 public:
  using Error::Error;
};

class DegenerateWeights : public Error {
 public:
  using Error::Error;
};

class DegenerateKernel : public Error {
 public:
  using Error::Error;
};

class UnsupportedModel : public Error {
 public:
  using Error::Error;
};

class InvalidState : public Error {
 public:
  using Error::Error;
};

/// ESS or correlation requested for a sample with zero variance.
class UndefinedStatistic : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `row` is 1-based and counts the header; 0 when unknown.
class InputError : public Error {
 public:
  InputError(const std::string& what, std::size_t row = 0) : Error(what), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

/// The initial likelihood evaluation of a unit was degenerate.
class StartupDegeneracy : public Error {
 public:
  StartupDegeneracy(const std::string& what, std::size_t unit) : Error(what), unit_(unit) {}
  std::size_t unit() const { return unit_; }

 private:
  std::size_t unit_;
};

}  // namespace sdemem
