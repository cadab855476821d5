#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ezcoal {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A state component became NaN or infinite during integration.
class NonFiniteState : public Error {
 public:
  NonFiniteState(std::size_t node, double time, std::size_t component, const std::string& what)
      : Error(what), node_(node), time_(time), component_(component) {}

  std::size_t node() const noexcept { return node_; }
  double time() const noexcept { return time_; }
  std::size_t component() const noexcept { return component_; }

 private:
  std::size_t node_;
  double time_;
  std::size_t component_;
};

/// A value-function factor left the positive half-line.
class PositivityLoss : public Error {
 public:
  PositivityLoss(double time, std::size_t component, const std::string& what)
      : Error(what), time_(time), component_(component) {}

  double time() const noexcept { return time_; }
  std::size_t component() const noexcept { return component_; }

 private:
  double time_;
  std::size_t component_;
};

class BadEpsilon : public Error {
 public:
  using Error::Error;
};

class NotCRRA : public Error {
 public:
  using Error::Error;
};

class GridMismatch : public Error {
 public:
  using Error::Error;
};

class NonPositiveWealth : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ezcoal
