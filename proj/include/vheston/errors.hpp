#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vheston {

// Argument outside the mathematical domain of an operation (K(0) for a
// singular kernel, lambda = 0 in the forward variance, an implied-vol target
// outside the no-arbitrage band, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Caller wired incompatible objects together: grids that differ, a strategy
// built for another utility, a tilted measure whose lambda disagrees with
// the model.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical breakdown. `node` is the grid index (or path index for the
// Monte Carlo engine) where it was detected.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, std::size_t node)
      : std::runtime_error(what + " (index " + std::to_string(node) + ")"),
        node_(node) {}

  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

// A result violates a property the theory guarantees; signals a numerics bug.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace vheston
