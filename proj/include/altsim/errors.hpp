// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace altsim {

/// Shapes of operands disagree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition on arguments or call order was violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// A NaN or Inf showed up in a computed quantity. `where()` names the gate,
/// layer or op that produced it.
class NumericFault : public std::runtime_error {
 public:
  NumericFault(std::string where, const std::string& what)
      : std::runtime_error(what), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// Malformed, truncated or version-mismatched file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Explicit integrator blew up. `step()` is the global substep index,
/// `frame()` the output frame it belongs to.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, std::size_t frame, const std::string& what)
      : std::runtime_error(what), step_(step), frame_(frame) {}
  std::size_t step() const noexcept { return step_; }
  std::size_t frame() const noexcept { return frame_; }

 private:
  std::size_t step_;
  std::size_t frame_;
};

}  // namespace altsim
